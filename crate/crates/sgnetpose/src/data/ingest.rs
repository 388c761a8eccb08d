//! Line-delimited JSON annotation reader.
//!
//! Wire format, one object per line:
//! `{"video_id": str, "frame": int, "width": int, "height": int,
//!   "track_id": str, "bbox": [x_min,y_min,x_max,y_max],
//!   "keypoints": 13×[x,y,confidence] | null}`

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FrameAnnotation;
use crate::error::{Error, Result};
use crate::pose::{BoundingBox, Keypoint, Keypoints13};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct WireRecord {
    pub video_id: String,
    pub frame: i64,
    pub width: u32,
    pub height: u32,
    pub track_id: String,
    pub bbox: [f64; 4],
    pub keypoints: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct IngestStats {
    pub lines: usize,
    pub accepted: usize,
    /// Unparseable or schema-violating lines.
    pub rejected_malformed: usize,
    /// Parsed fine but x_min > x_max or y_min > y_max.
    pub rejected_bbox_order: usize,
    /// Records whose coordinates had to be clamped into the frame.
    pub clamped: usize,
}

impl IngestStats {
    pub fn rejected(&self) -> usize {
        self.rejected_malformed + self.rejected_bbox_order
    }
}

pub fn ingest(path: &Path) -> Result<(Vec<FrameAnnotation>, IngestStats)> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file)
}

pub fn ingest_reader<R: Read>(reader: R) -> Result<(Vec<FrameAnnotation>, IngestStats)> {
    let mut stats = IngestStats::default();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        match parse_line(&line) {
            Ok(Parsed::Annotation { ann, clamped }) => {
                if clamped {
                    stats.clamped += 1;
                    log::debug!("line {}: coordinates clamped to frame bounds", line_no);
                }
                stats.accepted += 1;
                out.push(ann);
            }
            Ok(Parsed::BadBoxOrder) => {
                stats.rejected_bbox_order += 1;
                log::warn!("line {}: bounding box corners out of order, rejected", line_no);
            }
            Err(e) => {
                stats.rejected_malformed += 1;
                log::warn!("line {}: {}", line_no, e);
            }
        }
    }
    Ok((out, stats))
}

enum Parsed {
    Annotation { ann: FrameAnnotation, clamped: bool },
    BadBoxOrder,
}

fn parse_line(line: &str) -> Result<Parsed> {
    let rec: WireRecord =
        serde_json::from_str(line).map_err(|e| Error::Data(format!("malformed record: {}", e)))?;
    if rec.frame < 0 {
        return Err(Error::Data(format!("negative frame index {}", rec.frame)));
    }
    if rec.width == 0 || rec.height == 0 {
        return Err(Error::Data("zero frame dimension".into()));
    }
    let [x0, y0, x1, y1] = rec.bbox;
    if rec.bbox.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite bbox coordinate".into()));
    }
    if x0 > x1 || y0 > y1 {
        return Ok(Parsed::BadBoxOrder);
    }
    let (w, h) = (rec.width as f64, rec.height as f64);
    let mut clamped = false;
    let mut cl = |v: f64, hi: f64| {
        let c = v.clamp(0.0, hi);
        if c != v {
            clamped = true;
        }
        c
    };
    let bbox = BoundingBox::new(cl(x0, w), cl(y0, h), cl(x1, w), cl(y1, h))?;
    let keypoints = match rec.keypoints {
        None => None,
        Some(pts) => {
            if pts.len() != 13 {
                return Err(Error::Data(format!("{} keypoints, expected 13", pts.len())));
            }
            let mut arr = [Keypoint {
                x: 0.0,
                y: 0.0,
                confidence: 0.0,
            }; 13];
            for (i, [x, y, c]) in pts.into_iter().enumerate() {
                arr[i] = Keypoint {
                    x: cl(x, w),
                    y: cl(y, h),
                    confidence: c,
                };
            }
            Some(Keypoints13::new(arr)?)
        }
    };
    Ok(Parsed::Annotation {
        ann: FrameAnnotation {
            video_id: rec.video_id,
            track_id: rec.track_id,
            frame: rec.frame,
            frame_width: rec.width,
            frame_height: rec.height,
            bbox,
            keypoints,
        },
        clamped,
    })
}

/// Serialize one annotation back to its wire line (no trailing newline).
pub fn to_wire_line(ann: &FrameAnnotation) -> String {
    let rec = WireRecord {
        video_id: ann.video_id.clone(),
        frame: ann.frame,
        width: ann.frame_width,
        height: ann.frame_height,
        track_id: ann.track_id.clone(),
        bbox: ann.bbox.as_array(),
        keypoints: ann
            .keypoints
            .as_ref()
            .map(|kp| kp.points().iter().map(|p| [p.x, p.y, p.confidence]).collect()),
    };
    serde_json::to_string(&rec).expect("wire record serializes")
}
