//! Sliding-window sample assembly from per-frame annotations.

use std::collections::BTreeMap;

use crate::data::{FrameAnnotation, Provenance, TrajectorySample};

/// Mean keypoint confidence at or above this counts as "pose present".
pub const DEFAULT_POSE_CONFIDENCE: f64 = 0.3;

fn pose_present(ann: &FrameAnnotation, min_mean_confidence: f64) -> bool {
    ann.keypoints.as_ref().is_some_and(|kp| {
        let mean: f64 = kp.points().iter().map(|p| p.confidence).sum::<f64>() / 13.0;
        mean >= min_mean_confidence
    })
}

/// Cut every (video_id, track_id) group into maximal runs of consecutive
/// frames, then emit one sample per window of `obs_len + pred_len` frames,
/// with window starts every `stride` frames from each run's start. Runs
/// never span frame gaps, track boundaries, or frame-dimension changes.
///
/// With `require_pose`, windows where any *observed* frame lacks usable
/// keypoints are dropped (future frames only ever contribute boxes).
pub fn build_samples(
    annotations: &[FrameAnnotation],
    obs_len: usize,
    pred_len: usize,
    stride: usize,
    require_pose: bool,
    min_mean_confidence: f64,
) -> Vec<TrajectorySample> {
    assert!(obs_len >= 1 && pred_len >= 1 && stride >= 1);
    let total = obs_len + pred_len;
    let mut samples = Vec::new();
    for ((video_id, track_id), frames) in sorted_track_frames(annotations) {
        for run in consecutive_runs(&frames) {
            let mut start = 0;
            while start + total <= run.len() {
                let window = &run[start..start + total];
                let observed = &window[..obs_len];
                let usable = !require_pose
                    || observed.iter().all(|a| pose_present(a, min_mean_confidence));
                if usable {
                    samples.push(TrajectorySample {
                        provenance: Provenance {
                            video_id: video_id.to_string(),
                            track_id: track_id.to_string(),
                            start_frame: window[0].frame,
                            flipped: false,
                        },
                        frame_width: window[0].frame_width,
                        frame_height: window[0].frame_height,
                        observed_boxes: observed.iter().map(|a| a.bbox).collect(),
                        observed_keypoints: observed.iter().map(|a| a.keypoints.clone()).collect(),
                        future_boxes: window[obs_len..].iter().map(|a| a.bbox).collect(),
                    });
                }
                start += stride;
            }
        }
    }
    samples
}

/// One future-less sample per run: the run's *last* `obs_len` frames.
/// These are the windows live prediction consumes — predict from the most
/// recent history of each track, with nothing after it. Runs shorter than
/// `obs_len`, and (with `require_pose`) runs missing usable keypoints on a
/// kept frame, are skipped.
pub fn observation_windows(
    annotations: &[FrameAnnotation],
    obs_len: usize,
    require_pose: bool,
    min_mean_confidence: f64,
) -> Vec<TrajectorySample> {
    assert!(obs_len >= 1);
    let mut samples = Vec::new();
    for ((video_id, track_id), frames) in sorted_track_frames(annotations) {
        for run in consecutive_runs(&frames) {
            if run.len() < obs_len {
                continue;
            }
            let observed = &run[run.len() - obs_len..];
            if require_pose && !observed.iter().all(|a| pose_present(a, min_mean_confidence)) {
                continue;
            }
            samples.push(TrajectorySample {
                provenance: Provenance {
                    video_id: video_id.to_string(),
                    track_id: track_id.to_string(),
                    start_frame: observed[0].frame,
                    flipped: false,
                },
                frame_width: observed[0].frame_width,
                frame_height: observed[0].frame_height,
                observed_boxes: observed.iter().map(|a| a.bbox).collect(),
                observed_keypoints: observed.iter().map(|a| a.keypoints.clone()).collect(),
                future_boxes: Vec::new(),
            });
        }
    }
    samples
}

/// Per-track annotation lists sorted by frame with duplicates dropped
/// (first occurrence wins, with a warning).
fn sorted_track_frames(
    annotations: &[FrameAnnotation],
) -> Vec<((&str, &str), Vec<&FrameAnnotation>)> {
    let mut tracks: BTreeMap<(&str, &str), Vec<&FrameAnnotation>> = BTreeMap::new();
    for ann in annotations {
        tracks
            .entry((&ann.video_id, &ann.track_id))
            .or_default()
            .push(ann);
    }
    tracks
        .into_iter()
        .map(|((video_id, track_id), mut frames)| {
            frames.sort_by_key(|a| a.frame);
            frames.dedup_by(|b, a| {
                let dup = a.frame == b.frame;
                if dup {
                    log::warn!(
                        "{}/{}: duplicate annotation for frame {}, keeping first",
                        video_id,
                        track_id,
                        a.frame
                    );
                }
                dup
            });
            ((video_id, track_id), frames)
        })
        .collect()
}

/// Maximal slices where frame numbers increase by exactly 1 and frame
/// dimensions stay constant.
fn consecutive_runs<'a>(frames: &'a [&'a FrameAnnotation]) -> Vec<&'a [&'a FrameAnnotation]> {
    let mut runs = Vec::new();
    let mut begin = 0;
    for i in 1..=frames.len() {
        let broken = i == frames.len() || {
            let (prev, cur) = (frames[i - 1], frames[i]);
            cur.frame != prev.frame + 1
                || cur.frame_width != prev.frame_width
                || cur.frame_height != prev.frame_height
        };
        if broken {
            runs.push(&frames[begin..i]);
            begin = i;
        }
    }
    runs
}
