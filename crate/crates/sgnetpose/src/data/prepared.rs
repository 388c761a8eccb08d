//! Prepared-dataset layout: windowed samples split into train/val/test
//! directories plus a manifest.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::rng::stable_hash;
use crate::data::{augment_flip, build_samples, FrameAnnotation, Provenance, TrajectorySample};
use crate::error::{Error, Result};
use crate::pose::{BoundingBox, Keypoint, Keypoints13};
use crate::util::config_hash;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Assigns a whole track to a split by hashing its identity: 70/10/20.
/// Hash-based so the assignment never depends on dataset order or size.
pub fn split_of(video_id: &str, track_id: &str) -> Split {
    let key = format!("{}\u{0}{}", video_id, track_id);
    match stable_hash(key.as_bytes()) % 100 {
        0..=69 => Split::Train,
        70..=79 => Split::Val,
        _ => Split::Test,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrepareOptions {
    pub obs_len: usize,
    pub pred_len: usize,
    pub stride: usize,
    pub require_pose: bool,
    pub min_mean_confidence: f64,
    pub flip_augment: bool,
    /// Also mirror val/test. Inflates evaluation by counting each scene
    /// twice, so off by default; kept for parity with augmented-split
    /// dataset accounting.
    pub flip_all_splits: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            obs_len: 15,
            pred_len: 45,
            stride: 1,
            require_pose: true,
            min_mean_confidence: crate::data::window::DEFAULT_POSE_CONFIDENCE,
            flip_augment: false,
            flip_all_splits: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub obs_len: usize,
    pub pred_len: usize,
    pub stride: usize,
    pub require_pose: bool,
    pub min_mean_confidence: f64,
    pub flip_augment: bool,
    pub flip_all_splits: bool,
    pub counts: SplitCounts,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub manifest: Manifest,
    train: Vec<TrajectorySample>,
    val: Vec<TrajectorySample>,
    test: Vec<TrajectorySample>,
}

impl PreparedDataset {
    pub fn samples(&self, split: Split) -> &[TrajectorySample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Windows annotations into samples, assigns whole tracks to splits, and
/// optionally applies flip augmentation. Pure; see
/// [`PreparedDataset::write`] for the on-disk layout.
pub fn build_prepared(annotations: &[FrameAnnotation], opts: &PrepareOptions) -> Result<PreparedDataset> {
    if opts.obs_len == 0 || opts.pred_len == 0 || opts.stride == 0 {
        return Err(Error::Config(
            "obs-len, pred-len, and stride must all be at least 1".into(),
        ));
    }
    let mut per_split: [Vec<FrameAnnotation>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for ann in annotations {
        let idx = Split::ALL
            .iter()
            .position(|&s| s == split_of(&ann.video_id, &ann.track_id))
            .expect("every split is listed");
        per_split[idx].push(ann.clone());
    }

    let window = |anns: &[FrameAnnotation]| {
        build_samples(
            anns,
            opts.obs_len,
            opts.pred_len,
            opts.stride,
            opts.require_pose,
            opts.min_mean_confidence,
        )
    };
    let mut train = window(&per_split[0]);
    let mut val = window(&per_split[1]);
    let mut test = window(&per_split[2]);
    if opts.flip_augment {
        train = augment_flip(&train);
        if opts.flip_all_splits {
            val = augment_flip(&val);
            test = augment_flip(&test);
        }
    }

    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        obs_len: opts.obs_len,
        pred_len: opts.pred_len,
        stride: opts.stride,
        require_pose: opts.require_pose,
        min_mean_confidence: opts.min_mean_confidence,
        flip_augment: opts.flip_augment,
        flip_all_splits: opts.flip_all_splits,
        counts: SplitCounts { train: train.len(), val: val.len(), test: test.len() },
        config_hash: config_hash(opts),
    };
    Ok(PreparedDataset { manifest, train, val, test })
}

// On-disk form of one sample: one JSON object per line in
// <split>/samples.jsonl.
#[derive(Serialize, Deserialize)]
struct SampleRecord {
    video_id: String,
    track_id: String,
    start_frame: i64,
    flipped: bool,
    width: u32,
    height: u32,
    observed_boxes: Vec<[f64; 4]>,
    observed_keypoints: Vec<Option<Vec<[f64; 3]>>>,
    future_boxes: Vec<[f64; 4]>,
}

impl From<&TrajectorySample> for SampleRecord {
    fn from(s: &TrajectorySample) -> Self {
        let boxes = |bs: &[BoundingBox]| bs.iter().map(BoundingBox::as_array).collect();
        SampleRecord {
            video_id: s.provenance.video_id.clone(),
            track_id: s.provenance.track_id.clone(),
            start_frame: s.provenance.start_frame,
            flipped: s.provenance.flipped,
            width: s.frame_width,
            height: s.frame_height,
            observed_boxes: boxes(&s.observed_boxes),
            observed_keypoints: s
                .observed_keypoints
                .iter()
                .map(|kp| {
                    kp.as_ref().map(|kp| {
                        kp.points().iter().map(|p| [p.x, p.y, p.confidence]).collect()
                    })
                })
                .collect(),
            future_boxes: boxes(&s.future_boxes),
        }
    }
}

impl SampleRecord {
    fn into_sample(self) -> Result<TrajectorySample> {
        let boxes = |bs: Vec<[f64; 4]>| -> Result<Vec<BoundingBox>> {
            bs.into_iter()
                .map(|[a, b, c, d]| BoundingBox::new(a, b, c, d))
                .collect()
        };
        let keypoints = self
            .observed_keypoints
            .into_iter()
            .map(|kp| {
                kp.map(|pts| {
                    if pts.len() != 13 {
                        return Err(Error::Data(format!(
                            "sample keypoints need 13 joints, got {}",
                            pts.len()
                        )));
                    }
                    Keypoints13::new(std::array::from_fn(|i| Keypoint {
                        x: pts[i][0],
                        y: pts[i][1],
                        confidence: pts[i][2],
                    }))
                })
                .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectorySample {
            provenance: Provenance {
                video_id: self.video_id,
                track_id: self.track_id,
                start_frame: self.start_frame,
                flipped: self.flipped,
            },
            frame_width: self.width,
            frame_height: self.height,
            observed_boxes: boxes(self.observed_boxes)?,
            observed_keypoints: keypoints,
            future_boxes: boxes(self.future_boxes)?,
        })
    }
}

impl PreparedDataset {
    /// Writes `train/ val/ test/` each holding `samples.jsonl`, plus
    /// `manifest.json` at the root. Byte-deterministic for equal inputs.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for split in Split::ALL {
            let sub = dir.join(split.dir_name());
            fs::create_dir_all(&sub)?;
            let mut out = BufWriter::new(File::create(sub.join("samples.jsonl"))?);
            for s in self.samples(split) {
                let line = serde_json::to_string(&SampleRecord::from(s))
                    .map_err(|e| Error::Data(format!("sample serialization failed: {}", e)))?;
                writeln!(out, "{}", line)?;
            }
            out.flush()?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Data(format!("manifest serialization failed: {}", e)))?;
        fs::write(dir.join("manifest.json"), manifest + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.is_file() {
            return Err(Error::Data(format!(
                "no prepared dataset at {}: missing manifest.json",
                dir.display()
            )));
        }
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .map_err(|e| Error::Data(format!("bad manifest {}: {}", manifest_path.display(), e)))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Data(format!(
                "prepared dataset format v{} unsupported (expected v{})",
                manifest.format_version, MANIFEST_VERSION
            )));
        }
        let mut splits: [Vec<TrajectorySample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (i, split) in Split::ALL.into_iter().enumerate() {
            let path = dir.join(split.dir_name()).join("samples.jsonl");
            let reader = BufReader::new(File::open(&path)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| {
                    Error::Data(format!("{} line {}: {}", path.display(), lineno + 1, e))
                })?;
                splits[i].push(rec.into_sample()?);
            }
        }
        let [train, val, test] = splits;
        let counts = SplitCounts { train: train.len(), val: val.len(), test: test.len() };
        if counts != manifest.counts {
            return Err(Error::Data(format!(
                "manifest counts {:?} disagree with sample files {:?}",
                manifest.counts, counts
            )));
        }
        Ok(PreparedDataset { manifest, train, val, test })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::RngState;
    use crate::data::synth::{synth_generate, SynthConfig};

    fn annotations(n_tracks: usize, seed: u64) -> Vec<FrameAnnotation> {
        let cfg = SynthConfig { n_tracks, ..Default::default() };
        synth_generate(&cfg, &RngState::new(seed)).unwrap()
    }

    fn small_opts() -> PrepareOptions {
        PrepareOptions { obs_len: 8, pred_len: 12, ..Default::default() }
    }

    #[test]
    fn splits_are_disjoint_by_track_and_roughly_70_10_20() {
        let anns = annotations(200, 1);
        let ds = build_prepared(&anns, &small_opts()).unwrap();
        let total: usize = Split::ALL.iter().map(|&s| ds.samples(s).len()).sum();
        assert!(total > 0);
        let frac = |s: Split| ds.samples(s).len() as f64 / total as f64;
        assert!((0.55..0.85).contains(&frac(Split::Train)), "train {}", frac(Split::Train));
        assert!((0.03..0.20).contains(&frac(Split::Val)), "val {}", frac(Split::Val));
        assert!((0.10..0.32).contains(&frac(Split::Test)), "test {}", frac(Split::Test));
        for split in Split::ALL {
            for s in ds.samples(split) {
                assert_eq!(split_of(&s.provenance.video_id, &s.provenance.track_id), split);
            }
        }
    }

    #[test]
    fn flip_doubles_train_only_unless_all_splits() {
        let anns = annotations(60, 2);
        let base = build_prepared(&anns, &small_opts()).unwrap();
        let flipped = build_prepared(
            &anns,
            &PrepareOptions { flip_augment: true, ..small_opts() },
        )
        .unwrap();
        assert_eq!(flipped.manifest.counts.train, 2 * base.manifest.counts.train);
        assert_eq!(flipped.manifest.counts.val, base.manifest.counts.val);
        assert_eq!(flipped.manifest.counts.test, base.manifest.counts.test);
        let all = build_prepared(
            &anns,
            &PrepareOptions { flip_augment: true, flip_all_splits: true, ..small_opts() },
        )
        .unwrap();
        assert_eq!(all.manifest.counts.val, 2 * base.manifest.counts.val);
        assert_eq!(all.manifest.counts.test, 2 * base.manifest.counts.test);
    }

    #[test]
    fn write_then_load_round_trips() {
        let anns = annotations(20, 3);
        let ds = build_prepared(
            &anns,
            &PrepareOptions { flip_augment: true, ..small_opts() },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.write(dir.path()).unwrap();
        let loaded = PreparedDataset::load(dir.path()).unwrap();
        assert_eq!(loaded.manifest, ds.manifest);
        for split in Split::ALL {
            assert_eq!(loaded.samples(split), ds.samples(split));
        }
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let anns = annotations(15, 4);
        let ds = build_prepared(&anns, &small_opts()).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        ds.write(a.path()).unwrap();
        ds.write(b.path()).unwrap();
        for rel in ["manifest.json", "train/samples.jsonl", "val/samples.jsonl", "test/samples.jsonl"] {
            let x = fs::read(a.path().join(rel)).unwrap();
            let y = fs::read(b.path().join(rel)).unwrap();
            assert_eq!(x, y, "{} differs between runs", rel);
        }
    }

    #[test]
    fn load_rejects_missing_dir_and_bad_version() {
        let dir = tempfile::tempdir().unwrap();
        let err = PreparedDataset::load(&dir.path().join("nope")).unwrap_err();
        assert!(matches!(err, Error::Data(_)));

        let ds = build_prepared(&annotations(5, 5), &small_opts()).unwrap();
        ds.write(dir.path()).unwrap();
        let manifest_path = dir.path().join("manifest.json");
        let txt = fs::read_to_string(&manifest_path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        fs::write(&manifest_path, txt).unwrap();
        let err = PreparedDataset::load(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "got {:?}", err);
    }

    #[test]
    fn config_hash_tracks_options() {
        let anns = annotations(5, 6);
        let a = build_prepared(&anns, &small_opts()).unwrap();
        let b = build_prepared(&anns, &small_opts()).unwrap();
        let c = build_prepared(&anns, &PrepareOptions { stride: 2, ..small_opts() }).unwrap();
        assert_eq!(a.manifest.config_hash, b.manifest.config_hash);
        assert_ne!(a.manifest.config_hash, c.manifest.config_hash);
    }
}
