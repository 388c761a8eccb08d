//! Stacking trajectory samples into normalized feature tensors.

use crate::autodiff::{RngState, Tensor};
use crate::data::{Provenance, TrajectorySample};
use crate::error::{Error, Result};
use crate::pose::{compute_angles, normalize_angles, normalize_box, normalize_keypoints};

/// Which per-frame inputs the model sees alongside the bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum FeatureMode {
    #[serde(rename = "bbox")]
    BboxOnly,
    #[serde(rename = "bbox+pose")]
    BboxPose,
    #[serde(rename = "bbox+angle")]
    BboxAngle,
}

impl FeatureMode {
    /// Width of the pose feature vector, 0 when pose is unused.
    pub fn pose_width(self) -> usize {
        match self {
            FeatureMode::BboxOnly => 0,
            FeatureMode::BboxPose => 26,
            FeatureMode::BboxAngle => 12,
        }
    }

    pub fn uses_pose(self) -> bool {
        self != FeatureMode::BboxOnly
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bbox" => Ok(FeatureMode::BboxOnly),
            "bbox+pose" => Ok(FeatureMode::BboxPose),
            "bbox+angle" => Ok(FeatureMode::BboxAngle),
            other => Err(Error::Usage(format!(
                "unknown feature mode '{}' (expected bbox, bbox+pose, or bbox+angle)",
                other
            ))),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureMode::BboxOnly => "bbox",
            FeatureMode::BboxPose => "bbox+pose",
            FeatureMode::BboxAngle => "bbox+angle",
        })
    }
}

/// Per-sample metadata carried alongside the stacked tensors so rows can be
/// denormalized and given stable evaluation streams.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub provenance: Provenance,
    pub frame_width: u32,
    pub frame_height: u32,
}

/// Stacked normalized features for B samples sharing `L_o` and `ℓ_d`:
/// boxes `[B, L_o, 4]`, optional pose `[B, L_o, P]`, targets `[B, ℓ_d, 4]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub bbox_obs: Tensor,
    pub pose_obs: Option<Tensor>,
    pub targets: Tensor,
    pub rows: Vec<BatchRow>,
}

impl Batch {
    pub fn batch_size(&self) -> usize {
        self.rows.len()
    }

    pub fn obs_len(&self) -> usize {
        self.bbox_obs.shape()[1]
    }

    pub fn pred_len(&self) -> usize {
        self.targets.shape()[1]
    }

    pub fn pose_width(&self) -> usize {
        self.pose_obs.as_ref().map_or(0, |t| t.shape()[2])
    }

    /// Observed boxes at timestep `t` as a `[B, 4]` matrix.
    pub fn bbox_at(&self, t: usize) -> Tensor {
        slice_step(&self.bbox_obs, t)
    }

    /// Pose features at timestep `t` as a `[B, P]` matrix.
    pub fn pose_at(&self, t: usize) -> Option<Tensor> {
        self.pose_obs.as_ref().map(|p| slice_step(p, t))
    }

    /// Ground-truth future box at horizon step `i` as a `[B, 4]` matrix.
    pub fn target_at(&self, i: usize) -> Tensor {
        slice_step(&self.targets, i)
    }
}

fn slice_step(t3: &Tensor, t: usize) -> Tensor {
    let (b, l, w) = (t3.shape()[0], t3.shape()[1], t3.shape()[2]);
    assert!(t < l, "timestep {} out of range 0..{}", t, l);
    let mut data = Vec::with_capacity(b * w);
    for row in 0..b {
        let base = (row * l + t) * w;
        data.extend_from_slice(&t3.data()[base..base + w]);
    }
    Tensor::from_vec(vec![b, w], data).expect("slice of a valid tensor")
}

fn pose_features(sample: &TrajectorySample, mode: FeatureMode, t: usize) -> Result<Vec<f32>> {
    let kp = sample.observed_keypoints[t].as_ref().ok_or_else(|| {
        Error::Data(format!(
            "sample {}/{} @{} lacks keypoints on observed frame {} required by feature mode {}",
            sample.provenance.video_id,
            sample.provenance.track_id,
            sample.provenance.start_frame,
            t,
            mode
        ))
    })?;
    let (w, h) = (sample.frame_width as f64, sample.frame_height as f64);
    let vals: Vec<f64> = match mode {
        FeatureMode::BboxOnly => unreachable!("no pose features in bbox-only mode"),
        FeatureMode::BboxPose => normalize_keypoints(kp, w, h).to_vec(),
        FeatureMode::BboxAngle => normalize_angles(&compute_angles(kp)).to_vec(),
    };
    Ok(vals.into_iter().map(|v| v as f32).collect())
}

fn stack(samples: &[&TrajectorySample], mode: FeatureMode) -> Result<Batch> {
    let b = samples.len();
    let obs_len = samples[0].obs_len();
    let pred_len = samples[0].pred_len();
    for s in samples {
        if s.obs_len() != obs_len || s.pred_len() != pred_len {
            return Err(Error::Data(format!(
                "mixed window lengths in batch: {}x{} vs {}x{}",
                obs_len,
                pred_len,
                s.obs_len(),
                s.pred_len()
            )));
        }
    }

    let mut bbox = Vec::with_capacity(b * obs_len * 4);
    let mut pose = Vec::with_capacity(b * obs_len * mode.pose_width());
    let mut targets = Vec::with_capacity(b * pred_len * 4);
    let mut rows = Vec::with_capacity(b);
    for s in samples {
        let (w, h) = (s.frame_width as f64, s.frame_height as f64);
        for (t, bx) in s.observed_boxes.iter().enumerate() {
            bbox.extend(normalize_box(bx, w, h).iter().map(|&v| v as f32));
            if mode.uses_pose() {
                pose.extend(pose_features(s, mode, t)?);
            }
        }
        for bx in &s.future_boxes {
            targets.extend(normalize_box(bx, w, h).iter().map(|&v| v as f32));
        }
        rows.push(BatchRow {
            provenance: s.provenance.clone(),
            frame_width: s.frame_width,
            frame_height: s.frame_height,
        });
    }

    Ok(Batch {
        bbox_obs: Tensor::from_vec(vec![b, obs_len, 4], bbox)?,
        pose_obs: if mode.uses_pose() {
            Some(Tensor::from_vec(vec![b, obs_len, mode.pose_width()], pose)?)
        } else {
            None
        },
        targets: Tensor::from_vec(vec![b, pred_len, 4], targets)?,
        rows,
    })
}

/// Groups samples into batches of `batch_size` (final partial batch kept),
/// optionally shuffling with `rng` first. Order is deterministic for a
/// given seed.
pub fn make_batches(
    samples: &[TrajectorySample],
    mode: FeatureMode,
    batch_size: usize,
    rng: &mut RngState,
    shuffle: bool,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Usage("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let picked: Vec<&TrajectorySample> = chunk.iter().map(|&i| &samples[i]).collect();
            stack(&picked, mode)
        })
        .collect()
}
