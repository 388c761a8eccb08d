//! Annotation ingestion, track windowing, augmentation, batching, and
//! synthetic data generation.

pub mod augment;
pub mod batch;
pub mod ingest;
pub mod prepared;
pub mod synth;
pub mod window;

pub use augment::augment_flip;
pub use batch::{make_batches, Batch, BatchRow, FeatureMode};
pub use ingest::{ingest, to_wire_line, IngestStats};
pub use prepared::{
    build_prepared, split_of, Manifest, PrepareOptions, PreparedDataset, Split,
};
pub use synth::{synth_generate, synth_generate_with_events, EventKind, SynthConfig, TrackEvent};
pub use window::{build_samples, observation_windows};

use crate::pose::{BoundingBox, Keypoints13};

/// One pedestrian observation in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotation {
    pub video_id: String,
    pub track_id: String,
    pub frame: i64,
    pub frame_width: u32,
    pub frame_height: u32,
    pub bbox: BoundingBox,
    pub keypoints: Option<Keypoints13>,
}

/// Where a sample came from; doubles as its stable identity for
/// order-independent evaluation streams.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub video_id: String,
    pub track_id: String,
    pub start_frame: i64,
    pub flipped: bool,
}

impl Provenance {
    /// Stable label for deriving per-sample RNG substreams.
    pub fn stream_label(&self) -> u64 {
        let key = format!(
            "{}\u{0}{}\u{0}{}\u{0}{}",
            self.video_id, self.track_id, self.start_frame, self.flipped as u8
        );
        crate::autodiff::rng::stable_hash(key.as_bytes())
    }
}

/// One observation window plus its ground-truth future. Keypoints are
/// kept raw so any feature mode (and flip augmentation, which must
/// recompute angles) can be derived later.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub provenance: Provenance,
    pub frame_width: u32,
    pub frame_height: u32,
    pub observed_boxes: Vec<BoundingBox>,
    pub observed_keypoints: Vec<Option<Keypoints13>>,
    pub future_boxes: Vec<BoundingBox>,
}

impl TrajectorySample {
    pub fn obs_len(&self) -> usize {
        self.observed_boxes.len()
    }

    pub fn pred_len(&self) -> usize {
        self.future_boxes.len()
    }

    pub fn has_complete_pose(&self) -> bool {
        self.observed_keypoints.iter().all(|k| k.is_some())
    }
}
