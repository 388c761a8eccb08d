//! Horizontal-flip dataset doubling.

use crate::data::TrajectorySample;
use crate::pose::{flip_box, flip_keypoints};

fn mirror_sample(s: &TrajectorySample) -> TrajectorySample {
    let w = s.frame_width as f64;
    let mut m = s.clone();
    m.provenance.flipped = true;
    for b in m.observed_boxes.iter_mut().chain(m.future_boxes.iter_mut()) {
        *b = flip_box(b, w);
    }
    for kp in m.observed_keypoints.iter_mut().flatten() {
        *kp = flip_keypoints(kp, w);
    }
    m
}

/// Originals followed by their mirrors in the same order, so
/// `out[i] ↔ out[i + n]` is the flip bijection.
pub fn augment_flip(samples: &[TrajectorySample]) -> Vec<TrajectorySample> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    out.extend_from_slice(samples);
    out.extend(samples.iter().map(mirror_sample));
    out
}
