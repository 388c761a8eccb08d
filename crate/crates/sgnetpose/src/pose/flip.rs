//! Horizontal mirror geometry for augmentation.

use crate::pose::{BoundingBox, Keypoints13, FLIP_PAIRS};

/// x ↦ W − x, then left/right slots exchanged so the flipped skeleton is
/// anatomically labeled again. Exact whenever inputs and results share a
/// binary grid (integer or quarter-pixel annotations), which makes the
/// double flip an identity there.
pub fn flip_keypoints(kp: &Keypoints13, frame_width: f64) -> Keypoints13 {
    let mut pts = *kp.points();
    for p in &mut pts {
        p.x = frame_width - p.x;
    }
    for (l, r) in FLIP_PAIRS {
        pts.swap(l, r);
    }
    Keypoints13::new(pts).expect("mirror of valid keypoints stays valid")
}

/// Mirrored box keeps corner ordering: the new x_min comes from the old
/// x_max and vice versa.
pub fn flip_box(b: &BoundingBox, frame_width: f64) -> BoundingBox {
    BoundingBox {
        x_min: frame_width - b.x_max,
        y_min: b.y_min,
        x_max: frame_width - b.x_min,
        y_max: b.y_max,
    }
}

pub fn flip_horizontal(
    kp: &Keypoints13,
    b: &BoundingBox,
    frame_width: f64,
) -> (Keypoints13, BoundingBox) {
    (flip_keypoints(kp, frame_width), flip_box(b, frame_width))
}
