//! Frame-relative feature scaling. All math stays in f64; the f32 cut
//! happens once, at batch assembly, so round-trips here survive well
//! under pixel resolution.

use crate::pose::{BodyAngles12, BoundingBox, Keypoints13};

/// (x/W, y/H, x/W, y/H) — values in [0,1] for boxes inside the frame.
pub fn normalize_box(b: &BoundingBox, frame_width: f64, frame_height: f64) -> [f64; 4] {
    [
        b.x_min / frame_width,
        b.y_min / frame_height,
        b.x_max / frame_width,
        b.y_max / frame_height,
    ]
}

pub fn denormalize_box(v: [f64; 4], frame_width: f64, frame_height: f64) -> BoundingBox {
    BoundingBox {
        x_min: v[0] * frame_width,
        y_min: v[1] * frame_height,
        x_max: v[2] * frame_width,
        y_max: v[3] * frame_height,
    }
}

/// 26-vector: (x/W, y/H) per joint in canonical order; confidence dropped.
pub fn normalize_keypoints(kp: &Keypoints13, frame_width: f64, frame_height: f64) -> [f64; 26] {
    let mut out = [0.0; 26];
    for (i, p) in kp.points().iter().enumerate() {
        out[2 * i] = p.x / frame_width;
        out[2 * i + 1] = p.y / frame_height;
    }
    out
}

/// deg/180 per slot; the neutral 180° of invalid slots maps to 1.
pub fn normalize_angles(a: &BodyAngles12) -> [f64; 12] {
    a.degrees.map(|d| d / 180.0)
}
