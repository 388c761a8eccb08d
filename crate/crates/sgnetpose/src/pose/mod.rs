//! Keypoint schema, body-angle geometry, mirroring, and normalization.

pub mod angles;
pub mod flip;
pub mod normalize;

pub use angles::{compute_angles, BodyAngles12, ANGLE_NAMES};
pub use flip::{flip_box, flip_horizontal, flip_keypoints};
pub use normalize::{
    denormalize_box, normalize_angles, normalize_box, normalize_keypoints,
};

use crate::error::{Error, Result};

/// Canonical joint indices: COCO order minus eyes/ears.
pub mod joint {
    pub const NOSE: usize = 0;
    pub const L_SHOULDER: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const L_ELBOW: usize = 3;
    pub const R_ELBOW: usize = 4;
    pub const L_WRIST: usize = 5;
    pub const R_WRIST: usize = 6;
    pub const L_HIP: usize = 7;
    pub const R_HIP: usize = 8;
    pub const L_KNEE: usize = 9;
    pub const R_KNEE: usize = 10;
    pub const L_ANKLE: usize = 11;
    pub const R_ANKLE: usize = 12;
}

/// Left/right slots exchanged by a horizontal mirror.
pub const FLIP_PAIRS: [(usize, usize); 6] = [(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// 13 detected joints in canonical order (see [`joint`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoints13 {
    points: [Keypoint; 13],
}

impl Keypoints13 {
    pub fn new(points: [Keypoint; 13]) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::Data(format!("keypoint {} has non-finite coords", i)));
            }
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(Error::Data(format!(
                    "keypoint {} confidence {} outside [0,1]",
                    i, p.confidence
                )));
            }
        }
        Ok(Keypoints13 { points })
    }

    pub fn point(&self, index: usize) -> Keypoint {
        self.points[index]
    }

    pub fn points(&self) -> &[Keypoint; 13] {
        &self.points
    }
}

/// Pixel-space box, corners ordered: x_min ≤ x_max, y_min ≤ y_max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if [x_min, y_min, x_max, y_max].iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("bounding box has non-finite coords".into()));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::Data(format!(
                "bounding box corners out of order: ({}, {}, {}, {})",
                x_min, y_min, x_max, y_max
            )));
        }
        Ok(b)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}
