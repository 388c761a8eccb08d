//! Joint-centered articulation angles from a 13-point skeleton.

use crate::pose::{joint, Keypoints13};

pub const ANGLE_NAMES: [&str; 12] = [
    "neck_l", "neck_r", "armpit_l", "armpit_r", "elbow_l", "elbow_r", "torso_l", "torso_r",
    "thigh_l", "thigh_r", "knee_l", "knee_r",
];

/// Unsigned angles in degrees ∈ [0,180], canonical order as in
/// [`ANGLE_NAMES`]. A slot is `valid=false` when one of its rays was
/// shorter than 1e-6 px; its angle is pinned to the neutral 180°.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyAngles12 {
    pub degrees: [f64; 12],
    pub valid: [bool; 12],
}

const DEGENERATE_RAY: f64 = 1e-6;

/// Angle at `vertex` between the rays toward `a` and toward `b`:
/// arccos of the normalized dot product, clamped to [−1,1] so collinear
/// rounding noise cannot produce NaN.
fn angle_at(vertex: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, bool) {
    let (ux, uy) = (a.0 - vertex.0, a.1 - vertex.1);
    let (vx, vy) = (b.0 - vertex.0, b.1 - vertex.1);
    let nu = (ux * ux + uy * uy).sqrt();
    let nv = (vx * vx + vy * vy).sqrt();
    if nu < DEGENERATE_RAY || nv < DEGENERATE_RAY {
        return (180.0, false);
    }
    let cos = ((ux * vx + uy * vy) / (nu * nv)).clamp(-1.0, 1.0);
    (cos.acos().to_degrees(), true)
}

pub fn compute_angles(kp: &Keypoints13) -> BodyAngles12 {
    use joint::*;
    let p = |i: usize| {
        let pt = kp.point(i);
        (pt.x, pt.y)
    };
    let mid_shoulder = {
        let l = p(L_SHOULDER);
        let r = p(R_SHOULDER);
        ((l.0 + r.0) / 2.0, (l.1 + r.1) / 2.0)
    };
    // (vertex, ray target, ray target) per canonical slot
    let triples = [
        (mid_shoulder, p(NOSE), p(L_SHOULDER)),
        (mid_shoulder, p(NOSE), p(R_SHOULDER)),
        (p(L_SHOULDER), p(L_ELBOW), p(R_SHOULDER)),
        (p(R_SHOULDER), p(R_ELBOW), p(L_SHOULDER)),
        (p(L_ELBOW), p(L_WRIST), p(L_SHOULDER)),
        (p(R_ELBOW), p(R_WRIST), p(R_SHOULDER)),
        (p(L_HIP), p(L_SHOULDER), p(L_KNEE)),
        (p(R_HIP), p(R_SHOULDER), p(R_KNEE)),
        (p(L_HIP), p(L_KNEE), p(R_HIP)),
        (p(R_HIP), p(R_KNEE), p(L_HIP)),
        (p(L_KNEE), p(L_ANKLE), p(L_HIP)),
        (p(R_KNEE), p(R_ANKLE), p(R_HIP)),
    ];
    let mut degrees = [0.0; 12];
    let mut valid = [false; 12];
    for (i, (v, a, b)) in triples.into_iter().enumerate() {
        let (deg, ok) = angle_at(v, a, b);
        degrees[i] = deg;
        valid[i] = ok;
    }
    BodyAngles12 { degrees, valid }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::rng::RngState;
    use crate::pose::Keypoint;

    fn skeleton(coords: [(f64, f64); 13]) -> Keypoints13 {
        let pts = coords.map(|(x, y)| Keypoint {
            x,
            y,
            confidence: 1.0,
        });
        Keypoints13::new(pts).unwrap()
    }

    /// Independent formula for the same quantity: unsigned angle via
    /// atan2(|cross|, dot), which never needs clamping.
    fn oracle_angle(vertex: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        let (ux, uy) = (a.0 - vertex.0, a.1 - vertex.1);
        let (vx, vy) = (b.0 - vertex.0, b.1 - vertex.1);
        let cross = (ux * vy - uy * vx).abs();
        let dot = ux * vx + uy * vy;
        cross.atan2(dot).to_degrees()
    }

    fn random_skeleton(seed: u64) -> Keypoints13 {
        let mut rng = RngState::new(seed);
        let coords: [(f64, f64); 13] =
            std::array::from_fn(|_| (rng.uniform(0.0, 1920.0), rng.uniform(0.0, 1080.0)));
        skeleton(coords)
    }

    fn oracle_all(kp: &Keypoints13) -> [f64; 12] {
        use joint::*;
        let p = |i: usize| {
            let pt = kp.point(i);
            (pt.x, pt.y)
        };
        let mid = (
            (p(L_SHOULDER).0 + p(R_SHOULDER).0) / 2.0,
            (p(L_SHOULDER).1 + p(R_SHOULDER).1) / 2.0,
        );
        [
            oracle_angle(mid, p(NOSE), p(L_SHOULDER)),
            oracle_angle(mid, p(NOSE), p(R_SHOULDER)),
            oracle_angle(p(L_SHOULDER), p(L_ELBOW), p(R_SHOULDER)),
            oracle_angle(p(R_SHOULDER), p(R_ELBOW), p(L_SHOULDER)),
            oracle_angle(p(L_ELBOW), p(L_WRIST), p(L_SHOULDER)),
            oracle_angle(p(R_ELBOW), p(R_WRIST), p(R_SHOULDER)),
            oracle_angle(p(L_HIP), p(L_SHOULDER), p(L_KNEE)),
            oracle_angle(p(R_HIP), p(R_SHOULDER), p(R_KNEE)),
            oracle_angle(p(L_HIP), p(L_KNEE), p(R_HIP)),
            oracle_angle(p(R_HIP), p(R_KNEE), p(L_HIP)),
            oracle_angle(p(L_KNEE), p(L_ANKLE), p(L_HIP)),
            oracle_angle(p(R_KNEE), p(R_ANKLE), p(R_HIP)),
        ]
    }

    #[test]
    fn straight_limb_is_180() {
        let mut coords = [(50.0, 50.0); 13];
        coords[joint::L_SHOULDER] = (0.0, 0.0);
        coords[joint::L_ELBOW] = (0.0, 1.0);
        coords[joint::L_WRIST] = (0.0, 2.0);
        let a = compute_angles(&skeleton(coords));
        assert!((a.degrees[4] - 180.0).abs() < 1e-9);
        assert!(a.valid[4]);
    }

    #[test]
    fn perpendicular_elbow_is_90() {
        let mut coords = [(50.0, 50.0); 13];
        coords[joint::L_SHOULDER] = (0.0, 0.0);
        coords[joint::L_ELBOW] = (0.0, 1.0);
        coords[joint::L_WRIST] = (1.0, 1.0);
        let a = compute_angles(&skeleton(coords));
        assert!((a.degrees[4] - 90.0).abs() < 1e-9);
    }

    #[test]
    fn coincident_joints_yield_neutral_invalid_slot() {
        let mut coords = [(50.0, 50.0); 13];
        coords[joint::L_SHOULDER] = (0.0, 0.0);
        coords[joint::L_ELBOW] = (10.0, 10.0);
        coords[joint::L_WRIST] = (10.0, 10.0); // wrist ray collapses
        let a = compute_angles(&skeleton(coords));
        assert_eq!(a.degrees[4], 180.0);
        assert!(!a.valid[4]);
    }

    #[test]
    fn random_skeletons_match_independent_oracle() {
        for seed in 0..20 {
            let kp = random_skeleton(seed);
            let got = compute_angles(&kp);
            let want = oracle_all(&kp);
            for i in 0..12 {
                assert!(
                    (got.degrees[i] - want[i]).abs() < 1e-9,
                    "seed {} slot {}: {} vs {}",
                    seed,
                    i,
                    got.degrees[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn all_angles_stay_in_range_near_collinear() {
        // nearly collinear triples stress the clamp before arccos
        for seed in 0..200 {
            let mut rng = RngState::new(9000 + seed);
            let base = (rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0));
            let dir = rng.uniform(0.0, std::f64::consts::TAU);
            let coords: [(f64, f64); 13] = std::array::from_fn(|_| {
                let t = rng.uniform(-50.0, 50.0);
                let wobble = rng.uniform(-1e-9, 1e-9);
                (
                    base.0 + t * dir.cos() - wobble * dir.sin(),
                    base.1 + t * dir.sin() + wobble * dir.cos(),
                )
            });
            let a = compute_angles(&skeleton(coords));
            for (i, d) in a.degrees.iter().enumerate() {
                assert!(
                    (0.0..=180.0).contains(d) && d.is_finite(),
                    "seed {} slot {}: {}",
                    seed,
                    i,
                    d
                );
            }
        }
    }
}
