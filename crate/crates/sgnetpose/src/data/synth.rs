//! Synthetic pedestrian tracks with a plantable pose→motion signal.
//!
//! Each track walks at piecewise-constant velocity. Optionally one event
//! (turn left/right or stop) interrupts it, and the skeleton starts leaning
//! toward the imminent velocity change `lean_lead` frames *before* the
//! event: upper-body pose predicts the future where the box alone cannot.

use std::f64::consts::PI;

use crate::autodiff::RngState;
use crate::data::FrameAnnotation;
use crate::error::{Error, Result};
use crate::pose::{joint as joints, BoundingBox, Keypoint, Keypoints13};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_tracks: usize,
    pub frame_width: u32,
    pub frame_height: u32,
    pub track_len: usize,
    /// Generate one turn/stop event per track (off ⇒ pure constant velocity).
    pub events: bool,
    /// How many frames before its event a pedestrian starts leaning.
    pub lean_lead: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_tracks: 1,
            frame_width: 1920,
            frame_height: 1080,
            track_len: 60,
            events: true,
            lean_lead: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    TurnLeft,
    TurnRight,
    Stop,
}

/// Ground truth about the one event planted in a track, for tests and
/// dataset diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackEvent {
    pub video_id: String,
    pub track_id: String,
    pub frame: i64,
    pub kind: EventKind,
}

const MARGIN_X: f64 = 80.0;
const MARGIN_Y: f64 = 120.0;
const GAIT_PERIOD: f64 = 12.0;
const LEAN_FRACTION: f64 = 0.30; // shoulder lean, as a fraction of box width
const NOSE_LEAN_SCALE: f64 = 1.5;

struct TrackPlan {
    start: (f64, f64),
    v1: (f64, f64),
    v2: (f64, f64),
    event_frame: Option<usize>,
    kind: Option<EventKind>,
    box_w: f64,
    box_h: f64,
    size_phase: f64,
    gait_phase: f64,
}

impl TrackPlan {
    fn center(&self, t: usize) -> (f64, f64) {
        let tf = t as f64;
        match self.event_frame {
            Some(f) if t > f => {
                let ff = f as f64;
                (
                    self.start.0 + self.v1.0 * ff + self.v2.0 * (tf - ff),
                    self.start.1 + self.v1.1 * ff + self.v2.1 * (tf - ff),
                )
            }
            _ => (self.start.0 + self.v1.0 * tf, self.start.1 + self.v1.1 * tf),
        }
    }

    fn box_size(&self, t: usize) -> (f64, f64) {
        let s = 1.0 + 0.05 * (2.0 * PI * t as f64 / 40.0 + self.size_phase).sin();
        (self.box_w * s, self.box_h * s)
    }

    fn speed(&self, t: usize) -> f64 {
        let v = match self.event_frame {
            Some(f) if t > f => self.v2,
            _ => self.v1,
        };
        (v.0 * v.0 + v.1 * v.1).sqrt()
    }

    /// Lean ramp in [0, 1]: zero before `event − lean_lead`, first nonzero
    /// exactly there, full lean at the event, decaying back after it.
    fn lean_ramp(&self, t: usize, lead: usize) -> f64 {
        let Some(f) = self.event_frame else { return 0.0 };
        let (t, f, lead) = (t as i64, f as i64, lead.max(1) as i64);
        if t < f - lead {
            0.0
        } else if t <= f {
            (t - (f - lead) + 1) as f64 / lead as f64
        } else {
            (1.0 - (t - f) as f64 / lead as f64).max(0.0)
        }
    }

    /// Unit vector of the imminent velocity change (the direction the
    /// pedestrian is about to accelerate in).
    fn lean_dir(&self) -> (f64, f64) {
        let (dx, dy) = (self.v2.0 - self.v1.0, self.v2.1 - self.v1.1);
        let n = (dx * dx + dy * dy).sqrt();
        if n < 1e-12 {
            (0.0, 0.0)
        } else {
            (dx / n, dy / n)
        }
    }
}

fn plan_track(cfg: &SynthConfig, rng: &mut RngState) -> Result<TrackPlan> {
    let (w, h, t_len) = (cfg.frame_width as f64, cfg.frame_height as f64, cfg.track_len as f64);
    let box_w = rng.uniform(40.0, 70.0);
    let box_h = rng.uniform(120.0, 180.0);

    // Cap speed so the whole walk fits the frame without clamping; clamped
    // positions would bend the constant-velocity line.
    let cap = ((w - 2.0 * MARGIN_X).min(h - 2.0 * MARGIN_Y)) / (2.0 * t_len);
    if cap <= 0.0 {
        return Err(Error::Config(format!(
            "frame {}x{} too small for synthetic tracks (need > {}x{})",
            cfg.frame_width,
            cfg.frame_height,
            2.0 * MARGIN_X,
            2.0 * MARGIN_Y
        )));
    }
    let speed = rng.uniform(2.0, 5.0).min(cap);
    let heading = rng.uniform(0.0, 2.0 * PI);
    // Mostly-horizontal walking, like a road-crossing camera view.
    let v1 = (speed * heading.cos(), 0.3 * speed * heading.sin());

    let (event_frame, kind, v2) = if cfg.events {
        let f_lo = cfg.track_len / 3;
        let f_hi = cfg.track_len / 2;
        let f = f_lo + rng.next_below(f_hi - f_lo + 1);
        let u = rng.next_f64();
        let kind = if u < 0.4 {
            EventKind::TurnLeft
        } else if u < 0.8 {
            EventKind::TurnRight
        } else {
            EventKind::Stop
        };
        let v2 = match kind {
            EventKind::Stop => (0.0, 0.0),
            EventKind::TurnLeft | EventKind::TurnRight => {
                let theta = rng.uniform(35.0, 55.0).to_radians();
                let theta = if kind == EventKind::TurnLeft { theta } else { -theta };
                (
                    v1.0 * theta.cos() - v1.1 * theta.sin(),
                    v1.0 * theta.sin() + v1.1 * theta.cos(),
                )
            }
        };
        (Some(f), Some(kind), v2)
    } else {
        (None, None, v1)
    };

    // Displacement in either axis never exceeds speed·track_len, turns
    // included, so this start range keeps every box inside the frame.
    let room = speed * t_len;
    let start = (
        rng.uniform(MARGIN_X + room, w - MARGIN_X - room),
        rng.uniform(MARGIN_Y + room, h - MARGIN_Y - room),
    );

    Ok(TrackPlan {
        start,
        v1,
        v2,
        event_frame,
        kind,
        box_w,
        box_h,
        size_phase: rng.uniform(0.0, 2.0 * PI),
        gait_phase: rng.uniform(0.0, 2.0 * PI),
    })
}

/// Box-anchored skeleton template: (x offset in box widths, y offset in box
/// heights) from the box center, indexed by joint.
const TEMPLATE: [(f64, f64); 13] = [
    (0.00, -0.40),  // nose
    (-0.18, -0.25), // shoulders
    (0.18, -0.25),
    (-0.22, -0.05), // elbows
    (0.22, -0.05),
    (-0.24, 0.12), // wrists
    (0.24, 0.12),
    (-0.12, 0.05), // hips
    (0.12, 0.05),
    (-0.10, 0.28), // knees
    (0.10, 0.28),
    (-0.10, 0.45), // ankles
    (0.10, 0.45),
];

fn skeleton(
    plan: &TrackPlan,
    t: usize,
    lean_lead: usize,
    cx: f64,
    cy: f64,
    bw: f64,
    bh: f64,
    rng: &mut RngState,
) -> Keypoints13 {
    let phase = 2.0 * PI * t as f64 / GAIT_PERIOD + plan.gait_phase;
    // Gait amplitude follows speed so a stopped pedestrian stands still.
    let stride = (plan.speed(t) / 2.0).min(1.0);
    let swing = phase.sin() * stride;

    let ramp = plan.lean_ramp(t, lean_lead);
    let (ldx, ldy) = plan.lean_dir();
    let lean = (ramp * LEAN_FRACTION * bw * ldx, ramp * LEAN_FRACTION * bw * ldy);

    let mut pts = [Keypoint { x: 0.0, y: 0.0, confidence: 1.0 }; 13];
    for (j, &(ox, oy)) in TEMPLATE.iter().enumerate() {
        let mut x = cx + ox * bw;
        let y = cy + oy * bh;
        // Arms swing against the same-side leg; left and right alternate.
        let side = if ox < 0.0 { 1.0 } else { -1.0 };
        x += match j {
            joints::L_ELBOW | joints::R_ELBOW => 0.10 * bw * swing * side,
            joints::L_WRIST | joints::R_WRIST => 0.20 * bw * swing * side,
            joints::L_KNEE | joints::R_KNEE => -0.08 * bw * swing * side,
            joints::L_ANKLE | joints::R_ANKLE => -0.15 * bw * swing * side,
            _ => 0.0,
        };
        let (x, y) = match j {
            joints::NOSE => (x + NOSE_LEAN_SCALE * lean.0, y + NOSE_LEAN_SCALE * lean.1),
            joints::L_SHOULDER | joints::R_SHOULDER => (x + lean.0, y + lean.1),
            _ => (x, y),
        };
        pts[j] = Keypoint { x, y, confidence: rng.uniform(0.85, 1.0) };
    }
    Keypoints13::new(pts).expect("template coordinates are finite")
}

/// Like [`synth_generate`] but also reports each track's planted event.
pub fn synth_generate_with_events(
    cfg: &SynthConfig,
    rng: &RngState,
) -> Result<(Vec<FrameAnnotation>, Vec<TrackEvent>)> {
    if cfg.n_tracks == 0 {
        return Err(Error::Usage("need at least one synthetic track".into()));
    }
    if cfg.track_len < 4 {
        return Err(Error::Config("synthetic tracks need at least 4 frames".into()));
    }
    if cfg.events && cfg.lean_lead > cfg.track_len / 3 {
        return Err(Error::Config(format!(
            "lean lead {} exceeds earliest possible event frame {}",
            cfg.lean_lead,
            cfg.track_len / 3
        )));
    }

    let mut annotations = Vec::with_capacity(cfg.n_tracks * cfg.track_len);
    let mut events = Vec::new();
    for k in 0..cfg.n_tracks {
        let mut track_rng = rng.fork(k as u64);
        let plan = plan_track(cfg, &mut track_rng)?;
        let video_id = format!("clip{:03}", k);
        let track_id = "ped0".to_string();
        if let (Some(f), Some(kind)) = (plan.event_frame, plan.kind) {
            events.push(TrackEvent {
                video_id: video_id.clone(),
                track_id: track_id.clone(),
                frame: f as i64,
                kind,
            });
        }
        for t in 0..cfg.track_len {
            let (cx, cy) = plan.center(t);
            let (bw, bh) = plan.box_size(t);
            let kp = skeleton(&plan, t, cfg.lean_lead, cx, cy, bw, bh, &mut track_rng);
            annotations.push(FrameAnnotation {
                video_id: video_id.clone(),
                track_id: track_id.clone(),
                frame: t as i64,
                frame_width: cfg.frame_width,
                frame_height: cfg.frame_height,
                bbox: BoundingBox::new(cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0)?,
                keypoints: Some(kp),
            });
        }
    }
    Ok((annotations, events))
}

/// Generates `cfg.n_tracks` synthetic pedestrian tracks. Deterministic in
/// the passed RNG's seed; per-track substreams make the output independent
/// of generation order.
pub fn synth_generate(cfg: &SynthConfig, rng: &RngState) -> Result<Vec<FrameAnnotation>> {
    synth_generate_with_events(cfg, rng).map(|(a, _)| a)
}
