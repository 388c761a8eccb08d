//! Python bindings: skeleton geometry (joint angles, horizontal
//! mirroring), synthetic track generation, the full-model gradient check,
//! and checkpoint inference via [`Model`].
//!
//! Build as a cdylib and import as `sgnetpose_py`; `python/smoke_test.py`
//! at the repository root shows the whole round trip.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sgnetpose::autodiff::RngState;
use sgnetpose::data::{synth_generate, to_wire_line, Provenance, SynthConfig, TrajectorySample};
use sgnetpose::model::{load_checkpoint, ModelConfig, ParamSet};
use sgnetpose::pose::{
    compute_angles, flip_box, flip_keypoints, BoundingBox, Keypoint, Keypoints13, ANGLE_NAMES,
};
use sgnetpose::train::{full_model_check, predict_sample};
use sgnetpose::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::Data(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Shape(_) | Error::Check(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

/// 13 `(x, y, confidence)` triples in canonical joint order → [`Keypoints13`].
fn keypoints_from(points: Vec<(f64, f64, f64)>) -> PyResult<Keypoints13> {
    let arr: [(f64, f64, f64); 13] = points
        .try_into()
        .map_err(|v: Vec<_>| PyValueError::new_err(format!("expected 13 joints, got {}", v.len())))?;
    Keypoints13::new(arr.map(|(x, y, confidence)| Keypoint { x, y, confidence }))
        .map_err(to_py_err)
}

fn keypoints_to(kp: &Keypoints13) -> Vec<(f64, f64, f64)> {
    kp.points().iter().map(|p| (p.x, p.y, p.confidence)).collect()
}

/// Names of the twelve angle slots, in the order `body_angles` returns them.
#[pyfunction]
fn angle_names() -> Vec<String> {
    ANGLE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Joint-centered articulation angles of a 13-joint skeleton.
///
/// Takes 13 `(x, y, confidence)` triples; returns 12 `(degrees, valid)`
/// pairs. A slot is invalid when one of its rays is degenerate; its angle
/// is pinned to the neutral 180°.
#[pyfunction]
fn body_angles(points: Vec<(f64, f64, f64)>) -> PyResult<Vec<(f64, bool)>> {
    let angles = compute_angles(&keypoints_from(points)?);
    Ok(angles.degrees.into_iter().zip(angles.valid).collect())
}

/// Horizontally mirrors a skeleton inside a frame of the given width,
/// swapping left/right joints so the result is anatomically consistent.
#[pyfunction]
fn mirror_keypoints(points: Vec<(f64, f64, f64)>, frame_width: f64) -> PyResult<Vec<(f64, f64, f64)>> {
    Ok(keypoints_to(&flip_keypoints(&keypoints_from(points)?, frame_width)))
}

/// Horizontally mirrors an `(x_min, y_min, x_max, y_max)` box.
#[pyfunction]
fn mirror_box(b: (f64, f64, f64, f64), frame_width: f64) -> PyResult<(f64, f64, f64, f64)> {
    let bx = BoundingBox::new(b.0, b.1, b.2, b.3).map_err(to_py_err)?;
    let [x0, y0, x1, y1] = flip_box(&bx, frame_width).as_array();
    Ok((x0, y0, x1, y1))
}

/// Generates synthetic pedestrian tracks (optionally with a planted
/// turn/stop event preceded by an upper-body lean) and returns them as
/// wire-format JSON lines, one annotation per line.
#[pyfunction]
#[pyo3(signature = (tracks, track_len=60, seed=1, events=true))]
fn synth_tracks(tracks: usize, track_len: usize, seed: u64, events: bool) -> PyResult<Vec<String>> {
    let cfg = SynthConfig { n_tracks: tracks, track_len, events, ..Default::default() };
    let annotations = synth_generate(&cfg, &RngState::new(seed)).map_err(to_py_err)?;
    Ok(annotations.iter().map(to_wire_line).collect())
}

/// Finite-difference audit of the full training gradient on a small model.
/// Returns `(coordinates_checked, max_relative_error)`; raises if the
/// error exceeds `tolerance`.
#[pyfunction]
#[pyo3(signature = (seed=7, tolerance=1e-4))]
fn gradient_check(seed: u64, tolerance: f64) -> PyResult<(usize, f64)> {
    let report = full_model_check(seed, tolerance).map_err(to_py_err)?;
    Ok((report.coordinates, report.max_rel_err))
}

/// A trained checkpoint plus its configuration, ready for inference.
#[pyclass]
struct Model {
    cfg: ModelConfig,
    params: ParamSet,
}

#[pymethods]
impl Model {
    /// Loads `params.bin` + `manifest.json` from a checkpoint directory.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Model> {
        let (cfg, params) = load_checkpoint(std::path::Path::new(path)).map_err(to_py_err)?;
        Ok(Model { cfg, params })
    }

    /// Feature mode the checkpoint was trained with: `"bbox"`,
    /// `"bbox+pose"`, or `"bbox+angle"`.
    #[getter]
    fn feature_mode(&self) -> String {
        self.cfg.feature_mode.to_string()
    }

    /// Observation window length the model expects.
    #[getter]
    fn obs_len(&self) -> usize {
        self.cfg.obs_len
    }

    /// Number of future frames each prediction covers.
    #[getter]
    fn pred_len(&self) -> usize {
        self.cfg.pred_len
    }

    /// Predicts K future trajectories from one observation window.
    ///
    /// `observed_boxes` holds `obs_len` pixel-space `(x_min, y_min, x_max,
    /// y_max)` boxes; pose-conditioned checkpoints additionally need
    /// `observed_keypoints`, one list of 13 `(x, y, confidence)` triples
    /// per observed frame. `k=1` predicts the prior mean deterministically;
    /// larger K draws that many latent samples. Returns K trajectories of
    /// `pred_len` pixel-space boxes.
    #[pyo3(signature = (observed_boxes, observed_keypoints=None, frame_width=1920, frame_height=1080, k=1, seed=1))]
    fn predict(
        &self,
        observed_boxes: Vec<(f64, f64, f64, f64)>,
        observed_keypoints: Option<Vec<Vec<(f64, f64, f64)>>>,
        frame_width: u32,
        frame_height: u32,
        k: usize,
        seed: u64,
    ) -> PyResult<Vec<Vec<(f64, f64, f64, f64)>>> {
        if observed_boxes.len() != self.cfg.obs_len {
            return Err(PyValueError::new_err(format!(
                "model observes {} frames, got {} boxes",
                self.cfg.obs_len,
                observed_boxes.len()
            )));
        }
        let boxes: Vec<BoundingBox> = observed_boxes
            .into_iter()
            .map(|(x0, y0, x1, y1)| BoundingBox::new(x0, y0, x1, y1).map_err(to_py_err))
            .collect::<PyResult<_>>()?;
        let keypoints: Vec<Option<Keypoints13>> = match observed_keypoints {
            Some(frames) => {
                if frames.len() != boxes.len() {
                    return Err(PyValueError::new_err(format!(
                        "got {} keypoint frames for {} boxes",
                        frames.len(),
                        boxes.len()
                    )));
                }
                frames
                    .into_iter()
                    .map(|pts| keypoints_from(pts).map(Some))
                    .collect::<PyResult<_>>()?
            }
            None if self.cfg.feature_mode.uses_pose() => {
                return Err(PyValueError::new_err(format!(
                    "feature mode '{}' needs observed_keypoints",
                    self.cfg.feature_mode
                )));
            }
            None => vec![None; boxes.len()],
        };
        let sample = TrajectorySample {
            provenance: Provenance {
                video_id: "py".into(),
                track_id: "0".into(),
                start_frame: 0,
                flipped: false,
            },
            frame_width,
            frame_height,
            observed_boxes: boxes,
            observed_keypoints: keypoints,
            future_boxes: Vec::new(),
        };
        let mut rng = RngState::new(seed);
        let trajectories =
            predict_sample(&self.cfg, &self.params, &sample, k, k == 1, &mut rng)
                .map_err(to_py_err)?;
        Ok(trajectories
            .into_iter()
            .map(|traj| traj.into_iter().map(|[a, b, c, d]| (a, b, c, d)).collect())
            .collect())
    }
}

#[pymodule]
fn sgnetpose_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(angle_names, m)?)?;
    m.add_function(wrap_pyfunction!(body_angles, m)?)?;
    m.add_function(wrap_pyfunction!(mirror_keypoints, m)?)?;
    m.add_function(wrap_pyfunction!(mirror_box, m)?)?;
    m.add_function(wrap_pyfunction!(synth_tracks, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
