//! Named parameter tensors: initialization and the checkpoint format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::rng::stable_hash;
use crate::autodiff::{RngState, Tensor};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
const BLOB_FILE: &str = "params.bin";
const MANIFEST_FILE: &str = "manifest.json";

/// Ordered, named parameter tensors. Order is fixed by
/// [`expected_shapes`], which both initialization and checkpoint loading
/// derive from, so optimizer state and blobs line up by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Every tensor the model owns for `cfg`, in canonical order, with shapes.
pub fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (de, dh, dz) = (cfg.embed_dim, cfg.hidden_dim, cfg.latent_dim);
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    fn fc(out: &mut Vec<(String, Vec<usize>)>, name: &str, d_in: usize, d_out: usize) {
        out.push((format!("{}.w", name), vec![d_in, d_out]));
        out.push((format!("{}.b", name), vec![1, d_out]));
    }
    let gru = |out: &mut Vec<(String, Vec<usize>)>, prefix: &str, d_in: usize| {
        for gate in ["r", "u", "c"] {
            out.push((format!("{}.gru.w{}", prefix, gate), vec![d_in + dh, dh]));
            out.push((format!("{}.gru.b{}", prefix, gate), vec![1, dh]));
        }
    };

    fc(&mut out, "embed_bbox", 4, de);
    if cfg.feature_mode.uses_pose() {
        fc(&mut out, "embed_pose", cfg.pose_width, de);
    }
    // The bbox encoder consumes the box embedding concatenated with the
    // previous step's aggregated goal, hence the doubled input width.
    gru(&mut out, "enc_bbox", 2 * de);
    if cfg.feature_mode.uses_pose() {
        gru(&mut out, "enc_pose", de);
    }
    gru(&mut out, "enc_target", de);
    fc(&mut out, "cvae_recognition", 2 * dh, 2 * dz);
    fc(&mut out, "cvae_prior", dh, 2 * dz);
    fc(&mut out, "cvae_generation", dz + dh, dh);
    fc(&mut out, "goal_regressor", dh, cfg.pred_len * 4);
    fc(&mut out, "goal_embed", 4, de);
    fc(&mut out, "attn_enc", de, 1);
    fc(&mut out, "attn_dec", de, 1);
    if cfg.feature_mode.uses_pose() {
        fc(&mut out, "dec_init", 2 * dh, dh);
    }
    gru(&mut out, "dec", 2 * de);
    fc(&mut out, "traj_regressor", dh, 4);
    out
}

fn xavier(shape: &[usize], rng: &mut RngState) -> Tensor {
    let (fan_in, fan_out) = (shape[0], shape[1]);
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.uniform(-limit, limit) as f32)
        .collect();
    Tensor::from_vec(shape.to_vec(), data).expect("xavier draws are finite")
}

impl ParamSet {
    /// Xavier-uniform weights, zero biases. Each tensor draws from a
    /// substream keyed by its name, so adding or removing a tensor leaves
    /// every other tensor's initialization unchanged.
    pub fn init(cfg: &ModelConfig, rng: &RngState) -> Result<ParamSet> {
        cfg.validate()?;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in expected_shapes(cfg) {
            let tensor = if name.ends_with(".b") || name.contains(".gru.b") {
                Tensor::zeros(shape)
            } else {
                let mut stream = rng.fork(stable_hash(name.as_bytes()));
                xavier(&shape, &mut stream)
            };
            names.push(name);
            tensors.push(tensor);
        }
        Ok(ParamSet { names, tensors })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Mutable view for optimizer updates; names and order are fixed.
    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: usize,
    /// Byte length in the blob.
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Writes a checkpoint directory: `manifest.json` (format version, config,
/// tensor table) plus `params.bin` (little-endian f32 blob in table order).
pub fn save_checkpoint(dir: &Path, cfg: &ModelConfig, params: &ParamSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(params.len());
    for (name, tensor) in params.iter() {
        let bytes = tensor.to_le_bytes();
        entries.push(TensorEntry {
            name: name.to_string(),
            shape: tensor.shape().to_vec(),
            offset: blob.len(),
            len: bytes.len(),
        });
        blob.extend_from_slice(&bytes);
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        tensors: entries,
    };
    fs::write(dir.join(BLOB_FILE), blob)?;
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Data(format!("manifest serialization failed: {}", e)))?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(())
}

/// Loads and fully validates a checkpoint: version, tensor table against
/// the config's canonical shape list, blob layout, and finiteness.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelConfig, ParamSet)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::Data(format!(
            "no checkpoint at {}: missing {}",
            dir.display(),
            MANIFEST_FILE
        )));
    }
    let manifest: CheckpointManifest =
        serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .map_err(|e| Error::Data(format!("bad manifest {}: {}", manifest_path.display(), e)))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "checkpoint format v{} unsupported (expected v{})",
            manifest.format_version, CHECKPOINT_VERSION
        )));
    }
    manifest.config.validate()?;

    let expected = expected_shapes(&manifest.config);
    if manifest.tensors.len() != expected.len() {
        return Err(Error::Data(format!(
            "checkpoint lists {} tensors, config implies {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let blob = fs::read(dir.join(BLOB_FILE))?;
    let mut names = Vec::with_capacity(expected.len());
    let mut tensors = Vec::with_capacity(expected.len());
    for (entry, (want_name, want_shape)) in manifest.tensors.iter().zip(&expected) {
        if &entry.name != want_name || &entry.shape != want_shape {
            return Err(Error::Data(format!(
                "checkpoint tensor '{}' {:?} does not match expected '{}' {:?}",
                entry.name, entry.shape, want_name, want_shape
            )));
        }
        let end = entry.offset.checked_add(entry.len).ok_or_else(|| {
            Error::Data(format!("tensor '{}' blob range overflows", entry.name))
        })?;
        if end > blob.len() {
            return Err(Error::Data(format!(
                "tensor '{}' extends to byte {} but blob holds {}",
                entry.name,
                end,
                blob.len()
            )));
        }
        let tensor = Tensor::from_le_bytes(entry.shape.clone(), &blob[entry.offset..end])
            .map_err(|e| Error::Data(format!("tensor '{}': {}", entry.name, e)))?;
        names.push(entry.name.clone());
        tensors.push(tensor);
    }
    Ok((manifest.config, ParamSet { names, tensors }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMode;

    fn cfg(mode: FeatureMode) -> ModelConfig {
        ModelConfig {
            obs_len: 4,
            pred_len: 6,
            embed_dim: 8,
            hidden_dim: 12,
            latent_dim: 5,
            ..ModelConfig::for_mode(mode)
        }
    }

    #[test]
    fn init_matches_canonical_shapes_and_zero_biases() {
        for mode in [FeatureMode::BboxOnly, FeatureMode::BboxPose, FeatureMode::BboxAngle] {
            let c = cfg(mode);
            let ps = ParamSet::init(&c, &RngState::new(1)).unwrap();
            let expected = expected_shapes(&c);
            assert_eq!(ps.len(), expected.len());
            for ((name, tensor), (want_name, want_shape)) in ps.iter().zip(&expected) {
                assert_eq!(name, want_name);
                assert_eq!(tensor.shape(), &want_shape[..]);
                assert!(tensor.data().iter().all(|v| v.is_finite()));
                if name.ends_with(".b") || name.contains(".gru.b") {
                    assert!(tensor.data().iter().all(|&v| v == 0.0), "{} not zero", name);
                } else {
                    assert!(tensor.data().iter().any(|&v| v != 0.0), "{} all zero", name);
                }
            }
        }
    }

    #[test]
    fn bbox_only_has_no_pose_tensors() {
        let ps = ParamSet::init(&cfg(FeatureMode::BboxOnly), &RngState::new(1)).unwrap();
        assert!(ps.get("embed_pose.w").is_none());
        assert!(ps.get("dec_init.w").is_none());
        assert!(ps.get("enc_pose.gru.wr").is_none());
        let ps = ParamSet::init(&cfg(FeatureMode::BboxAngle), &RngState::new(1)).unwrap();
        assert_eq!(ps.get("embed_pose.w").unwrap().shape(), &[12, 8]);
    }

    #[test]
    fn init_streams_are_keyed_by_name_not_order() {
        let a = ParamSet::init(&cfg(FeatureMode::BboxOnly), &RngState::new(7)).unwrap();
        let b = ParamSet::init(&cfg(FeatureMode::BboxPose), &RngState::new(7)).unwrap();
        // Pose tensors slot in between, yet shared tensors init identically.
        for name in ["embed_bbox.w", "traj_regressor.w", "dec.gru.wc"] {
            assert_eq!(a.get(name).unwrap().data(), b.get(name).unwrap().data(), "{}", name);
        }
        let c = ParamSet::init(&cfg(FeatureMode::BboxOnly), &RngState::new(8)).unwrap();
        assert_ne!(a.get("embed_bbox.w").unwrap().data(), c.get("embed_bbox.w").unwrap().data());
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let c = cfg(FeatureMode::BboxPose);
        let ps = ParamSet::init(&c, &RngState::new(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &c, &ps).unwrap();
        let (c2, ps2) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(c2, c);
        assert_eq!(ps2, ps);
    }

    #[test]
    fn load_rejects_unknown_version_and_shape_drift() {
        let c = cfg(FeatureMode::BboxOnly);
        let ps = ParamSet::init(&c, &RngState::new(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &c, &ps).unwrap();

        let path = dir.path().join(MANIFEST_FILE);
        let good = fs::read_to_string(&path).unwrap();
        fs::write(&path, good.replace("\"format_version\": 1", "\"format_version\": 2")).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Data(_))));

        // Claim a different pred_len: the tensor table no longer matches.
        fs::write(&path, good.replace("\"pred_len\": 6", "\"pred_len\": 5")).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "got {:?}", err);
    }

    #[test]
    fn load_rejects_truncated_blob() {
        let c = cfg(FeatureMode::BboxOnly);
        let ps = ParamSet::init(&c, &RngState::new(4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &c, &ps).unwrap();
        let blob_path = dir.path().join(BLOB_FILE);
        let blob = fs::read(&blob_path).unwrap();
        fs::write(&blob_path, &blob[..blob.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Data(_))));
    }
}
