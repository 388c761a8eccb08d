//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub obs_len: usize,
    pub pred_len: usize,
    pub feature_mode: FeatureMode,
    /// Width of the per-frame pose vector; 0 in bbox-only mode.
    pub pose_width: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub dropout: f64,
    /// CVAE samples drawn per forward pass.
    pub k_samples: usize,
}

impl ModelConfig {
    /// Desk-scale defaults for a feature mode; every field stays adjustable.
    pub fn for_mode(mode: FeatureMode) -> ModelConfig {
        ModelConfig {
            obs_len: 15,
            pred_len: 45,
            feature_mode: mode,
            pose_width: mode.pose_width(),
            embed_dim: 32,
            hidden_dim: 64,
            latent_dim: 16,
            dropout: 0.1,
            k_samples: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("obs-len", self.obs_len),
            ("pred-len", self.pred_len),
            ("embed dim", self.embed_dim),
            ("hidden dim", self.hidden_dim),
            ("latent dim", self.latent_dim),
            ("k", self.k_samples),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{} must be at least 1", name)));
            }
        }
        if self.pose_width != self.feature_mode.pose_width() {
            return Err(Error::Config(format!(
                "pose width {} inconsistent with feature mode {} (expects {})",
                self.pose_width,
                self.feature_mode,
                self.feature_mode.pose_width()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}
