//! Network definition: configuration, parameter storage and checkpoints,
//! and the differentiable forward pass.

mod config;
mod network;
mod params;

pub use config::ModelConfig;
pub use network::{
    Aggregated, AttnScope, EncoderState, ForwardOutput, LatentGaussian, Network, StepwiseGoals,
};
pub use params::{
    expected_shapes, load_checkpoint, save_checkpoint, ParamSet, CHECKPOINT_VERSION,
};
