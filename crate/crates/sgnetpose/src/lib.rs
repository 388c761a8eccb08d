//! Stepwise-goal trajectory prediction for pedestrian bounding boxes with
//! optional body-pose features, on a from-scratch reverse-mode tape.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod pose;
pub mod train;
pub mod util;

pub use error::{Error, Result};
