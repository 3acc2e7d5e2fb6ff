//! Siamese CNN patch features for dense optical flow.
//!
//! The crate bundles everything needed to train patch descriptors with
//! (thresholded) hinge embedding losses, turn them into full-resolution
//! multi-scale feature maps, match them with a propagation / random-search
//! matcher and score the result with matching-robustness and endpoint-error
//! metrics.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod flow;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod loss;
pub mod manifest;
pub mod matcher;
pub mod net;
pub mod pyramid;
pub mod sampler;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use flow::FlowField;
pub use image::{FeatureMap, Image, Point};
pub use net::{LayerKind, LayerSpec, NetworkParams};
