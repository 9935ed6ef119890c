//! Brachial plexus trunk segmentation on ultrasound frames.
//!
//! The pipeline crops device-specific regions of interest, optionally
//! applies CLAHE, trains an Attention U-Net with a cross-entropy plus
//! Lovász hinge objective, and evaluates by k-fold cross-validation,
//! including agreement studies between human raters.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the concrete instantiations used for training and auditing.

pub mod data_model;
pub mod enhance;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ScoreMap32 = data_model::ScoreMap<f32>;
pub type ScoreMap64 = data_model::ScoreMap<f64>;
pub type ModelParams32 = network::ModelParams<f32>;
pub type ModelParams64 = network::ModelParams<f64>;
pub type FeatureMap32 = network::FeatureMap<f32>;
pub type FeatureMap64 = network::FeatureMap<f64>;
