//! Attention U-Net with hand-written reverse-mode gradients.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layers::Mode;
pub use model::{
    backward, build_model, forward, forward_calls, predict, ForwardPass, Gradients, Layout, ModelParams,
    NetworkConfig, Tape,
};
pub use tensor::{FeatureMap, Tensor};
