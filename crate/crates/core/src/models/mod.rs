//! Desk-scale residual and densely connected feature extractors.

mod blocks;
pub mod fragments;
mod net;
mod train;
mod weights;

pub use blocks::{DenseBlock, PostActivation, ResidualBlock};
pub use net::{build_model, replace_head, Arch, Layer, ModelConfig, NetModel, Trace};
pub use train::{
    accuracy, argmax, predict_class, sample_gradients, train_model, train_samples, TrainConfig,
    TrainReport,
};
pub use weights::{decode_weights, encode_weights, load_weights, load_weights_as, save_weights};

pub use crate::ingest::Sample;
