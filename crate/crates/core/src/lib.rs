//! Malware family classification from grayscale byte images: two small CNN
//! feature extractors trained from scratch, their penultimate features
//! concatenated and classified with a linear soft-margin SVM.

pub mod augment;
pub mod config;
pub mod error;
pub mod ingest;
pub mod models;
pub mod nncore;
pub mod pipeline;
pub mod rng;
pub mod svm;
pub mod synth;
pub mod verify;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use ingest::{bytes_to_image, DatasetManifest, GrayImage, Sample, Split};
pub use models::{build_model, replace_head, Arch, ModelConfig, NetModel, TrainConfig};
pub use pipeline::{
    dfsmc_predict, dfsmc_train, evaluate, fuse, EvalReport, FeatureCache, FeatureSource,
    FeatureVector,
};
pub use svm::{train_binary, train_multiclass, SolverConfig, SvmModel};
