//! Minimal double-precision neural-network kernel with hand-written
//! backward passes.

mod conv;
pub mod fragments;
pub mod gradcheck;
mod init;
pub mod layers;
pub mod loss;
mod optim;
mod tensor;

pub use conv::{Conv2d, ConvGrad};
pub use gradcheck::{gradcheck, Fragment, GradReport, Probe};
pub use init::glorot_uniform;
pub use layers::{
    global_avg_pool, global_avg_pool_backward, maxpool2x2, maxpool2x2_backward, relu,
    relu_backward, Linear, LinearGrad,
};
pub use loss::{cross_entropy, cross_entropy_grad, softmax};
pub use optim::Sgd;
pub use tensor::Tensor;
