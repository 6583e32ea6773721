//! Finite-difference verification of every backward pass.

use crate::models::fragments::{DenseFragment, ModelFragment, ResidualFragment};
use crate::models::Arch;
use crate::nncore::fragments::{
    ConvFragment, ConvReluPoolFragment, LinearFragment, SoftmaxCrossEntropyFragment,
};
use crate::nncore::{gradcheck, Fragment, GradReport};
use crate::rng;

/// Tolerance for single smooth layers.
pub const LAYER_TOL: f64 = 1e-6;
/// Tolerance for compositions that contain relu and max pooling.
pub const COMPOSITE_TOL: f64 = 1e-4;

/// Check every layer type, both blocks and both networks on `1 x 8 x 8`
/// inputs.
pub fn gradcheck_suite(seed: u64) -> Vec<GradReport> {
    let r = |purpose: &str| rng::stream(seed, &format!("gradcheck/{purpose}"));
    let cases: Vec<(&str, Box<dyn Fragment>, f64)> = vec![
        (
            "linear",
            Box::new(LinearFragment::random(7, 5, &mut r("linear"))),
            LAYER_TOL,
        ),
        (
            "conv-valid",
            Box::new(ConvFragment::random(2, 3, 6, 3, 0, &mut r("conv-valid"))),
            LAYER_TOL,
        ),
        (
            "conv-padded",
            Box::new(ConvFragment::random(2, 3, 5, 3, 1, &mut r("conv-padded"))),
            LAYER_TOL,
        ),
        (
            "conv-1x1",
            Box::new(ConvFragment::random(3, 2, 4, 1, 0, &mut r("conv-1x1"))),
            LAYER_TOL,
        ),
        (
            "softmax-cross-entropy",
            Box::new(SoftmaxCrossEntropyFragment::random(6, &mut r("softmax"))),
            LAYER_TOL,
        ),
        (
            "conv-relu-maxpool",
            Box::new(ConvReluPoolFragment::random(
                2,
                3,
                8,
                &mut r("conv-relu-pool"),
            )),
            COMPOSITE_TOL,
        ),
        (
            "residual-identity",
            Box::new(ResidualFragment::random(
                3,
                3,
                6,
                &mut r("residual-identity"),
            )),
            COMPOSITE_TOL,
        ),
        (
            "residual-projection",
            Box::new(ResidualFragment::random(
                2,
                4,
                6,
                &mut r("residual-projection"),
            )),
            COMPOSITE_TOL,
        ),
        (
            "dense-block",
            Box::new(DenseFragment::random(2, 3, 3, 5, &mut r("dense"))),
            COMPOSITE_TOL,
        ),
        (
            "mini-resnet",
            Box::new(ModelFragment::random(
                Arch::MiniResNet,
                8,
                &mut r("mini-resnet"),
            )),
            COMPOSITE_TOL,
        ),
        (
            "mini-densenet",
            Box::new(ModelFragment::random(
                Arch::MiniDenseNet,
                8,
                &mut r("mini-densenet"),
            )),
            COMPOSITE_TOL,
        ),
    ];
    cases
        .iter()
        .map(|(label, fragment, tol)| gradcheck(label, fragment.as_ref(), *tol))
        .collect()
}
