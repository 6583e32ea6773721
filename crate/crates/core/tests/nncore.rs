use dfsmc::nncore::fragments::{ConvFragment, Corrupted, LinearFragment};
use dfsmc::nncore::{
    cross_entropy, gradcheck, maxpool2x2, maxpool2x2_backward, relu, relu_backward, softmax,
    Conv2d, Tensor,
};
use dfsmc::rng;
use proptest::prelude::*;

/// Cross-correlation straight from the definition, on an explicitly
/// zero-padded copy of the input.
fn reference_conv(x: &Tensor, w: &Tensor, b: &Tensor, pad: usize) -> Vec<f64> {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let (ph, pw) = (h + 2 * pad, wd + 2 * pad);
    let mut padded = vec![0.0; c * ph * pw];
    for ci in 0..c {
        for i in 0..h {
            for j in 0..wd {
                padded[(ci * ph + i + pad) * pw + j + pad] = x.data()[(ci * h + i) * wd + j];
            }
        }
    }
    let (oh, ow) = (ph - k + 1, pw - k + 1);
    let mut out = Vec::new();
    for oi in 0..o {
        for s in 0..oh {
            for t in 0..ow {
                let mut acc = b.data()[oi];
                for ci in 0..c {
                    for a in 0..k {
                        for bb in 0..k {
                            acc += padded[(ci * ph + s + a) * pw + t + bb]
                                * w.data()[((oi * c + ci) * k + a) * k + bb];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_matches_definition(
        c in 1usize..3, o in 1usize..3, h in 3usize..7, w in 3usize..7, k in prop::sample::select(vec![1usize, 3]),
        pad in 0usize..2, seed in any::<u64>(),
    ) {
        let mut r = rng::stream(seed, "conv");
        let conv = Conv2d::new(c, o, k, pad, &mut r);
        let bias = Tensor::vector((0..o).map(|i| i as f64 * 0.3 - 0.2).collect());
        let conv = Conv2d::from_parts(conv.weight.clone(), bias.clone(), pad).unwrap();
        let x = Tensor::new(vec![c, h, w], (0..c * h * w).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect()).unwrap();
        let y = conv.forward(&x).unwrap();
        let expected = reference_conv(&x, &conv.weight, &bias, pad);
        prop_assert_eq!(y.len(), expected.len());
        for (a, b) in y.data().iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-1e3f64..1e3, 1..30)) {
        let p = softmax(&Tensor::vector(v.clone()));
        let sum: f64 = p.data().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        let shifted = softmax(&Tensor::vector(v.iter().map(|x| x + 17.0).collect()));
        for (a, b) in p.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn softmax_reference_values() {
    // exp(k) / (e + e^2 + e^3) evaluated in 50-digit arithmetic
    let expected = [
        0.090_030_573_170_380_46,
        0.24472847105479765,
        0.665_240_955_774_821_9,
    ];
    let p = softmax(&Tensor::vector(vec![1.0, 2.0, 3.0]));
    for (got, want) in p.data().iter().zip(expected) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
}

#[test]
fn cross_entropy_of_uniform_is_log_k() {
    for k in [2usize, 5, 25] {
        let p = softmax(&Tensor::zeros(&[k]));
        assert!((cross_entropy(&p, k - 1).unwrap() - (k as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn gradcheck_rejects_wrong_gradients() {
    let mut r = rng::stream(5, "corrupted");
    let good = gradcheck("linear", &LinearFragment::random(4, 3, &mut r), 1e-6);
    assert!(good.passed, "{good}");
    let bad = gradcheck(
        "linear",
        &Corrupted(LinearFragment::random(4, 3, &mut r)),
        1e-6,
    );
    assert!(!bad.passed);
    assert!(bad.max_rel_error > 0.3, "{bad}");
    let bad_conv = gradcheck(
        "conv",
        &Corrupted(ConvFragment::random(2, 2, 5, 3, 1, &mut r)),
        1e-6,
    );
    assert!(!bad_conv.passed);
}

#[test]
fn relu_and_pool_route_gradients() {
    let x = Tensor::new(vec![1, 2, 2], vec![-1.0, 3.0, 2.0, 0.5]).unwrap();
    assert_eq!(relu(&x).data(), &[0.0, 3.0, 2.0, 0.5]);
    let g = relu_backward(&x, &Tensor::filled(&[1, 2, 2], 1.0)).unwrap();
    assert_eq!(g.data(), &[0.0, 1.0, 1.0, 1.0]);
    let pooled = maxpool2x2(&x).unwrap();
    assert_eq!(pooled.data(), &[3.0]);
    let back = maxpool2x2_backward(&x, &Tensor::filled(&[1, 1, 1], 2.0)).unwrap();
    assert_eq!(back.data(), &[0.0, 2.0, 0.0, 0.0]);
}
