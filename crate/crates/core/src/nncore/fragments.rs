//! Gradient-checkable wrappers around the kernel's layers.

use rand::Rng as _;

use super::gradcheck::{Fragment, Probe};
use super::layers::{maxpool2x2, maxpool2x2_backward, relu, relu_backward, Linear};
use super::loss::{cross_entropy, cross_entropy_grad, softmax};
use super::{Conv2d, Tensor};
use crate::rng::Rng;

pub(crate) fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    t
}

pub struct LinearFragment {
    pub layer: Linear,
    pub input: Tensor,
    pub probe: Probe,
}

impl LinearFragment {
    pub fn random(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let mut layer = Linear::new(inputs, outputs, rng);
        layer.bias = random_tensor(&[outputs], rng);
        LinearFragment {
            layer,
            input: random_tensor(&[inputs], rng),
            probe: Probe::random(&[outputs], rng),
        }
    }

    fn layer_at(values: &[Tensor]) -> Linear {
        Linear::from_parts(values[0].clone(), values[1].clone()).expect("linear parts")
    }
}

impl Fragment for LinearFragment {
    fn variables(&self) -> Vec<(String, Tensor)> {
        vec![
            ("weight".into(), self.layer.weight.clone()),
            ("bias".into(), self.layer.bias.clone()),
            ("input".into(), self.input.clone()),
        ]
    }

    fn loss(&self, v: &[Tensor]) -> f64 {
        self.probe
            .loss(&Self::layer_at(v).forward(&v[2]).expect("forward"))
    }

    fn gradients(&self, v: &[Tensor]) -> Vec<Tensor> {
        let g = Self::layer_at(v)
            .backward(&v[2], &self.probe.grad())
            .expect("backward");
        vec![g.weight, g.bias, g.input]
    }
}

pub struct ConvFragment {
    pub layer: Conv2d,
    pub input: Tensor,
    pub probe: Probe,
}

impl ConvFragment {
    pub fn random(
        in_ch: usize,
        out_ch: usize,
        size: usize,
        kernel: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut layer = Conv2d::new(in_ch, out_ch, kernel, padding, rng);
        layer.bias = random_tensor(&[out_ch], rng);
        let input = random_tensor(&[in_ch, size, size], rng);
        let out = layer.output_shape(&input).expect("shape");
        ConvFragment {
            layer,
            input,
            probe: Probe::random(&out, rng),
        }
    }

    fn layer_at(&self, v: &[Tensor]) -> Conv2d {
        Conv2d::from_parts(v[0].clone(), v[1].clone(), self.layer.padding).expect("conv parts")
    }
}

impl Fragment for ConvFragment {
    fn variables(&self) -> Vec<(String, Tensor)> {
        vec![
            ("weight".into(), self.layer.weight.clone()),
            ("bias".into(), self.layer.bias.clone()),
            ("input".into(), self.input.clone()),
        ]
    }

    fn loss(&self, v: &[Tensor]) -> f64 {
        self.probe
            .loss(&self.layer_at(v).forward(&v[2]).expect("forward"))
    }

    fn gradients(&self, v: &[Tensor]) -> Vec<Tensor> {
        let g = self
            .layer_at(v)
            .backward(&v[2], &self.probe.grad())
            .expect("backward");
        vec![g.weight, g.bias, g.input]
    }
}

/// Softmax followed by cross-entropy, differentiated with respect to logits.
pub struct SoftmaxCrossEntropyFragment {
    pub logits: Tensor,
    pub target: usize,
}

impl SoftmaxCrossEntropyFragment {
    pub fn random(classes: usize, rng: &mut Rng) -> Self {
        let mut logits = random_tensor(&[classes], rng);
        for v in logits.data_mut() {
            *v *= 3.0;
        }
        SoftmaxCrossEntropyFragment {
            logits,
            target: rng.gen_range(0..classes),
        }
    }
}

impl Fragment for SoftmaxCrossEntropyFragment {
    fn variables(&self) -> Vec<(String, Tensor)> {
        vec![("logits".into(), self.logits.clone())]
    }

    fn loss(&self, v: &[Tensor]) -> f64 {
        cross_entropy(&softmax(&v[0]), self.target).expect("target")
    }

    fn gradients(&self, v: &[Tensor]) -> Vec<Tensor> {
        vec![cross_entropy_grad(&softmax(&v[0]), self.target).expect("target")]
    }
}

/// conv -> relu -> maxpool2x2.
pub struct ConvReluPoolFragment {
    pub conv: ConvFragment,
}

impl ConvReluPoolFragment {
    /// Builds a stack whose pre-activations stay at least `margin` away from
    /// the relu kink and whose pooling windows have no near-ties, so that
    /// central differences never straddle a non-differentiable point.
    pub fn random(in_ch: usize, out_ch: usize, size: usize, rng: &mut Rng) -> Self {
        let margin = 1e-3;
        loop {
            let mut conv = ConvFragment::random(in_ch, out_ch, size, 3, 1, rng);
            let pre = conv.layer.forward(&conv.input).expect("forward");
            if !kink_free(&pre, margin) {
                continue;
            }
            let out = [out_ch, size / 2, size / 2];
            conv.probe = Probe::random(&out, rng);
            return ConvReluPoolFragment { conv };
        }
    }
}

/// True when no entry is within `margin` of zero and no 2x2 window has two
/// post-relu values within `margin` of each other at the top.
pub(crate) fn kink_free(pre: &Tensor, margin: f64) -> bool {
    if pre.data().iter().any(|v| v.abs() < margin) {
        return false;
    }
    let act = relu(pre);
    let Ok((c, h, w)) = act.dims3() else {
        return true;
    };
    let d = act.data();
    for ci in 0..c {
        for r in 0..h / 2 {
            for q in 0..w / 2 {
                let base = (ci * h + 2 * r) * w + 2 * q;
                let mut vals = [d[base], d[base + 1], d[base + w], d[base + w + 1]];
                vals.sort_by(|a, b| b.total_cmp(a));
                if vals[0] > 0.0 && vals[0] - vals[1] < margin {
                    return false;
                }
            }
        }
    }
    true
}

impl Fragment for ConvReluPoolFragment {
    fn variables(&self) -> Vec<(String, Tensor)> {
        self.conv.variables()
    }

    fn loss(&self, v: &[Tensor]) -> f64 {
        let conv = self.conv.layer_at(v);
        let y = maxpool2x2(&relu(&conv.forward(&v[2]).expect("conv"))).expect("pool");
        self.conv.probe.loss(&y)
    }

    fn gradients(&self, v: &[Tensor]) -> Vec<Tensor> {
        let conv = self.conv.layer_at(v);
        let pre = conv.forward(&v[2]).expect("conv");
        let act = relu(&pre);
        let g_act = maxpool2x2_backward(&act, &self.conv.probe.grad()).expect("pool");
        let g_pre = relu_backward(&pre, &g_act).expect("relu");
        let g = conv.backward(&v[2], &g_pre).expect("conv backward");
        vec![g.weight, g.bias, g.input]
    }
}

/// Wraps another fragment and doubles its analytic gradient. Used to check
/// that the checker actually rejects wrong gradients.
pub struct Corrupted<F: Fragment>(pub F);

impl<F: Fragment> Fragment for Corrupted<F> {
    fn variables(&self) -> Vec<(String, Tensor)> {
        self.0.variables()
    }

    fn loss(&self, v: &[Tensor]) -> f64 {
        self.0.loss(v)
    }

    fn gradients(&self, v: &[Tensor]) -> Vec<Tensor> {
        self.0
            .gradients(v)
            .into_iter()
            .map(|g| g.map(|x| 2.0 * x))
            .collect()
    }
}
