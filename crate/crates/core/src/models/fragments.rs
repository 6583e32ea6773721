//! Gradient-checkable wrappers around blocks and whole networks.

use super::blocks::{DenseBlock, ResidualBlock};
use super::net::{build_model, Arch, ModelConfig, NetModel};
use crate::nncore::fragments::random_tensor;
use crate::nncore::gradcheck::{Fragment, Probe};
use crate::nncore::{cross_entropy, cross_entropy_grad, softmax, Tensor};
use crate::rng::Rng;

fn set_params(dst: Vec<&mut Tensor>, values: &[Tensor]) {
    for (d, v) in dst.into_iter().zip(values) {
        *d = v.clone();
    }
}

pub struct ResidualFragment {
    pub block: ResidualBlock,
    pub input: Tensor,
    pub probe: Probe,
}

impl ResidualFragment {
    pub fn random(in_ch: usize, out_ch: usize, size: usize, rng: &mut Rng) -> Self {
        let mut block = ResidualBlock::new(in_ch, out_ch, rng);
        for p in block.params_mut() {
            if p.rank() == 1 {
                *p = random_tensor(p.shape(), rng).map(|v| 0.1 * v);
            }
        }
        ResidualFragment {
            block,
            input: random_tensor(&[in_ch, size, size], rng),
            probe: Probe::random(&[out_ch, size, size], rng),
        }
    }

    fn block_at(&self, v: &[Tensor]) -> ResidualBlock {
        let mut b = self.block.clone();
        let n = v.len() - 1;
        set_params(b.params_mut(), &v[..n]);
        b
    }
}

impl Fragment for ResidualFragment {
    fn variables(&self) -> Vec<(String, Tensor)> {
        let mut vars: Vec<(String, Tensor)> = self
            .block
            .params()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        vars.push(("input".into(), self.input.clone()));
        vars
    }

    fn loss(&self, v: &[Tensor]) -> f64 {
        let y = self.block_at(v).forward(&v[v.len() - 1]).expect("forward");
        self.probe.loss(&y)
    }

    fn gradients(&self, v: &[Tensor]) -> Vec<Tensor> {
        let b = self.block_at(v);
        let x = &v[v.len() - 1];
        let (_, cache) = b.forward_cached(x).expect("forward");
        let (gx, mut grads) = b.backward(x, &cache, &self.probe.grad()).expect("backward");
        grads.push(gx);
        grads
    }
}

pub struct DenseFragment {
    pub block: DenseBlock,
    pub input: Tensor,
    pub probe: Probe,
}

impl DenseFragment {
    pub fn random(in_ch: usize, growth: usize, depth: usize, size: usize, rng: &mut Rng) -> Self {
        let mut block = DenseBlock::new(in_ch, growth, depth, rng);
        for p in block.params_mut() {
            if p.rank() == 1 {
                *p = random_tensor(p.shape(), rng).map(|v| 0.1 * v);
            }
        }
        let out = block.out_channels();
        DenseFragment {
            block,
            input: random_tensor(&[in_ch, size, size], rng),
            probe: Probe::random(&[out, size, size], rng),
        }
    }

    fn block_at(&self, v: &[Tensor]) -> DenseBlock {
        let mut b = self.block.clone();
        let n = v.len() - 1;
        set_params(b.params_mut(), &v[..n]);
        b
    }
}

impl Fragment for DenseFragment {
    fn variables(&self) -> Vec<(String, Tensor)> {
        let mut vars: Vec<(String, Tensor)> = self
            .block
            .params()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        vars.push(("input".into(), self.input.clone()));
        vars
    }

    fn loss(&self, v: &[Tensor]) -> f64 {
        let y = self.block_at(v).forward(&v[v.len() - 1]).expect("forward");
        self.probe.loss(&y)
    }

    fn gradients(&self, v: &[Tensor]) -> Vec<Tensor> {
        let b = self.block_at(v);
        let (_, cache) = b.forward_cached(&v[v.len() - 1]).expect("forward");
        let (gx, mut grads) = b.backward(&cache, &self.probe.grad()).expect("backward");
        grads.push(gx);
        grads
    }
}

/// Whole network with softmax cross-entropy on top.
pub struct ModelFragment {
    pub model: NetModel,
    pub input: Tensor,
    pub target: usize,
}

impl ModelFragment {
    /// Tiny `1 x size x size` network with nonzero biases, resampled until
    /// no relu input or pooling window sits within `1e-4` of a kink.
    pub fn random(arch: Arch, size: usize, rng: &mut Rng) -> Self {
        use rand::Rng as _;
        loop {
            let config = ModelConfig {
                input: [1, size, size],
                classes: 4,
                features: 12,
                seed: rng.gen(),
            };
            let mut model = build_model(arch, config).expect("valid config");
            for p in model.params_mut() {
                if p.rank() == 1 {
                    *p = random_tensor(p.shape(), rng).map(|v| 0.1 * v);
                }
            }
            let input = random_tensor(&[1, size, size], rng);
            if model_kink_free(&model, &input, 1e-4) {
                return ModelFragment {
                    model,
                    input,
                    target: rng.gen_range(0..4),
                };
            }
        }
    }

    fn model_at(&self, v: &[Tensor]) -> NetModel {
        let mut m = self.model.clone();
        let n = v.len() - 1;
        set_params(m.params_mut(), &v[..n]);
        m
    }
}

/// Checks every relu/pool input along the network for near-kinks. Values
/// that are exactly zero come from an upstream clamp and stay zero under
/// small perturbations, so they are allowed.
fn model_kink_free(model: &NetModel, x: &Tensor, margin: f64) -> bool {
    use super::net::Layer;
    let near = |t: &Tensor| t.data().iter().any(|&v| v != 0.0 && v.abs() < margin);
    let mut h = x.clone();
    for (_, layer) in &model.layers {
        match layer {
            Layer::Relu if near(&h) => return false,
            Layer::MaxPool if !pool_ok(&h, margin) => return false,
            Layer::Residual(b) => {
                let pre1 = b.conv1.forward(&h).expect("conv");
                if near(&pre1) {
                    return false;
                }
                let y = b.forward(&h).expect("block");
                // post-add relu input = y where positive; recover the sum
                let mut sum = b.conv2.forward(&crate::nncore::relu(&pre1)).expect("conv");
                let skip = match &b.projection {
                    Some(s) => s.forward(&h).expect("skip"),
                    None => h.clone(),
                };
                sum.axpy(1.0, &skip).expect("shape");
                if near(&sum) {
                    return false;
                }
                h = y;
                continue;
            }
            Layer::Dense(b) => {
                let mut maps = vec![h.clone()];
                for (l, conv) in b.layers.iter().enumerate() {
                    let parts: Vec<&Tensor> = maps[b.sources(l)].iter().collect();
                    let cat = Tensor::concat_channels(&parts).expect("cat");
                    if near(&cat) {
                        return false;
                    }
                    maps.push(conv.forward(&crate::nncore::relu(&cat)).expect("conv"));
                }
            }
            _ => {}
        }
        h = layer.forward(&h).expect("forward");
    }
    true
}

fn pool_ok(h: &Tensor, margin: f64) -> bool {
    let (c, rows, cols) = h.dims3().expect("rank 3");
    let d = h.data();
    for ci in 0..c {
        for r in 0..rows / 2 {
            for q in 0..cols / 2 {
                let base = (ci * rows + 2 * r) * cols + 2 * q;
                let mut vals = [d[base], d[base + 1], d[base + cols], d[base + cols + 1]];
                vals.sort_by(|a, b| b.total_cmp(a));
                if vals[0] != vals[1] && vals[0] - vals[1] < margin {
                    return false;
                }
                if vals[0] == vals[1] && vals[0] != 0.0 {
                    return false;
                }
            }
        }
    }
    true
}

impl Fragment for ModelFragment {
    fn variables(&self) -> Vec<(String, Tensor)> {
        let mut vars: Vec<(String, Tensor)> = self
            .model
            .params()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        vars.push(("input".into(), self.input.clone()));
        vars
    }

    fn loss(&self, v: &[Tensor]) -> f64 {
        let logits = self.model_at(v).logits(&v[v.len() - 1]).expect("forward");
        cross_entropy(&softmax(&logits), self.target).expect("target")
    }

    fn gradients(&self, v: &[Tensor]) -> Vec<Tensor> {
        let m = self.model_at(v);
        let trace = m.forward_trace(&v[v.len() - 1]).expect("forward");
        let g = cross_entropy_grad(&softmax(&trace.logits), self.target).expect("target");
        let (mut grads, gx) = m.backward(&trace, &g).expect("backward");
        grads.push(gx);
        grads
    }
}
