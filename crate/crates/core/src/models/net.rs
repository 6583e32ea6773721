use std::fmt;
use std::str::FromStr;

use super::blocks::{DenseBlock, DenseCache, PostActivation, ResidualBlock, ResidualCache};
use crate::error::{Error, Result};
use crate::nncore::{
    global_avg_pool, global_avg_pool_backward, maxpool2x2, maxpool2x2_backward, relu,
    relu_backward, softmax, Conv2d, Linear, Tensor,
};
use crate::rng;

pub const STEM_CHANNELS: usize = 8;
pub const RESNET_WIDE_CHANNELS: usize = 16;
pub const DENSE_DEPTH: usize = 4;
pub const DENSE_GROWTH: usize = 8;
pub const DENSE_TRANSITION_CHANNELS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arch {
    MiniResNet,
    MiniDenseNet,
}

impl Arch {
    pub fn tag(self) -> &'static str {
        match self {
            Arch::MiniResNet => "mini-resnet",
            Arch::MiniDenseNet => "mini-densenet",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mini-resnet" => Ok(Arch::MiniResNet),
            "mini-densenet" => Ok(Arch::MiniDenseNet),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// `(channels, rows, cols)`; rows and cols must be multiples of 4.
    pub input: [usize; 3],
    pub classes: usize,
    /// Width of the penultimate fully connected layer.
    pub features: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input: [1, 64, 64],
            classes: 25,
            features: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.input;
        if c == 0 || h < 4 || w < 4 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Config(format!(
                "input {c}x{h}x{w}: need >= 1 channel and spatial extents that are multiples of 4"
            )));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.features == 0 {
            return Err(Error::Config("feature width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    Relu,
    MaxPool,
    Residual(Box<ResidualBlock>),
    Dense(DenseBlock),
    GlobalAvgPool,
    Linear(Linear),
}

#[derive(Clone, Debug)]
pub enum LayerCache {
    None,
    Residual(ResidualCache),
    Dense(DenseCache),
}

impl Layer {
    fn params(&self) -> Vec<(String, &Tensor)> {
        match self {
            Layer::Conv(c) => vec![("weight".into(), &c.weight), ("bias".into(), &c.bias)],
            Layer::Linear(l) => vec![("weight".into(), &l.weight), ("bias".into(), &l.bias)],
            Layer::Residual(b) => b
                .params()
                .into_iter()
                .map(|(n, t)| (n.to_string(), t))
                .collect(),
            Layer::Dense(b) => b.params(),
            Layer::Relu | Layer::MaxPool | Layer::GlobalAvgPool => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Residual(b) => b.params_mut(),
            Layer::Dense(b) => b.params_mut(),
            Layer::Relu | Layer::MaxPool | Layer::GlobalAvgPool => Vec::new(),
        }
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, LayerCache)> {
        Ok(match self {
            Layer::Conv(c) => (c.forward(x)?, LayerCache::None),
            Layer::Relu => (relu(x), LayerCache::None),
            Layer::MaxPool => (maxpool2x2(x)?, LayerCache::None),
            Layer::GlobalAvgPool => (global_avg_pool(x)?, LayerCache::None),
            Layer::Linear(l) => (l.forward(x)?, LayerCache::None),
            Layer::Residual(b) => {
                let (y, c) = b.forward_cached(x)?;
                (y, LayerCache::Residual(c))
            }
            Layer::Dense(b) => {
                let (y, c) = b.forward_cached(x)?;
                (y, LayerCache::Dense(c))
            }
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Residual(b) => b.forward(x),
            Layer::Dense(b) => b.forward(x),
            _ => Ok(self.forward_cached(x)?.0),
        }
    }

    /// Input gradient and parameter gradients (in `params` order).
    pub fn backward(
        &self,
        x: &Tensor,
        cache: &LayerCache,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        Ok(match (self, cache) {
            (Layer::Conv(c), _) => {
                let g = c.backward(x, grad_out)?;
                (g.input, vec![g.weight, g.bias])
            }
            (Layer::Linear(l), _) => {
                let g = l.backward(x, grad_out)?;
                (g.input, vec![g.weight, g.bias])
            }
            (Layer::Relu, _) => (relu_backward(x, grad_out)?, Vec::new()),
            (Layer::MaxPool, _) => (maxpool2x2_backward(x, grad_out)?, Vec::new()),
            (Layer::GlobalAvgPool, _) => (global_avg_pool_backward(x, grad_out)?, Vec::new()),
            (Layer::Residual(b), LayerCache::Residual(c)) => b.backward(x, c, grad_out)?,
            (Layer::Dense(b), LayerCache::Dense(c)) => b.backward(c, grad_out)?,
            _ => return Err(Error::shape("layer cache does not match layer")),
        })
    }
}

/// Sequential network whose last layer is the classification head and
/// whose second-to-last output is the feature layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NetModel {
    pub arch: Arch,
    pub config: ModelConfig,
    /// `(name, layer)` in execution order.
    pub layers: Vec<(String, Layer)>,
    /// When set, training updates only the head.
    pub frozen: bool,
}

/// Activations recorded by a training forward pass.
pub struct Trace {
    inputs: Vec<Tensor>,
    caches: Vec<LayerCache>,
    pub logits: Tensor,
}

fn named(name: &str, layer: Layer) -> (String, Layer) {
    (name.to_string(), layer)
}

/// Construct a freshly initialized network.
pub fn build_model(arch: Arch, config: ModelConfig) -> Result<NetModel> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, &format!("init/{arch}"));
    let rng = &mut rng;
    let in_ch = config.input[0];
    let mut layers = vec![
        named(
            "stem",
            Layer::Conv(Conv2d::new(in_ch, STEM_CHANNELS, 3, 1, rng)),
        ),
        named("stem.relu", Layer::Relu),
        named("stem.pool", Layer::MaxPool),
    ];
    let trunk_channels = match arch {
        Arch::MiniResNet => {
            layers.extend([
                named(
                    "block1",
                    Layer::Residual(Box::new(ResidualBlock::new(
                        STEM_CHANNELS,
                        STEM_CHANNELS,
                        rng,
                    ))),
                ),
                named("block1.pool", Layer::MaxPool),
                named(
                    "block2",
                    Layer::Residual(Box::new(ResidualBlock::new(
                        STEM_CHANNELS,
                        RESNET_WIDE_CHANNELS,
                        rng,
                    ))),
                ),
                named(
                    "block3",
                    Layer::Residual(Box::new(ResidualBlock::new(
                        RESNET_WIDE_CHANNELS,
                        RESNET_WIDE_CHANNELS,
                        rng,
                    ))),
                ),
            ]);
            RESNET_WIDE_CHANNELS
        }
        Arch::MiniDenseNet => {
            let dense1 = DenseBlock::new(STEM_CHANNELS, DENSE_GROWTH, DENSE_DEPTH, rng);
            let trans = Conv2d::new(dense1.out_channels(), DENSE_TRANSITION_CHANNELS, 1, 0, rng);
            let dense2 = DenseBlock::new(DENSE_TRANSITION_CHANNELS, DENSE_GROWTH, DENSE_DEPTH, rng);
            let out = dense2.out_channels();
            layers.extend([
                named("dense1", Layer::Dense(dense1)),
                named("transition", Layer::Conv(trans)),
                named("transition.pool", Layer::MaxPool),
                named("dense2", Layer::Dense(dense2)),
                named("dense2.relu", Layer::Relu),
            ]);
            out
        }
    };
    layers.extend([
        named("gap", Layer::GlobalAvgPool),
        named(
            "fc",
            Layer::Linear(Linear::new(trunk_channels, config.features, rng)),
        ),
        named("fc.relu", Layer::Relu),
        named(
            "head",
            Layer::Linear(Linear::new(config.features, config.classes, rng)),
        ),
    ]);
    Ok(NetModel {
        arch,
        config,
        layers,
        frozen: false,
    })
}

impl NetModel {
    fn head_index(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn head(&self) -> &Linear {
        match &self.layers[self.head_index()].1 {
            Layer::Linear(l) => l,
            _ => unreachable!("head is always a linear layer"),
        }
    }

    pub fn classes(&self) -> usize {
        self.head().outputs()
    }

    pub fn feature_dim(&self) -> usize {
        self.head().inputs()
    }

    /// Named parameters in a fixed order (`layer.param`).
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .flat_map(|(lname, layer)| {
                layer
                    .params()
                    .into_iter()
                    .map(move |(pname, t)| (format!("{lname}.{pname}"), t))
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|(_, l)| l.params_mut())
            .collect()
    }

    /// Number of parameter tensors belonging to the head.
    pub fn head_param_count(&self) -> usize {
        2
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Convolution and fully connected layers on the main path, counting
    /// each block's internal convolutions but not 1x1 projections.
    pub fn weighted_depth(&self) -> usize {
        self.layers
            .iter()
            .map(|(_, l)| match l {
                Layer::Conv(_) | Layer::Linear(_) => 1,
                Layer::Residual(_) => 2,
                Layer::Dense(b) => b.depth(),
                _ => 0,
            })
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = x.dims3()?;
        if c != self.config.input[0] || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::shape(format!(
                "model expects {} channel(s) and extents divisible by 4, got {c}x{h}x{w}",
                self.config.input[0]
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor, upto: usize) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (_, layer) in &self.layers[..upto] {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, self.layers.len())
    }

    pub fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Penultimate fully connected activation (after its relu).
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, self.head_index())
    }

    pub fn forward_trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (_, layer) in &self.layers {
            let (y, cache) = layer.forward_cached(&h)?;
            inputs.push(std::mem::replace(&mut h, y));
            caches.push(cache);
        }
        Ok(Trace {
            inputs,
            caches,
            logits: h,
        })
    }

    /// Parameter gradients (in `params` order) and the input gradient.
    pub fn backward(&self, trace: &Trace, grad_logits: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        let mut per_layer: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_logits.clone();
        for (i, (_, layer)) in self.layers.iter().enumerate().rev() {
            let (gx, gp) = layer.backward(&trace.inputs[i], &trace.caches[i], &g)?;
            per_layer.push(gp);
            g = gx;
        }
        per_layer.reverse();
        Ok((per_layer.into_iter().flatten().collect(), g))
    }

    /// Switch every residual block's post-addition activation.
    pub fn set_post_activation(&mut self, post: PostActivation) {
        for (_, l) in &mut self.layers {
            if let Layer::Residual(b) = l {
                b.post = post;
            }
        }
    }

    pub fn dense_blocks(&self) -> impl Iterator<Item = &DenseBlock> {
        self.layers.iter().filter_map(|(_, l)| match l {
            Layer::Dense(b) => Some(b),
            _ => None,
        })
    }

    pub fn residual_blocks(&self) -> impl Iterator<Item = &ResidualBlock> {
        self.layers.iter().filter_map(|(_, l)| match l {
            Layer::Residual(b) => Some(b.as_ref()),
            _ => None,
        })
    }
}

/// Prepare a trained network for a new task: every layer except the head is
/// kept bit-for-bit; the head is re-initialized for `new_classes` outputs.
/// With `freeze`, later training only updates the head.
pub fn replace_head(
    model: &NetModel,
    new_classes: usize,
    freeze: bool,
    seed: u64,
) -> Result<NetModel> {
    if new_classes < 2 {
        return Err(Error::Config(format!(
            "new head needs >= 2 classes, got {new_classes}"
        )));
    }
    let mut out = model.clone();
    let mut rng = rng::stream(seed, &format!("head/{}/{new_classes}", model.arch));
    let idx = out.head_index();
    out.layers[idx].1 = Layer::Linear(Linear::new(model.feature_dim(), new_classes, &mut rng));
    out.config.classes = new_classes;
    out.frozen = freeze;
    Ok(out)
}
