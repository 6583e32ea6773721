use std::ops::Range;

use crate::error::{Error, Result};
use crate::nncore::{relu, relu_backward, Conv2d, Tensor};
use crate::rng::Rng;

/// Activation applied after the residual addition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PostActivation {
    Relu,
    /// Linear; lets tests observe the block's raw `f(x) + shortcut(x)`.
    Identity,
}

/// Two 3x3 convolutions with a skip connection:
/// `y = act(f(x) + x)` when shapes match, `y = act(f(x) + w_s x)` with a
/// 1x1 projection `w_s` when the channel count changes.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub projection: Option<Conv2d>,
    pub post: PostActivation,
}

#[derive(Clone, Debug)]
pub struct ResidualCache {
    pre1: Tensor,
    hidden: Tensor,
    sum: Tensor,
}

impl ResidualBlock {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut Rng) -> Self {
        ResidualBlock {
            conv1: Conv2d::new(in_ch, out_ch, 3, 1, rng),
            conv2: Conv2d::new(out_ch, out_ch, 3, 1, rng),
            projection: (in_ch != out_ch).then(|| Conv2d::new(in_ch, out_ch, 1, 0, rng)),
            post: PostActivation::Relu,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        let mut p = vec![
            ("conv1.weight", &self.conv1.weight),
            ("conv1.bias", &self.conv1.bias),
            ("conv2.weight", &self.conv2.weight),
            ("conv2.bias", &self.conv2.bias),
        ];
        if let Some(s) = &self.projection {
            p.push(("skip.weight", &s.weight));
            p.push(("skip.bias", &s.bias));
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
        ];
        if let Some(s) = &mut self.projection {
            p.push(&mut s.weight);
            p.push(&mut s.bias);
        }
        p
    }

    fn shortcut(&self, x: &Tensor) -> Result<Tensor> {
        match &self.projection {
            Some(s) => s.forward(x),
            None => Ok(x.clone()),
        }
    }

    fn activate(&self, z: &Tensor) -> Tensor {
        match self.post {
            PostActivation::Relu => relu(z),
            PostActivation::Identity => z.clone(),
        }
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ResidualCache)> {
        let (c, _, _) = x.dims3()?;
        if c != self.in_channels() {
            return Err(Error::shape(format!(
                "residual block expects {} channels, got {c}",
                self.in_channels()
            )));
        }
        let pre1 = self.conv1.forward(x)?;
        let hidden = relu(&pre1);
        let mut sum = self.conv2.forward(&hidden)?;
        sum.axpy(1.0, &self.shortcut(x)?)?;
        let y = self.activate(&sum);
        Ok((y, ResidualCache { pre1, hidden, sum }))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Returns the input gradient and parameter gradients in `params` order.
    pub fn backward(
        &self,
        x: &Tensor,
        cache: &ResidualCache,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let g_sum = match self.post {
            PostActivation::Relu => relu_backward(&cache.sum, grad_out)?,
            PostActivation::Identity => grad_out.clone(),
        };
        let g2 = self.conv2.backward(&cache.hidden, &g_sum)?;
        let g_pre1 = relu_backward(&cache.pre1, &g2.input)?;
        let g1 = self.conv1.backward(x, &g_pre1)?;
        let mut gx = g1.input;
        let mut grads = vec![g1.weight, g1.bias, g2.weight, g2.bias];
        match &self.projection {
            Some(s) => {
                let gs = s.backward(x, &g_sum)?;
                gx.axpy(1.0, &gs.input)?;
                grads.push(gs.weight);
                grads.push(gs.bias);
            }
            None => gx.axpy(1.0, &g_sum)?,
        }
        Ok((gx, grads))
    }
}

/// `L` composite layers; layer `l` maps `relu(x0 | x1 | ... | x_{l-1})`
/// through a 3x3 convolution to `growth` new channels. The block output is
/// the full concatenation `x0 | x1 | ... | x_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock {
    pub layers: Vec<Conv2d>,
    pub in_channels: usize,
    pub growth: usize,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    /// Pre-activation concatenation seen by each layer.
    inputs: Vec<Tensor>,
}

impl DenseBlock {
    pub fn new(in_channels: usize, growth: usize, depth: usize, rng: &mut Rng) -> Self {
        let layers = (0..depth)
            .map(|l| Conv2d::new(in_channels + l * growth, growth, 3, 1, rng))
            .collect();
        DenseBlock {
            layers,
            in_channels,
            growth,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels + self.depth() * self.growth
    }

    /// Indices of the feature maps layer `l` (zero-based) consumes, where
    /// map 0 is the block input and map `j` is layer `j - 1`'s output.
    pub fn sources(&self, l: usize) -> Range<usize> {
        0..l + 1
    }

    /// Directed feature-map-to-layer connections inside the block.
    pub fn connection_count(&self) -> usize {
        (0..self.depth()).map(|l| self.sources(l).len()).sum()
    }

    /// Channel count at each map index.
    fn map_channels(&self, j: usize) -> usize {
        if j == 0 {
            self.in_channels
        } else {
            self.growth
        }
    }

    pub fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, c)| {
                [
                    (format!("layer{}.weight", l + 1), &c.weight),
                    (format!("layer{}.bias", l + 1), &c.bias),
                ]
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .collect()
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        let (c, _, _) = x.dims3()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "dense block expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let mut maps = vec![x.clone()];
        let mut inputs = Vec::with_capacity(self.depth());
        for (l, conv) in self.layers.iter().enumerate() {
            let parts: Vec<&Tensor> = maps[self.sources(l)].iter().collect();
            let cat = Tensor::concat_channels(&parts)?;
            let y = conv.forward(&relu(&cat))?;
            inputs.push(cat);
            maps.push(y);
        }
        let parts: Vec<&Tensor> = maps.iter().collect();
        Ok((Tensor::concat_channels(&parts)?, DenseCache { inputs }))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn backward(&self, cache: &DenseCache, grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (c, _, _) = grad_out.dims3()?;
        if c != self.out_channels() {
            return Err(Error::shape("dense block gradient shape"));
        }
        // split the output gradient back onto x0 .. x_L
        let mut map_grads = Vec::with_capacity(self.depth() + 1);
        let mut start = 0;
        for j in 0..=self.depth() {
            let n = self.map_channels(j);
            map_grads.push(grad_out.channel_slice(start, n)?);
            start += n;
        }
        let mut grads = vec![Tensor::zeros(&[1]); 2 * self.depth()];
        for l in (0..self.depth()).rev() {
            let conv = &self.layers[l];
            let cat = &cache.inputs[l];
            let g = conv.backward(&relu(cat), &map_grads[l + 1])?;
            let g_cat = relu_backward(cat, &g.input)?;
            let mut offset = 0;
            for j in self.sources(l) {
                let n = self.map_channels(j);
                map_grads[j].axpy(1.0, &g_cat.channel_slice(offset, n)?)?;
                offset += n;
            }
            grads[2 * l] = g.weight;
            grads[2 * l + 1] = g.bias;
        }
        Ok((map_grads.swap_remove(0), grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn zero_branches(block: &mut ResidualBlock) {
        for p in block.params_mut() {
            p.data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_residual_branch_is_identity() {
        let mut rng = stream(1, "t");
        let mut b = ResidualBlock::new(3, 3, &mut rng);
        zero_branches(&mut b);
        b.post = PostActivation::Identity;
        let x = crate::nncore::fragments::random_tensor(&[3, 4, 4], &mut rng);
        assert_eq!(b.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_projection_block_outputs_zero() {
        let mut rng = stream(2, "t");
        let mut b = ResidualBlock::new(2, 4, &mut rng);
        zero_branches(&mut b);
        b.post = PostActivation::Identity;
        let x = crate::nncore::fragments::random_tensor(&[2, 4, 4], &mut rng);
        let y = b.forward(&x).unwrap();
        assert_eq!(y.shape(), &[4, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_channel_arithmetic() {
        let mut rng = stream(3, "t");
        let b = DenseBlock::new(4, 2, 1, &mut rng);
        assert_eq!(b.out_channels(), 6);
        let b = DenseBlock::new(4, 2, 3, &mut rng);
        assert_eq!(b.layers[2].in_channels(), 8);
        let y = b.forward(&Tensor::filled(&[4, 3, 3], 0.1)).unwrap();
        assert_eq!(y.shape(), &[10, 3, 3]);
        assert_eq!(DenseBlock::new(4, 2, 4, &mut rng).connection_count(), 10);
    }

    #[test]
    fn dense_output_starts_with_input() {
        let mut rng = stream(4, "t");
        let b = DenseBlock::new(2, 3, 2, &mut rng);
        let x = crate::nncore::fragments::random_tensor(&[2, 3, 3], &mut rng);
        let y = b.forward(&x).unwrap();
        assert_eq!(y.channel_slice(0, 2).unwrap(), x);
    }
}
