use super::{init::glorot_uniform, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if !x.same_shape(grad_out) {
        return Err(Error::shape("relu gradient shape"));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

fn pool_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    let (c, h, w) = x.dims3()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!(
            "maxpool2x2 needs even extents, got {h}x{w}"
        )));
    }
    Ok((c, h, w))
}

/// Flat index (into the input) of each window's maximum; the first in
/// row-major order wins ties.
fn pool_argmax(x: &Tensor) -> Result<Vec<usize>> {
    let (c, h, w) = pool_dims(x)?;
    let d = x.data();
    let (oh, ow) = (h / 2, w / 2);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for r in 0..oh {
            for q in 0..ow {
                let base = (ci * h + 2 * r) * w + 2 * q;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if d[cand] > d[best] {
                        best = cand;
                    }
                }
                idx.push(best);
            }
        }
    }
    Ok(idx)
}

pub fn maxpool2x2(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = pool_dims(x)?;
    let d = x.data();
    let data = pool_argmax(x)?.into_iter().map(|i| d[i]).collect();
    Tensor::new(vec![c, h / 2, w / 2], data)
}

pub fn maxpool2x2_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (c, h, w) = pool_dims(x)?;
    if grad_out.shape() != [c, h / 2, w / 2] {
        return Err(Error::shape("maxpool gradient shape"));
    }
    let mut gx = Tensor::zeros(x.shape());
    let gd = gx.data_mut();
    for (i, g) in pool_argmax(x)?.into_iter().zip(grad_out.data()) {
        gd[i] += g;
    }
    Ok(gx)
}

/// `(C, H, W) -> (C)` channel means.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    let n = (h * w) as f64;
    Ok(Tensor::vector(
        (0..c)
            .map(|ci| x.plane(ci).iter().sum::<f64>() / n)
            .collect(),
    ))
}

pub fn global_avg_pool_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    if grad_out.shape() != [c] {
        return Err(Error::shape("global average pool gradient shape"));
    }
    let n = (h * w) as f64;
    let mut data = Vec::with_capacity(c * h * w);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g / n, h * w));
    }
    Tensor::new(vec![c, h, w], data)
}

/// Fully connected layer `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct LinearGrad {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Linear {
            weight: glorot_uniform(&[outputs, inputs], inputs, outputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape(format!(
                "linear weight {:?} with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Linear { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.inputs() {
            return Err(Error::shape(format!(
                "linear expects {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let n = self.inputs();
        let w = self.weight.data();
        let out = (0..self.outputs())
            .map(|o| {
                let row = &w[o * n..(o + 1) * n];
                self.bias.data()[o] + row.iter().zip(x.data()).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(Tensor::vector(out))
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<LinearGrad> {
        self.check(x)?;
        if grad_out.len() != self.outputs() {
            return Err(Error::shape("linear gradient shape"));
        }
        let n = self.inputs();
        let w = self.weight.data();
        let mut gw = vec![0.0; w.len()];
        let mut gx = vec![0.0; n];
        for (o, &g) in grad_out.data().iter().enumerate() {
            let row = &w[o * n..(o + 1) * n];
            for ((gwv, gxv), (&wv, &xv)) in gw[o * n..(o + 1) * n]
                .iter_mut()
                .zip(gx.iter_mut())
                .zip(row.iter().zip(x.data()))
            {
                *gwv = g * xv;
                *gxv += g * wv;
            }
        }
        Ok(LinearGrad {
            input: Tensor::new(x.shape().to_vec(), gx)?,
            weight: Tensor::new(self.weight.shape().to_vec(), gw)?,
            bias: grad_out.clone().reshape(vec![self.outputs()])?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let y = relu(&Tensor::vector(vec![-1.0, 0.0, 2.0]));
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn gap_of_constant_channel() {
        let x = Tensor::filled(&[2, 3, 5], 1.75);
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[1.75, 1.75]);
    }

    #[test]
    fn identity_linear() {
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let l = Linear::from_parts(eye, Tensor::zeros(&[3])).unwrap();
        let x = Tensor::vector(vec![0.5, -2.0, 9.0]);
        assert_eq!(l.forward(&x).unwrap(), x);
    }

    #[test]
    fn maxpool_odd_extent_rejected() {
        assert!(maxpool2x2(&Tensor::zeros(&[1, 3, 4])).is_err());
    }

    #[test]
    fn maxpool_tie_goes_to_first_in_row_major() {
        let x = Tensor::new(vec![1, 2, 2], vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let g = maxpool2x2_backward(&x, &Tensor::filled(&[1, 1, 1], 1.0)).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);

        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 7.0, 7.0]).unwrap();
        assert_eq!(maxpool2x2(&x).unwrap().data(), &[7.0]);
        let g = maxpool2x2_backward(&x, &Tensor::filled(&[1, 1, 1], 3.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 3.0, 0.0]);
    }
}
