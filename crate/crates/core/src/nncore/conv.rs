//! Valid 2-D cross-correlation.
//!
//! For an input map `x` of size `S x T` and an `m x n` kernel `w`,
//! `out[s, t] = sum_a sum_b x[s + a, t + b] * w[a, b]` (zero-based), summed
//! over input channels plus a per-output-channel bias. The output is
//! `(S - m + 1) x (T - n + 1)`. The kernel is not flipped.
//!
//! `padding` surrounds the input with zeros before the valid correlation,
//! which is how the residual and dense blocks keep their spatial size.

use super::{init::glorot_uniform, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    /// `(out_channels, in_channels, rows, cols)`
    pub weight: Tensor,
    /// `(out_channels)`
    pub bias: Tensor,
    pub padding: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrad {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        Conv2d {
            weight: glorot_uniform(
                &[out_channels, in_channels, kernel, kernel],
                fan_in,
                fan_out,
                rng,
            ),
            bias: Tensor::zeros(&[out_channels]),
            padding,
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, padding: usize) -> Result<Self> {
        if weight.rank() != 4 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape(format!(
                "conv weight {:?} with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Conv2d {
            weight,
            bias,
            padding,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    fn geometry(&self, x: &Tensor) -> Result<Geometry> {
        let (c, s, t) = x.dims3()?;
        let (m, n) = self.kernel_size();
        if c != self.in_channels() {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let ps = s + 2 * self.padding;
        let pt = t + 2 * self.padding;
        if m > ps || n > pt {
            return Err(Error::shape(format!(
                "kernel {m}x{n} larger than input {ps}x{pt}"
            )));
        }
        Ok(Geometry {
            c,
            s,
            t,
            ps,
            pt,
            m,
            n,
            os: ps - m + 1,
            ot: pt - n + 1,
        })
    }

    fn padded(&self, x: &Tensor, g: &Geometry) -> Vec<f64> {
        if self.padding == 0 {
            return x.data().to_vec();
        }
        let p = self.padding;
        let mut out = vec![0.0; g.c * g.ps * g.pt];
        for ci in 0..g.c {
            let src = x.plane(ci);
            for r in 0..g.s {
                let dst = ci * g.ps * g.pt + (r + p) * g.pt + p;
                out[dst..dst + g.t].copy_from_slice(&src[r * g.t..(r + 1) * g.t]);
            }
        }
        out
    }

    pub fn output_shape(&self, x: &Tensor) -> Result<[usize; 3]> {
        let g = self.geometry(x)?;
        Ok([self.out_channels(), g.os, g.ot])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let g = self.geometry(x)?;
        let xp = self.padded(x, &g);
        let oc = self.out_channels();
        let w = self.weight.data();
        let plane = g.os * g.ot;
        let mut out = vec![0.0; oc * plane];
        for o in 0..oc {
            let dst_plane = &mut out[o * plane..(o + 1) * plane];
            dst_plane.fill(self.bias.data()[o]);
            for ci in 0..g.c {
                let src_plane = &xp[ci * g.ps * g.pt..(ci + 1) * g.ps * g.pt];
                for a in 0..g.m {
                    for b in 0..g.n {
                        let wv = w[((o * g.c + ci) * g.m + a) * g.n + b];
                        if wv == 0.0 {
                            continue;
                        }
                        for s in 0..g.os {
                            let src = &src_plane[(s + a) * g.pt + b..(s + a) * g.pt + b + g.ot];
                            let dst = &mut dst_plane[s * g.ot..(s + 1) * g.ot];
                            for (d, v) in dst.iter_mut().zip(src) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![oc, g.os, g.ot], out)
    }

    /// Exact gradients given the forward input and the upstream gradient.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<ConvGrad> {
        let g = self.geometry(x)?;
        let oc = self.out_channels();
        if grad_out.shape() != [oc, g.os, g.ot] {
            return Err(Error::shape(format!(
                "conv grad {:?}, expected {:?}",
                grad_out.shape(),
                [oc, g.os, g.ot]
            )));
        }
        let xp = self.padded(x, &g);
        let w = self.weight.data();
        let go = grad_out.data();
        let plane = g.os * g.ot;
        let pplane = g.ps * g.pt;
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; oc];
        let mut gxp = vec![0.0; g.c * pplane];
        for o in 0..oc {
            let gplane = &go[o * plane..(o + 1) * plane];
            gb[o] = gplane.iter().sum();
            for ci in 0..g.c {
                let src_plane = &xp[ci * pplane..(ci + 1) * pplane];
                let gx_plane = &mut gxp[ci * pplane..(ci + 1) * pplane];
                for a in 0..g.m {
                    for b in 0..g.n {
                        let wi = ((o * g.c + ci) * g.m + a) * g.n + b;
                        let wv = w[wi];
                        let mut acc = 0.0;
                        for s in 0..g.os {
                            let off = (s + a) * g.pt + b;
                            let grow = &gplane[s * g.ot..(s + 1) * g.ot];
                            let src = &src_plane[off..off + g.ot];
                            acc += grow.iter().zip(src).map(|(p, q)| p * q).sum::<f64>();
                            let dst = &mut gx_plane[off..off + g.ot];
                            for (d, gv) in dst.iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        }
                        gw[wi] += acc;
                    }
                }
            }
        }
        let input = if self.padding == 0 {
            Tensor::new(vec![g.c, g.s, g.t], gxp)?
        } else {
            let p = self.padding;
            let mut gx = vec![0.0; g.c * g.s * g.t];
            for ci in 0..g.c {
                for r in 0..g.s {
                    let src = ci * pplane + (r + p) * g.pt + p;
                    let dst = (ci * g.s + r) * g.t;
                    gx[dst..dst + g.t].copy_from_slice(&gxp[src..src + g.t]);
                }
            }
            Tensor::new(vec![g.c, g.s, g.t], gx)?
        };
        Ok(ConvGrad {
            input,
            weight: Tensor::new(self.weight.shape().to_vec(), gw)?,
            bias: Tensor::new(vec![oc], gb)?,
        })
    }
}

struct Geometry {
    c: usize,
    s: usize,
    t: usize,
    ps: usize,
    pt: usize,
    m: usize,
    n: usize,
    os: usize,
    ot: usize,
}
