//! 2D convolution and pooling over `[C, H, W]` feature maps.
//!
//! Convolution is cross-correlation (no kernel flip) with valid padding and
//! stride 1: `pre[c,i,j] = sum_{c',m,n} w[c,c',m,n] * x[c', i+m, j+n] + b[c]`.

use crate::error::{Error, Result};
use crate::tensor::{Tensor, Unary};

#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    /// `[C_out, C_in, kH, kW]`
    pub kernels: Tensor,
    /// `[C_out]`, one scalar per output channel
    pub bias: Tensor,
    pub activation: Option<Unary>,
}

#[derive(Debug, Clone)]
pub struct Conv2dCache {
    x: Tensor,
    pre: Tensor,
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    pub d_kernels: Tensor,
    pub d_bias: Tensor,
}

impl Conv2dLayer {
    pub fn new(kernels: Tensor, bias: Tensor, activation: Option<Unary>) -> Result<Self> {
        if kernels.shape().rank() != 4 || bias.shape().rank() != 1
            || kernels.dims()[0] != bias.len()
        {
            return Err(Error::ShapeMismatch {
                op: "conv2d_new",
                left: kernels.dims().to_vec(),
                right: bias.dims().to_vec(),
            });
        }
        Ok(Conv2dLayer {
            kernels,
            bias,
            activation,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.dims()[1]
    }

    pub fn kernel_hw(&self) -> (usize, usize) {
        (self.kernels.dims()[2], self.kernels.dims()[3])
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv2dCache)> {
        let (c_out, c_in) = (self.out_channels(), self.in_channels());
        let (kh, kw) = self.kernel_hw();
        if x.shape().rank() != 3 || x.dims()[0] != c_in {
            return Err(Error::ShapeMismatch {
                op: "conv2d_forward",
                left: self.kernels.dims().to_vec(),
                right: x.dims().to_vec(),
            });
        }
        let (h, w) = (x.dims()[1], x.dims()[2]);
        if h < kh || w < kw {
            return Err(Error::InvalidArgument(format!(
                "kernel {kh}x{kw} larger than input {h}x{w}"
            )));
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut pre = vec![0.0; c_out * oh * ow];
        for c in 0..c_out {
            let b = self.bias.data()[c];
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b;
                    for cc in 0..c_in {
                        for m in 0..kh {
                            let krow = &self.kernels.data()
                                [((c * c_in + cc) * kh + m) * kw..((c * c_in + cc) * kh + m + 1) * kw];
                            let xrow = &x.data()[(cc * h + i + m) * w + j..(cc * h + i + m) * w + j + kw];
                            for n in 0..kw {
                                acc += krow[n] * xrow[n];
                            }
                        }
                    }
                    pre[(c * oh + i) * ow + j] = acc;
                }
            }
        }
        let pre = Tensor::from_vec(&[c_out, oh, ow], pre)?;
        let y = match self.activation {
            Some(a) => pre.map(a),
            None => pre.clone(),
        };
        Ok((
            y,
            Conv2dCache {
                x: x.clone(),
                pre,
            },
        ))
    }

    pub fn backward(&self, cache: &Conv2dCache, upstream: &Tensor) -> Result<(Tensor, Conv2dGrads)> {
        if upstream.dims() != cache.pre.dims() {
            return Err(Error::ShapeMismatch {
                op: "conv2d_backward",
                left: cache.pre.dims().to_vec(),
                right: upstream.dims().to_vec(),
            });
        }
        let (c_out, c_in) = (self.out_channels(), self.in_channels());
        let (kh, kw) = self.kernel_hw();
        let (h, w) = (cache.x.dims()[1], cache.x.dims()[2]);
        let (oh, ow) = (h - kh + 1, w - kw + 1);

        let dpre: Vec<f64> = match self.activation {
            Some(a) => upstream
                .data()
                .iter()
                .zip(cache.pre.data())
                .map(|(&u, &p)| u * a.derivative(p))
                .collect(),
            None => upstream.data().to_vec(),
        };

        let mut d_kernels = vec![0.0; self.kernels.len()];
        let mut d_bias = vec![0.0; c_out];
        let mut dx = vec![0.0; cache.x.len()];
        for c in 0..c_out {
            for i in 0..oh {
                for j in 0..ow {
                    let g = dpre[(c * oh + i) * ow + j];
                    if g == 0.0 {
                        continue;
                    }
                    d_bias[c] += g;
                    for cc in 0..c_in {
                        for m in 0..kh {
                            for n in 0..kw {
                                let kidx = ((c * c_in + cc) * kh + m) * kw + n;
                                let xidx = (cc * h + i + m) * w + j + n;
                                d_kernels[kidx] += g * cache.x.data()[xidx];
                                dx[xidx] += g * self.kernels.data()[kidx];
                            }
                        }
                    }
                }
            }
        }
        Ok((
            Tensor::from_vec(cache.x.dims(), dx)?,
            Conv2dGrads {
                d_kernels: Tensor::from_vec(self.kernels.dims(), d_kernels)?,
                d_bias: Tensor::from_vec(&[c_out], d_bias)?,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Strided window pooling. Output extent per axis is
/// `floor((extent - window) / stride) + 1`.
#[derive(Debug, Clone, Copy)]
pub struct Pool2d {
    pub kind: PoolKind,
    pub window: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct Pool2dCache {
    in_dims: Vec<usize>,
    /// For max pooling: flat input index chosen per output cell (first
    /// maximum in row-major scan order, so ties are deterministic).
    argmax: Vec<usize>,
}

impl Pool2d {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Pool2dCache)> {
        if x.shape().rank() != 3 {
            return Err(Error::InvalidShape(format!(
                "pool2d expects [C,H,W], got {:?}",
                x.dims()
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("pool stride must be >= 1".into()));
        }
        let (c_n, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        if h < self.window || w < self.window {
            return Err(Error::InvalidArgument(format!(
                "pool window {} larger than input {h}x{w}",
                self.window
            )));
        }
        let oh = (h - self.window) / self.stride + 1;
        let ow = (w - self.window) / self.stride + 1;
        let mut out = vec![0.0; c_n * oh * ow];
        let mut argmax = Vec::new();
        if self.kind == PoolKind::Max {
            argmax.resize(c_n * oh * ow, 0);
        }
        for c in 0..c_n {
            for i in 0..oh {
                for j in 0..ow {
                    let (r0, c0) = (i * self.stride, j * self.stride);
                    match self.kind {
                        PoolKind::Max => {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_idx = 0;
                            for m in 0..self.window {
                                for n in 0..self.window {
                                    let idx = (c * h + r0 + m) * w + c0 + n;
                                    let v = x.data()[idx];
                                    if v > best {
                                        best = v;
                                        best_idx = idx;
                                    }
                                }
                            }
                            out[(c * oh + i) * ow + j] = best;
                            argmax[(c * oh + i) * ow + j] = best_idx;
                        }
                        PoolKind::Avg => {
                            let mut acc = 0.0;
                            for m in 0..self.window {
                                for n in 0..self.window {
                                    acc += x.data()[(c * h + r0 + m) * w + c0 + n];
                                }
                            }
                            out[(c * oh + i) * ow + j] =
                                acc / (self.window * self.window) as f64;
                        }
                    }
                }
            }
        }
        Ok((
            Tensor::from_vec(&[c_n, oh, ow], out)?,
            Pool2dCache {
                in_dims: x.dims().to_vec(),
                argmax,
            },
        ))
    }

    pub fn backward(&self, cache: &Pool2dCache, upstream: &Tensor) -> Result<Tensor> {
        let (c_n, h, w) = (cache.in_dims[0], cache.in_dims[1], cache.in_dims[2]);
        let oh = (h - self.window) / self.stride + 1;
        let ow = (w - self.window) / self.stride + 1;
        if upstream.dims() != [c_n, oh, ow] {
            return Err(Error::ShapeMismatch {
                op: "pool2d_backward",
                left: vec![c_n, oh, ow],
                right: upstream.dims().to_vec(),
            });
        }
        let mut dx = vec![0.0; c_n * h * w];
        for c in 0..c_n {
            for i in 0..oh {
                for j in 0..ow {
                    let u = upstream.data()[(c * oh + i) * ow + j];
                    match self.kind {
                        PoolKind::Max => {
                            dx[cache.argmax[(c * oh + i) * ow + j]] += u;
                        }
                        PoolKind::Avg => {
                            let share = u / (self.window * self.window) as f64;
                            let (r0, c0) = (i * self.stride, j * self.stride);
                            for m in 0..self.window {
                                for n in 0..self.window {
                                    dx[(c * h + r0 + m) * w + c0 + n] += share;
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&cache.in_dims, dx)
    }
}

#[derive(Debug, Clone)]
pub struct GlobalPoolCache {
    in_dims: Vec<usize>,
    /// Flat index of the (first) per-channel maximum, for max pooling.
    argmax: Vec<usize>,
}

/// Per-channel spatial reduction: `[C,H,W] -> [C]`.
pub fn global_pool(kind: PoolKind, x: &Tensor) -> Result<(Tensor, GlobalPoolCache)> {
    if x.shape().rank() != 3 {
        return Err(Error::InvalidShape(format!(
            "global_pool expects [C,H,W], got {:?}",
            x.dims()
        )));
    }
    let (c_n, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let mut out = Vec::with_capacity(c_n);
    let mut argmax = Vec::new();
    for c in 0..c_n {
        let slice = &x.data()[c * h * w..(c + 1) * h * w];
        match kind {
            PoolKind::Avg => out.push(slice.iter().sum::<f64>() / (h * w) as f64),
            PoolKind::Max => {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for (i, &v) in slice.iter().enumerate() {
                    if v > best {
                        best = v;
                        best_idx = c * h * w + i;
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[c_n], out)?,
        GlobalPoolCache {
            in_dims: x.dims().to_vec(),
            argmax,
        },
    ))
}

pub fn global_pool_backward(
    kind: PoolKind,
    cache: &GlobalPoolCache,
    upstream: &Tensor,
) -> Result<Tensor> {
    let (c_n, h, w) = (cache.in_dims[0], cache.in_dims[1], cache.in_dims[2]);
    if upstream.dims() != [c_n] {
        return Err(Error::ShapeMismatch {
            op: "global_pool_backward",
            left: vec![c_n],
            right: upstream.dims().to_vec(),
        });
    }
    let mut dx = vec![0.0; c_n * h * w];
    for c in 0..c_n {
        match kind {
            PoolKind::Avg => {
                let share = upstream.data()[c] / (h * w) as f64;
                for v in &mut dx[c * h * w..(c + 1) * h * w] {
                    *v += share;
                }
            }
            PoolKind::Max => dx[cache.argmax[c]] += upstream.data()[c],
        }
    }
    Tensor::from_vec(&cache.in_dims, dx)
}
