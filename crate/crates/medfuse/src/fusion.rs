//! Multimodal fusion: five interchangeable strategies mapping an image
//! vector and text features into one joint representation.
//!
//! `concat` and `elementwise` are parameter-free. `gated` interpolates
//! between transformed image and text vectors with a learned sigmoid gate,
//! `bilinear` captures multiplicative cross-modal interactions, and
//! `crossattn` lets the image vector attend over the per-token text states
//! before a final dense map. Strategies are selected by name in the model
//! configuration.

use crate::error::{Error, Result};
use crate::layers::{
    attention, attention_backward, glorot_uniform, AttentionCache, DenseCache, DenseLayer,
};
use crate::rng::Rng;
use crate::tensor::{outer, sigmoid, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Concat,
    Elementwise,
    Gated,
    Bilinear,
    Crossattn,
}

impl FusionKind {
    pub const ALL: [FusionKind; 5] = [
        FusionKind::Concat,
        FusionKind::Elementwise,
        FusionKind::Gated,
        FusionKind::Bilinear,
        FusionKind::Crossattn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionKind::Concat => "concat",
            FusionKind::Elementwise => "elementwise",
            FusionKind::Gated => "gated",
            FusionKind::Bilinear => "bilinear",
            FusionKind::Crossattn => "crossattn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        FusionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown fusion '{s}'; valid names: {}",
                    FusionKind::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

/// `[v_img ; v_txt]` — output length is always `d_i + d_t`.
pub fn fuse_concat(v_img: &Tensor, v_txt: &Tensor) -> Result<Tensor> {
    v_img.concat1(v_txt)
}

/// `z_k = v_img[k] * v_txt[k]`; requires equal input dimensions.
pub fn fuse_elementwise(v_img: &Tensor, v_txt: &Tensor) -> Result<Tensor> {
    if v_img.dims() != v_txt.dims() {
        return Err(Error::ShapeMismatch {
            op: "fuse_elementwise",
            left: v_img.dims().to_vec(),
            right: v_txt.dims().to_vec(),
        });
    }
    v_img.mul(v_txt)
}

/// Gated fusion: `g = sigmoid(W_g [v_i; v_t] + b_g)`,
/// `z = g * tanh(W_i v_i + b_i) + (1 - g) * tanh(W_t v_t + b_t)`.
#[derive(Debug, Clone)]
pub struct GatedFusion {
    /// `[d_z, d_i + d_t]`
    pub w_g: Tensor,
    pub b_g: Tensor,
    /// `[d_z, d_i]`
    pub w_i: Tensor,
    pub b_i: Tensor,
    /// `[d_z, d_t]`
    pub w_t: Tensor,
    pub b_t: Tensor,
}

#[derive(Debug, Clone)]
pub struct GatedCache {
    v_img: Tensor,
    v_txt: Tensor,
    gate: Tensor,
    tanh_img: Tensor,
    tanh_txt: Tensor,
}

#[derive(Debug, Clone)]
pub struct GatedGrads {
    pub d_w_g: Tensor,
    pub d_b_g: Tensor,
    pub d_w_i: Tensor,
    pub d_b_i: Tensor,
    pub d_w_t: Tensor,
    pub d_b_t: Tensor,
}

impl GatedFusion {
    pub fn init(rng: &mut Rng, d_img: usize, d_txt: usize, d_z: usize) -> Result<Self> {
        Ok(GatedFusion {
            w_g: glorot_uniform(rng, &[d_z, d_img + d_txt], d_img + d_txt, d_z),
            b_g: Tensor::zeros(&[d_z])?,
            w_i: glorot_uniform(rng, &[d_z, d_img], d_img, d_z),
            b_i: Tensor::zeros(&[d_z])?,
            w_t: glorot_uniform(rng, &[d_z, d_txt], d_txt, d_z),
            b_t: Tensor::zeros(&[d_z])?,
        })
    }

    /// Returns `(z, gate, cache)`; the gate is exposed for inspection.
    pub fn forward(&self, v_img: &Tensor, v_txt: &Tensor) -> Result<(Tensor, Tensor, GatedCache)> {
        let joint = v_img.concat1(v_txt)?;
        let gate = self.w_g.matvec(&joint)?.add(&self.b_g)?.map_scalar(sigmoid);
        let tanh_img = self.w_i.matvec(v_img)?.add(&self.b_i)?.map_scalar(f64::tanh);
        let tanh_txt = self.w_t.matvec(v_txt)?.add(&self.b_t)?.map_scalar(f64::tanh);
        let d_z = gate.len();
        let mut z = vec![0.0; d_z];
        for k in 0..d_z {
            z[k] = gate.data()[k] * tanh_img.data()[k]
                + (1.0 - gate.data()[k]) * tanh_txt.data()[k];
        }
        Ok((
            Tensor::from_vec(&[d_z], z)?,
            gate.clone(),
            GatedCache {
                v_img: v_img.clone(),
                v_txt: v_txt.clone(),
                gate,
                tanh_img,
                tanh_txt,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &GatedCache,
        upstream: &Tensor,
    ) -> Result<(Tensor, Tensor, GatedGrads)> {
        let d_z = cache.gate.len();
        if upstream.dims() != [d_z] {
            return Err(Error::ShapeMismatch {
                op: "gated_backward",
                left: vec![d_z],
                right: upstream.dims().to_vec(),
            });
        }
        let g = cache.gate.data();
        let ti = cache.tanh_img.data();
        let tt = cache.tanh_txt.data();
        let u = upstream.data();

        let mut dzg = vec![0.0; d_z]; // pre-sigmoid gate grad
        let mut dzi = vec![0.0; d_z]; // pre-tanh image grad
        let mut dzt = vec![0.0; d_z]; // pre-tanh text grad
        for k in 0..d_z {
            let dg = u[k] * (ti[k] - tt[k]);
            dzg[k] = dg * g[k] * (1.0 - g[k]);
            dzi[k] = u[k] * g[k] * (1.0 - ti[k] * ti[k]);
            dzt[k] = u[k] * (1.0 - g[k]) * (1.0 - tt[k] * tt[k]);
        }
        let dzg = Tensor::from_vec(&[d_z], dzg)?;
        let dzi = Tensor::from_vec(&[d_z], dzi)?;
        let dzt = Tensor::from_vec(&[d_z], dzt)?;

        let joint = cache.v_img.concat1(&cache.v_txt)?;
        let d_w_g = outer(&dzg, &joint)?;
        let d_w_i = outer(&dzi, &cache.v_img)?;
        let d_w_t = outer(&dzt, &cache.v_txt)?;

        let d_joint = self.w_g.matvec_t(&dzg)?;
        let d_i = cache.v_img.len();
        let mut d_v_img = Tensor::from_vec(&[d_i], d_joint.data()[..d_i].to_vec())?;
        let mut d_v_txt =
            Tensor::from_vec(&[cache.v_txt.len()], d_joint.data()[d_i..].to_vec())?;
        d_v_img = d_v_img.add(&self.w_i.matvec_t(&dzi)?)?;
        d_v_txt = d_v_txt.add(&self.w_t.matvec_t(&dzt)?)?;

        Ok((
            d_v_img,
            d_v_txt,
            GatedGrads {
                d_w_g,
                d_b_g: dzg,
                d_w_i,
                d_b_i: dzi,
                d_w_t,
                d_b_t: dzt,
            },
        ))
    }
}

/// Bilinear fusion: `z_k = v_img^T W[k] v_txt + b_k`, optionally with a
/// rank-r factorization `W[k] = U_k^T V_k` (`U_k: [r, d_i]`, `V_k: [r, d_t]`).
#[derive(Debug, Clone)]
pub struct BilinearFusion {
    pub weights: BilinearWeights,
    /// `[d_z]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub enum BilinearWeights {
    /// `[d_z, d_i, d_t]`
    Full(Tensor),
    /// `u: [d_z, r, d_i]`, `v: [d_z, r, d_t]`
    LowRank { u: Tensor, v: Tensor },
}

#[derive(Debug, Clone)]
pub struct BilinearCache {
    v_img: Tensor,
    v_txt: Tensor,
}

#[derive(Debug, Clone)]
pub struct BilinearGrads {
    pub d_weights: BilinearWeights,
    pub d_bias: Tensor,
}

impl BilinearFusion {
    pub fn init(
        rng: &mut Rng,
        d_img: usize,
        d_txt: usize,
        d_z: usize,
        rank: Option<usize>,
    ) -> Result<Self> {
        let weights = match rank {
            None => BilinearWeights::Full(glorot_uniform(
                rng,
                &[d_z, d_img, d_txt],
                d_img * d_txt,
                d_z,
            )),
            Some(r) => {
                if r == 0 {
                    return Err(Error::InvalidArgument("bilinear rank must be >= 1".into()));
                }
                BilinearWeights::LowRank {
                    u: glorot_uniform(rng, &[d_z, r, d_img], d_img, r),
                    v: glorot_uniform(rng, &[d_z, r, d_txt], d_txt, r),
                }
            }
        };
        Ok(BilinearFusion {
            weights,
            bias: Tensor::zeros(&[d_z])?,
        })
    }

    pub fn d_z(&self) -> usize {
        self.bias.len()
    }

    pub fn forward(&self, v_img: &Tensor, v_txt: &Tensor) -> Result<(Tensor, BilinearCache)> {
        let d_z = self.d_z();
        let (d_i, d_t) = (v_img.len(), v_txt.len());
        let mut z = vec![0.0; d_z];
        match &self.weights {
            BilinearWeights::Full(w) => {
                if w.dims() != [d_z, d_i, d_t] {
                    return Err(Error::ShapeMismatch {
                        op: "fuse_bilinear",
                        left: w.dims().to_vec(),
                        right: vec![d_z, d_i, d_t],
                    });
                }
                for k in 0..d_z {
                    let mut acc = self.bias.data()[k];
                    for a in 0..d_i {
                        let va = v_img.data()[a];
                        if va == 0.0 {
                            continue;
                        }
                        let row = &w.data()[(k * d_i + a) * d_t..(k * d_i + a + 1) * d_t];
                        for (b, wv) in row.iter().enumerate() {
                            acc += va * wv * v_txt.data()[b];
                        }
                    }
                    z[k] = acc;
                }
            }
            BilinearWeights::LowRank { u, v } => {
                let r = u.dims()[1];
                for k in 0..d_z {
                    let mut acc = self.bias.data()[k];
                    for ri in 0..r {
                        let urow = &u.data()[(k * r + ri) * d_i..(k * r + ri + 1) * d_i];
                        let vrow = &v.data()[(k * r + ri) * d_t..(k * r + ri + 1) * d_t];
                        let a: f64 = urow.iter().zip(v_img.data()).map(|(x, y)| x * y).sum();
                        let b: f64 = vrow.iter().zip(v_txt.data()).map(|(x, y)| x * y).sum();
                        acc += a * b;
                    }
                    z[k] = acc;
                }
            }
        }
        Ok((
            Tensor::from_vec(&[d_z], z)?,
            BilinearCache {
                v_img: v_img.clone(),
                v_txt: v_txt.clone(),
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &BilinearCache,
        upstream: &Tensor,
    ) -> Result<(Tensor, Tensor, BilinearGrads)> {
        let d_z = self.d_z();
        if upstream.dims() != [d_z] {
            return Err(Error::ShapeMismatch {
                op: "bilinear_backward",
                left: vec![d_z],
                right: upstream.dims().to_vec(),
            });
        }
        let (d_i, d_t) = (cache.v_img.len(), cache.v_txt.len());
        let vi = cache.v_img.data();
        let vt = cache.v_txt.data();
        let mut d_v_img = vec![0.0; d_i];
        let mut d_v_txt = vec![0.0; d_t];
        let d_weights = match &self.weights {
            BilinearWeights::Full(w) => {
                let mut dw = vec![0.0; w.len()];
                for k in 0..d_z {
                    let g = upstream.data()[k];
                    if g == 0.0 {
                        continue;
                    }
                    for a in 0..d_i {
                        for b in 0..d_t {
                            let idx = (k * d_i + a) * d_t + b;
                            dw[idx] += g * vi[a] * vt[b];
                            d_v_img[a] += g * w.data()[idx] * vt[b];
                            d_v_txt[b] += g * w.data()[idx] * vi[a];
                        }
                    }
                }
                BilinearWeights::Full(Tensor::from_vec(w.dims(), dw)?)
            }
            BilinearWeights::LowRank { u, v } => {
                let r = u.dims()[1];
                let mut du = vec![0.0; u.len()];
                let mut dv = vec![0.0; v.len()];
                for k in 0..d_z {
                    let g = upstream.data()[k];
                    for ri in 0..r {
                        let ubase = (k * r + ri) * d_i;
                        let vbase = (k * r + ri) * d_t;
                        let a: f64 = (0..d_i).map(|x| u.data()[ubase + x] * vi[x]).sum();
                        let b: f64 = (0..d_t).map(|x| v.data()[vbase + x] * vt[x]).sum();
                        for x in 0..d_i {
                            du[ubase + x] += g * b * vi[x];
                            d_v_img[x] += g * b * u.data()[ubase + x];
                        }
                        for x in 0..d_t {
                            dv[vbase + x] += g * a * vt[x];
                            d_v_txt[x] += g * a * v.data()[vbase + x];
                        }
                    }
                }
                BilinearWeights::LowRank {
                    u: Tensor::from_vec(u.dims(), du)?,
                    v: Tensor::from_vec(v.dims(), dv)?,
                }
            }
        };
        Ok((
            Tensor::from_vec(&[d_i], d_v_img)?,
            Tensor::from_vec(&[d_t], d_v_txt)?,
            BilinearGrads {
                d_weights,
                d_bias: upstream.clone(),
            },
        ))
    }
}

/// Cross-modal attention: the image vector is the single query row over
/// linear projections of the per-token text states, and the attended context
/// is fused with the image vector by a dense map.
#[derive(Debug, Clone)]
pub struct CrossAttnFusion {
    /// Key projection `[d_k, s]` where `s` is the text state width and
    /// `d_k` equals the image vector dimension.
    pub w_k: Tensor,
    /// Value projection `[d_v, s]`.
    pub w_v: Tensor,
    /// Final map `[d_z, d_k + d_v]`.
    pub out: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct CrossAttnCache {
    states: Tensor,
    att: AttentionCache,
    dense: DenseCache,
}

#[derive(Debug, Clone)]
pub struct CrossAttnGrads {
    pub d_w_k: Tensor,
    pub d_w_v: Tensor,
    pub d_out_weight: Tensor,
    pub d_out_bias: Tensor,
}

impl CrossAttnFusion {
    pub fn init(
        rng: &mut Rng,
        d_img: usize,
        state_width: usize,
        d_v: usize,
        d_z: usize,
    ) -> Result<Self> {
        Ok(CrossAttnFusion {
            w_k: glorot_uniform(rng, &[d_img, state_width], state_width, d_img),
            w_v: glorot_uniform(rng, &[d_v, state_width], state_width, d_v),
            out: DenseLayer::new(
                glorot_uniform(rng, &[d_z, d_img + d_v], d_img + d_v, d_z),
                Tensor::zeros(&[d_z])?,
                None,
            )?,
        })
    }

    /// Returns `(z, attention weights over tokens, cache)`.
    pub fn forward(
        &self,
        v_img: &Tensor,
        text_states: &Tensor,
    ) -> Result<(Tensor, Tensor, CrossAttnCache)> {
        let d_k = self.w_k.dims()[0];
        if v_img.dims() != [d_k] {
            return Err(Error::ShapeMismatch {
                op: "crossattn_query",
                left: vec![d_k],
                right: v_img.dims().to_vec(),
            });
        }
        let keys = text_states.matmul(&transpose2(&self.w_k))?;
        let values = text_states.matmul(&transpose2(&self.w_v))?;
        let q = v_img.reshaped(&[1, d_k])?;
        let (ctx, weights, att) = attention(&q, &keys, &values)?;
        let ctx1 = ctx.reshaped(&[ctx.dims()[1]])?;
        let fused_in = v_img.concat1(&ctx1)?;
        let (z, dense) = self.out.forward(&fused_in)?;
        let t_len = text_states.dims()[0];
        Ok((
            z,
            weights.reshaped(&[t_len])?,
            CrossAttnCache {
                states: text_states.clone(),
                att,
                dense,
            },
        ))
    }

    /// Returns `(d_v_img, d_text_states, grads)`.
    pub fn backward(
        &self,
        cache: &CrossAttnCache,
        upstream: &Tensor,
    ) -> Result<(Tensor, Tensor, CrossAttnGrads)> {
        let d_k = self.w_k.dims()[0];
        let d_v = self.w_v.dims()[0];
        let (d_fused, dense_grads) = self.out.backward(&cache.dense, upstream)?;
        let mut d_v_img = Tensor::from_vec(&[d_k], d_fused.data()[..d_k].to_vec())?;
        let d_ctx = Tensor::from_vec(&[1, d_v], d_fused.data()[d_k..].to_vec())?;
        let (dq, d_keys, d_values) = attention_backward(&cache.att, &d_ctx)?;
        d_v_img = d_v_img.add(&dq.reshaped(&[d_k])?)?;
        // keys = states W_k^T, values = states W_v^T
        let d_w_k = transpose2(&d_keys).matmul(&cache.states)?;
        let d_w_v = transpose2(&d_values).matmul(&cache.states)?;
        let d_states = d_keys
            .matmul(&self.w_k)?
            .add(&d_values.matmul(&self.w_v)?)?;
        Ok((
            d_v_img,
            d_states,
            CrossAttnGrads {
                d_w_k,
                d_w_v,
                d_out_weight: dense_grads.d_weight,
                d_out_bias: dense_grads.d_bias,
            },
        ))
    }
}

fn transpose2(t: &Tensor) -> Tensor {
    let (m, n) = (t.dims()[0], t.dims()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = t.data()[i * n + j];
        }
    }
    Tensor::from_vec(&[n, m], out).unwrap()
}
