//! Scaled dot-product attention and additive attention pooling.

use crate::error::{Error, Result};
use crate::layers::{glorot_uniform, softmax_vec_backward};
use crate::rng::Rng;
use crate::tensor::{outer, Tensor};

#[derive(Debug, Clone)]
pub struct AttentionCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    weights: Tensor,
}

/// Scaled dot-product attention:
/// `weights = softmax(q k^T / sqrt(d_k))` row-wise, `out = weights v`.
///
/// `q: [T_q, d_k]`, `k: [T_k, d_k]`, `v: [T_k, d_v]`.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, Tensor, AttentionCache)> {
    if q.shape().rank() != 2 || k.shape().rank() != 2 || v.shape().rank() != 2 {
        return Err(Error::InvalidShape("attention expects rank-2 q, k, v".into()));
    }
    if q.dims()[1] != k.dims()[1] {
        return Err(Error::ShapeMismatch {
            op: "attention_qk",
            left: q.dims().to_vec(),
            right: k.dims().to_vec(),
        });
    }
    if k.dims()[0] != v.dims()[0] {
        return Err(Error::ShapeMismatch {
            op: "attention_kv",
            left: k.dims().to_vec(),
            right: v.dims().to_vec(),
        });
    }
    let d_k = q.dims()[1];
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut scores = q.matmul(&transpose(k))?;
    for s in scores.data_mut() {
        *s *= scale;
    }
    let weights = scores.softmax(1)?;
    let out = weights.matmul(v)?;
    Ok((
        out,
        weights.clone(),
        AttentionCache {
            q: q.clone(),
            k: k.clone(),
            v: v.clone(),
            weights,
        },
    ))
}

/// Backward through [`attention`] given the gradient of `out`.
/// Returns `(dq, dk, dv)`.
pub fn attention_backward(
    cache: &AttentionCache,
    d_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t_q, d_k) = (cache.q.dims()[0], cache.q.dims()[1]);
    let t_k = cache.k.dims()[0];
    if d_out.dims() != [t_q, cache.v.dims()[1]] {
        return Err(Error::ShapeMismatch {
            op: "attention_backward",
            left: vec![t_q, cache.v.dims()[1]],
            right: d_out.dims().to_vec(),
        });
    }
    let scale = 1.0 / (d_k as f64).sqrt();
    // dV = weights^T d_out
    let dv = transpose(&cache.weights).matmul(d_out)?;
    // dW = d_out v^T, then row-wise softmax backward into scores.
    let dw = d_out.matmul(&transpose(&cache.v))?;
    let mut dscores = vec![0.0; t_q * t_k];
    for r in 0..t_q {
        let ds = softmax_vec_backward(cache.weights.row(r), dw.row(r));
        dscores[r * t_k..(r + 1) * t_k].copy_from_slice(&ds);
    }
    let mut dscores = Tensor::from_vec(&[t_q, t_k], dscores)?;
    for s in dscores.data_mut() {
        *s *= scale;
    }
    let dq = dscores.matmul(&cache.k)?;
    let dk = transpose(&dscores).matmul(&cache.q)?;
    Ok((dq, dk, dv))
}

fn transpose(t: &Tensor) -> Tensor {
    let (m, n) = (t.dims()[0], t.dims()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = t.data()[i * n + j];
        }
    }
    Tensor::from_vec(&[n, m], out).unwrap()
}

/// Additive attention pooling over a state sequence:
/// `score_t = w . tanh(W_a hs[t])`, `alphas = softmax(scores)`,
/// `c = sum_t alphas[t] * hs[t]`.
#[derive(Debug, Clone)]
pub struct AttentionPool {
    /// `[d_att, in_dim]`
    pub w_a: Tensor,
    /// `[d_att]`
    pub w: Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionPoolCache {
    hs: Tensor,
    /// `tanh(W_a hs[t])` per row: `[T, d_att]`
    a_rows: Tensor,
    alphas: Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionPoolGrads {
    pub d_w_a: Tensor,
    pub d_w: Tensor,
}

impl AttentionPool {
    pub fn new(w_a: Tensor, w: Tensor) -> Result<Self> {
        if w_a.shape().rank() != 2 || w.shape().rank() != 1 || w_a.dims()[0] != w.len() {
            return Err(Error::ShapeMismatch {
                op: "attention_pool_new",
                left: w_a.dims().to_vec(),
                right: w.dims().to_vec(),
            });
        }
        Ok(AttentionPool { w_a, w })
    }

    pub fn init(rng: &mut Rng, in_dim: usize, d_att: usize) -> Result<Self> {
        Ok(AttentionPool {
            w_a: glorot_uniform(rng, &[d_att, in_dim], in_dim, d_att),
            w: glorot_uniform(rng, &[d_att], d_att, 1),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w_a.dims()[1]
    }

    /// `hs: [T, in_dim] -> (c: [in_dim], alphas: [T])`.
    pub fn forward(&self, hs: &Tensor) -> Result<(Tensor, Tensor, AttentionPoolCache)> {
        if hs.shape().rank() != 2 || hs.dims()[1] != self.in_dim() {
            return Err(Error::ShapeMismatch {
                op: "attention_pool_forward",
                left: vec![self.in_dim()],
                right: hs.dims().to_vec(),
            });
        }
        let t_len = hs.dims()[0];
        let d_att = self.w.len();
        let in_dim = self.in_dim();
        let mut a_rows = Vec::with_capacity(t_len * d_att);
        let mut scores = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let h_t = Tensor::from_vec(&[in_dim], hs.row(t).to_vec())?;
            let a = self.w_a.matvec(&h_t)?.map_scalar(f64::tanh);
            scores.push(a.mul(&self.w)?.sum());
            a_rows.extend_from_slice(a.data());
        }
        let alphas = Tensor::from_vec(&[t_len], scores)?.softmax(0)?;
        let mut c = vec![0.0; in_dim];
        for t in 0..t_len {
            let alpha = alphas.data()[t];
            for (ck, hk) in c.iter_mut().zip(hs.row(t)) {
                *ck += alpha * hk;
            }
        }
        Ok((
            Tensor::from_vec(&[in_dim], c)?,
            alphas.clone(),
            AttentionPoolCache {
                hs: hs.clone(),
                a_rows: Tensor::from_vec(&[t_len, d_att], a_rows)?,
                alphas,
            },
        ))
    }

    /// Backward given the gradient of the pooled vector `c`.
    pub fn backward(
        &self,
        cache: &AttentionPoolCache,
        d_c: &Tensor,
    ) -> Result<(Tensor, AttentionPoolGrads)> {
        let in_dim = self.in_dim();
        if d_c.dims() != [in_dim] {
            return Err(Error::ShapeMismatch {
                op: "attention_pool_backward",
                left: vec![in_dim],
                right: d_c.dims().to_vec(),
            });
        }
        let t_len = cache.hs.dims()[0];
        let d_att = self.w.len();

        // c = sum_t alpha_t hs_t: gradient reaches both alphas and hs rows.
        let mut d_alpha = vec![0.0; t_len];
        for t in 0..t_len {
            d_alpha[t] = d_c
                .data()
                .iter()
                .zip(cache.hs.row(t))
                .map(|(a, b)| a * b)
                .sum();
        }
        let d_scores = softmax_vec_backward(cache.alphas.data(), &d_alpha);

        let mut d_w_a = Tensor::zeros(self.w_a.dims())?;
        let mut d_w = Tensor::zeros(&[d_att])?;
        let mut d_hs = Tensor::zeros(cache.hs.dims())?;
        for t in 0..t_len {
            let alpha = cache.alphas.data()[t];
            let ds = d_scores[t];
            let a_t = Tensor::from_vec(&[d_att], cache.a_rows.row(t).to_vec())?;
            // score_t = w . a_t
            for (dw, av) in d_w.data_mut().iter_mut().zip(a_t.data()) {
                *dw += ds * av;
            }
            // through tanh: dz = (w * ds) .* (1 - a_t^2)
            let dz: Vec<f64> = self
                .w
                .data()
                .iter()
                .zip(a_t.data())
                .map(|(&wv, &av)| ds * wv * (1.0 - av * av))
                .collect();
            let dz = Tensor::from_vec(&[d_att], dz)?;
            let h_t = Tensor::from_vec(&[in_dim], cache.hs.row(t).to_vec())?;
            let dwa = outer(&dz, &h_t)?;
            for (dst, src) in d_w_a.data_mut().iter_mut().zip(dwa.data()) {
                *dst += src;
            }
            let dh_score = self.w_a.matvec_t(&dz)?;
            let row = &mut d_hs.data_mut()[t * in_dim..(t + 1) * in_dim];
            for k in 0..in_dim {
                row[k] += dh_score.data()[k] + alpha * d_c.data()[k];
            }
        }
        Ok((d_hs, AttentionPoolGrads { d_w_a, d_w }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testutil::*;

    #[test]
    fn single_key_passes_value_through() {
        let q = Tensor::from_vec(&[1, 2], vec![0.3, -0.8]).unwrap();
        let k = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let v = Tensor::from_vec(&[1, 3], vec![5.0, 6.0, 7.0]).unwrap();
        let (out, weights, _) = attention(&q, &k, &v).unwrap();
        assert_eq!(weights.data(), &[1.0]);
        assert_eq!(out.data(), v.data());
    }

    #[test]
    fn orthogonal_query_gives_uniform_weights() {
        let q = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        let k = Tensor::from_vec(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.5]).unwrap();
        let v = Tensor::from_vec(&[3, 1], vec![3.0, 6.0, 9.0]).unwrap();
        let (out, weights, _) = attention(&q, &k, &v).unwrap();
        for w in weights.data() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((out.data()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_key_closed_form() {
        // d_k = 1: scores are q*k scaled by 1/sqrt(1) = 1.
        let q = Tensor::from_vec(&[1, 1], vec![2.0]).unwrap();
        let k = Tensor::from_vec(&[2, 1], vec![2.0, 0.0]).unwrap();
        let v = Tensor::from_vec(&[2, 1], vec![1.0, 0.0]).unwrap();
        let (out, weights, _) = attention(&q, &k, &v).unwrap();
        let e4 = 4.0f64.exp();
        let w0 = e4 / (e4 + 1.0);
        assert!((weights.data()[0] - w0).abs() < 1e-12);
        assert!((weights.data()[0] - 0.98201).abs() < 1e-5);
        assert!((weights.data()[1] - 0.01799).abs() < 1e-5);
        assert!((out.data()[0] - w0).abs() < 1e-12);
    }

    #[test]
    fn weight_rows_sum_to_one() {
        let mut rng = Rng::from_seed(31);
        for _ in 0..20 {
            let t_q = rng.below(4) + 1;
            let t_k = rng.below(4) + 1;
            let d_k = rng.below(3) + 1;
            let d_v = rng.below(3) + 1;
            let q = rand_tensor(&mut rng, &[t_q, d_k]);
            let k = rand_tensor(&mut rng, &[t_k, d_k]);
            let v = rand_tensor(&mut rng, &[t_k, d_v]);
            let (_, weights, _) = attention(&q, &k, &v).unwrap();
            for r in 0..t_q {
                let sum: f64 = weights.row(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(weights.row(r).iter().all(|&w| w > 0.0 && w <= 1.0));
            }
        }
    }

    #[test]
    fn attention_rejects_mismatches() {
        let q = Tensor::zeros(&[1, 2]).unwrap();
        let k = Tensor::zeros(&[3, 3]).unwrap();
        let v = Tensor::zeros(&[3, 1]).unwrap();
        assert!(attention(&q, &k, &v).is_err());
        let k = Tensor::zeros(&[3, 2]).unwrap();
        let v = Tensor::zeros(&[2, 1]).unwrap();
        assert!(attention(&q, &k, &v).is_err());
    }

    use crate::rng::Rng;

    #[test]
    fn attention_gradients_match_finite_differences() {
        for seed in 0..5u64 {
            let mut rng = Rng::from_seed(800 + seed);
            let t_q = rng.below(3) + 1;
            let t_k = rng.below(3) + 1;
            let d_k = rng.below(3) + 1;
            let d_v = rng.below(3) + 1;
            let mut q = rand_tensor(&mut rng, &[t_q, d_k]);
            let mut k = rand_tensor(&mut rng, &[t_k, d_k]);
            let mut v = rand_tensor(&mut rng, &[t_k, d_v]);
            let probe = rand_tensor(&mut rng, &[t_q, d_v]);

            let (_, _, cache) = attention(&q, &k, &v).unwrap();
            let (dq, dk, dv) = attention_backward(&cache, &probe).unwrap();

            let loss = |q: &Tensor, k: &Tensor, v: &Tensor| {
                attention(q, k, v).unwrap().0.mul(&probe).unwrap().sum()
            };
            for idx in 0..q.len() {
                let orig = q.data()[idx];
                q.data_mut()[idx] = orig + FD_EPS;
                let plus = loss(&q, &k, &v);
                q.data_mut()[idx] = orig - FD_EPS;
                let minus = loss(&q, &k, &v);
                q.data_mut()[idx] = orig;
                assert!(rel_err(dq.data()[idx], (plus - minus) / (2.0 * FD_EPS)) < FD_TOL);
            }
            for idx in 0..k.len() {
                let orig = k.data()[idx];
                k.data_mut()[idx] = orig + FD_EPS;
                let plus = loss(&q, &k, &v);
                k.data_mut()[idx] = orig - FD_EPS;
                let minus = loss(&q, &k, &v);
                k.data_mut()[idx] = orig;
                assert!(rel_err(dk.data()[idx], (plus - minus) / (2.0 * FD_EPS)) < FD_TOL);
            }
            for idx in 0..v.len() {
                let orig = v.data()[idx];
                v.data_mut()[idx] = orig + FD_EPS;
                let plus = loss(&q, &k, &v);
                v.data_mut()[idx] = orig - FD_EPS;
                let minus = loss(&q, &k, &v);
                v.data_mut()[idx] = orig;
                assert!(rel_err(dv.data()[idx], (plus - minus) / (2.0 * FD_EPS)) < FD_TOL);
            }
        }
    }

    #[test]
    fn pool_single_element_returns_it() {
        let mut rng = Rng::from_seed(9);
        let pool = AttentionPool::init(&mut rng, 4, 3).unwrap();
        let hs = rand_tensor(&mut rng, &[1, 4]);
        let (c, alphas, _) = pool.forward(&hs).unwrap();
        assert_eq!(alphas.data(), &[1.0]);
        for (a, b) in c.data().iter().zip(hs.row(0)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pool_identical_rows_give_uniform_weights() {
        let mut rng = Rng::from_seed(10);
        let pool = AttentionPool::init(&mut rng, 3, 2).unwrap();
        let row: Vec<f64> = (0..3).map(|_| rng.uniform()).collect();
        let mut data = Vec::new();
        for _ in 0..4 {
            data.extend_from_slice(&row);
        }
        let hs = Tensor::from_vec(&[4, 3], data).unwrap();
        let (c, alphas, _) = pool.forward(&hs).unwrap();
        for a in alphas.data() {
            assert!((a - 0.25).abs() < 1e-12);
        }
        for (a, b) in c.data().iter().zip(&row) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_zero_scorer_means_mean_row() {
        let pool = AttentionPool::new(
            Tensor::zeros(&[2, 3]).unwrap(),
            Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap(),
        )
        .unwrap();
        let hs = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 5.0, 6.0, 7.0]).unwrap();
        let (c, alphas, _) = pool.forward(&hs).unwrap();
        assert_eq!(alphas.data(), &[0.5, 0.5]);
        assert_eq!(c.data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn pool_gradients_match_finite_differences() {
        for seed in 0..5u64 {
            let mut rng = Rng::from_seed(900 + seed);
            let in_dim = rng.below(4) + 1;
            let d_att = rng.below(3) + 1;
            let t_len = rng.below(4) + 1;
            let mut pool = AttentionPool::init(&mut rng, in_dim, d_att).unwrap();
            let mut hs = rand_tensor(&mut rng, &[t_len, in_dim]);
            let probe = rand_tensor(&mut rng, &[in_dim]);

            let (_, _, cache) = pool.forward(&hs).unwrap();
            let (d_hs, grads) = pool.backward(&cache, &probe).unwrap();

            let loss = |pool: &AttentionPool, hs: &Tensor| {
                pool.forward(hs).unwrap().0.mul(&probe).unwrap().sum()
            };
            for idx in 0..pool.w_a.len() {
                let orig = pool.w_a.data()[idx];
                pool.w_a.data_mut()[idx] = orig + FD_EPS;
                let plus = loss(&pool, &hs);
                pool.w_a.data_mut()[idx] = orig - FD_EPS;
                let minus = loss(&pool, &hs);
                pool.w_a.data_mut()[idx] = orig;
                assert!(rel_err(grads.d_w_a.data()[idx], (plus - minus) / (2.0 * FD_EPS)) < FD_TOL);
            }
            for idx in 0..pool.w.len() {
                let orig = pool.w.data()[idx];
                pool.w.data_mut()[idx] = orig + FD_EPS;
                let plus = loss(&pool, &hs);
                pool.w.data_mut()[idx] = orig - FD_EPS;
                let minus = loss(&pool, &hs);
                pool.w.data_mut()[idx] = orig;
                assert!(rel_err(grads.d_w.data()[idx], (plus - minus) / (2.0 * FD_EPS)) < FD_TOL);
            }
            for idx in 0..hs.len() {
                let orig = hs.data()[idx];
                hs.data_mut()[idx] = orig + FD_EPS;
                let plus = loss(&pool, &hs);
                hs.data_mut()[idx] = orig - FD_EPS;
                let minus = loss(&pool, &hs);
                hs.data_mut()[idx] = orig;
                assert!(rel_err(d_hs.data()[idx], (plus - minus) / (2.0 * FD_EPS)) < FD_TOL);
            }
        }
    }
}
