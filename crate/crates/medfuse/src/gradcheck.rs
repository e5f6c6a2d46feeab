//! Finite-difference verification of every hand-written backward pass.
//!
//! The check compares each analytic gradient entry against a central
//! difference of the corresponding loss at `epsilon`, using the relative
//! error `|a - n| / max(1e-8, |a| + |n|)`. Layer and fusion checks
//! enumerate every parameter and input entry; whole-model checks enumerate
//! every entry of small tensors and a deterministic 20-entry subsample of
//! larger ones (drawn from the `(seed, GRAD_CHECK)` stream).
//!
//! Resolution guard: a central difference of a loss `L` carries rounding
//! noise of about `ulp(L) / (2 eps)` — roughly 5e-11 for the composite
//! model loss at eps = 1e-5 — so gradient entries smaller than that are
//! pure quantization noise in the numeric probe no matter how exact the
//! backward pass is. An entry whose absolute analytic/numeric discrepancy
//! falls below `4 (|L+| + |L-|) eps_machine / (2 eps)` is therefore counted
//! as unresolvable rather than failing; any gradient large enough for
//! finite differences to see at all is still held to the relative
//! tolerance.

use crate::error::Result;
use crate::fusion::{BilinearFusion, BilinearWeights, CrossAttnFusion, FusionKind, GatedFusion};
use crate::layers::{
    attention, attention_backward, global_pool, global_pool_backward, AttentionPool, BiLstm,
    Conv2dLayer, DenseLayer, LstmCell, LstmGrads, Pool2d, PoolKind,
};
use crate::model::{Modality, Model, ModelConfig};
use crate::rng::{stream, Rng};
use crate::synthdata::{generate, CorpusConfig, Vocab};
use crate::tensor::{Tensor, Unary};

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Relative error of one entry given the two loss evaluations, with the
/// finite-difference resolution guard described in the module docs.
pub fn entry_error(analytic: f64, loss_plus: f64, loss_minus: f64, eps: f64) -> f64 {
    let numeric = (loss_plus - loss_minus) / (2.0 * eps);
    let noise = 4.0 * (loss_plus.abs() + loss_minus.abs()) * f64::EPSILON / (2.0 * eps);
    if (analytic - numeric).abs() <= noise {
        0.0
    } else {
        relative_error(analytic, numeric)
    }
}

/// Worst observed relative error for one named parameter group.
#[derive(Debug, Clone)]
pub struct GroupResult {
    pub name: String,
    pub worst_rel_err: f64,
    pub entries_checked: usize,
}

impl GroupResult {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.worst_rel_err < tolerance
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub epsilon: f64,
    pub groups: Vec<GroupResult>,
}

impl GradCheckReport {
    pub fn all_pass(&self) -> bool {
        self.groups.iter().all(|g| g.passes(self.tolerance))
    }

    pub fn failures(&self) -> Vec<&GroupResult> {
        self.groups
            .iter()
            .filter(|g| !g.passes(self.tolerance))
            .collect()
    }

    fn merge(&mut self, name: String, err: f64, entries: usize) {
        match self.groups.iter_mut().find(|g| g.name == name) {
            Some(g) => {
                g.worst_rel_err = g.worst_rel_err.max(err);
                g.entries_checked += entries;
            }
            None => self.groups.push(GroupResult {
                name,
                worst_rel_err: err,
                entries_checked: entries,
            }),
        }
    }
}

/// Central-difference check of one tensor inside `owner` against
/// `analytic`, over the given entry indices. Returns the worst relative
/// error.
fn check_entries<T>(
    owner: &mut T,
    get: impl Fn(&mut T) -> &mut Tensor,
    loss: impl Fn(&mut T) -> f64,
    analytic: &Tensor,
    entries: &[usize],
    eps: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for &idx in entries {
        let orig = get(owner).data()[idx];
        get(owner).data_mut()[idx] = orig + eps;
        let plus = loss(owner);
        get(owner).data_mut()[idx] = orig - eps;
        let minus = loss(owner);
        get(owner).data_mut()[idx] = orig;
        worst = worst.max(entry_error(analytic.data()[idx], plus, minus, eps));
    }
    worst
}

fn all_entries(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn rand_tensor(rng: &mut Rng, dims: &[usize]) -> Tensor {
    let n: usize = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.uniform_symmetric(1.0)).collect()).unwrap()
}

/// Standalone checks for every layer kind.
pub fn check_layers(report: &mut GradCheckReport, seeds: &[u64]) -> Result<()> {
    let eps = report.epsilon;
    for &seed in seeds {
        let mut rng = Rng::from_seeds(&[seed, stream::GRAD_CHECK, 1]);

        // Dense with each activation.
        for act in [None, Some(Unary::Relu), Some(Unary::Sigmoid), Some(Unary::Tanh)] {
            let (n_out, n_in) = (rng.below(4) + 2, rng.below(4) + 2);
            let layer = DenseLayer::new(
                rand_tensor(&mut rng, &[n_out, n_in]),
                rand_tensor(&mut rng, &[n_out]),
                act,
            )?;
            let x = rand_tensor(&mut rng, &[n_in]);
            let probe = rand_tensor(&mut rng, &[n_out]);
            let (_, cache) = layer.forward(&x)?;
            let (dx, grads) = layer.backward(&cache, &probe)?;
            let mut st = (layer, x);
            let loss = |st: &mut (DenseLayer, Tensor)| {
                st.0.forward(&st.1).unwrap().0.mul(&probe).unwrap().sum()
            };
            let e = check_entries(&mut st, |s| &mut s.0.weight, loss, &grads.d_weight, &all_entries(grads.d_weight.len()), eps);
            report.merge("layer.dense.weight".into(), e, grads.d_weight.len());
            let e = check_entries(&mut st, |s| &mut s.0.bias, loss, &grads.d_bias, &all_entries(grads.d_bias.len()), eps);
            report.merge("layer.dense.bias".into(), e, grads.d_bias.len());
            let e = check_entries(&mut st, |s| &mut s.1, loss, &dx, &all_entries(dx.len()), eps);
            report.merge("layer.dense.input".into(), e, dx.len());
        }

        // Conv2d (ReLU activation, the model's configuration).
        {
            let (c_in, c_out) = (rng.below(2) + 1, rng.below(2) + 1);
            let k = rng.below(2) + 2;
            let h = k + rng.below(3) + 1;
            let layer = Conv2dLayer::new(
                rand_tensor(&mut rng, &[c_out, c_in, k, k]),
                rand_tensor(&mut rng, &[c_out]),
                Some(Unary::Relu),
            )?;
            let x = rand_tensor(&mut rng, &[c_in, h, h]);
            let (y, cache) = layer.forward(&x)?;
            let probe = rand_tensor(&mut rng, y.dims());
            let (dx, grads) = layer.backward(&cache, &probe)?;
            let mut st = (layer, x);
            let loss = |st: &mut (Conv2dLayer, Tensor)| {
                st.0.forward(&st.1).unwrap().0.mul(&probe).unwrap().sum()
            };
            let e = check_entries(&mut st, |s| &mut s.0.kernels, loss, &grads.d_kernels, &all_entries(grads.d_kernels.len()), eps);
            report.merge("layer.conv2d.kernels".into(), e, grads.d_kernels.len());
            let e = check_entries(&mut st, |s| &mut s.0.bias, loss, &grads.d_bias, &all_entries(grads.d_bias.len()), eps);
            report.merge("layer.conv2d.bias".into(), e, grads.d_bias.len());
            let e = check_entries(&mut st, |s| &mut s.1, loss, &dx, &all_entries(dx.len()), eps);
            report.merge("layer.conv2d.input".into(), e, dx.len());
        }

        // Pooling (input gradients only; pooling has no parameters).
        for (kind, tag) in [(PoolKind::Max, "max"), (PoolKind::Avg, "avg")] {
            let p = Pool2d { kind, window: 2, stride: rng.below(2) + 1 };
            let h = rng.below(3) + 3;
            let x = rand_tensor(&mut rng, &[2, h, h]);
            let (y, cache) = p.forward(&x)?;
            let probe = rand_tensor(&mut rng, y.dims());
            let dx = p.backward(&cache, &probe)?;
            let mut st = x;
            let e = check_entries(
                &mut st,
                |s| s,
                |s| p.forward(s).unwrap().0.mul(&probe).unwrap().sum(),
                &dx,
                &all_entries(dx.len()),
                eps,
            );
            report.merge(format!("layer.pool2d_{tag}.input"), e, dx.len());

            let x = rand_tensor(&mut rng, &[2, 3, 3]);
            let (_, cache) = global_pool(kind, &x)?;
            let probe = rand_tensor(&mut rng, &[2]);
            let dx = global_pool_backward(kind, &cache, &probe)?;
            let mut st = x;
            let e = check_entries(
                &mut st,
                |s| s,
                |s| global_pool(kind, s).unwrap().0.mul(&probe).unwrap().sum(),
                &dx,
                &all_entries(dx.len()),
                eps,
            );
            report.merge(format!("layer.global_pool_{tag}.input"), e, dx.len());
        }

        // Embedding.
        {
            let (v, d) = (5, 3);
            let emb = crate::layers::EmbeddingTable::new(rand_tensor(&mut rng, &[v, d]))?;
            let tokens = vec![rng.below(v), rng.below(v), rng.below(v)];
            let probe = rand_tensor(&mut rng, &[tokens.len(), d]);
            let grads = emb.backward(&tokens, &probe)?;
            let mut st = emb;
            let e = check_entries(
                &mut st,
                |s| &mut s.table,
                |s| s.lookup(&tokens).unwrap().mul(&probe).unwrap().sum(),
                &grads.d_table,
                &all_entries(grads.d_table.len()),
                eps,
            );
            report.merge("layer.embedding.table".into(), e, grads.d_table.len());
        }

        // LSTM cell (single step, all twelve parameter tensors).
        {
            let (d, h) = (rng.below(3) + 1, rng.below(3) + 1);
            let cell = LstmCell::init(&mut rng, d, h)?;
            let x = rand_tensor(&mut rng, &[d]);
            let h0 = rand_tensor(&mut rng, &[h]);
            let c0 = rand_tensor(&mut rng, &[h]);
            let probe_h = rand_tensor(&mut rng, &[h]);
            let probe_c = rand_tensor(&mut rng, &[h]);
            let (_, _, cache) = cell.step(&x, &h0, &c0)?;
            let mut grads = LstmGrads::zeros(d, h)?;
            cell.step_backward(&cache, &probe_h, &probe_c, &mut grads)?;
            let mut st = cell;
            let loss = |s: &mut LstmCell| {
                let (ht, ct, _) = s.step(&x, &h0, &c0).unwrap();
                ht.mul(&probe_h).unwrap().sum() + ct.mul(&probe_c).unwrap().sum()
            };
            type Get = fn(&mut LstmCell) -> &mut Tensor;
            let parts: [(&str, Get, &Tensor); 12] = [
                ("w_i", |c| &mut c.w_i, &grads.w_i),
                ("w_f", |c| &mut c.w_f, &grads.w_f),
                ("w_o", |c| &mut c.w_o, &grads.w_o),
                ("w_g", |c| &mut c.w_g, &grads.w_g),
                ("u_i", |c| &mut c.u_i, &grads.u_i),
                ("u_f", |c| &mut c.u_f, &grads.u_f),
                ("u_o", |c| &mut c.u_o, &grads.u_o),
                ("u_g", |c| &mut c.u_g, &grads.u_g),
                ("b_i", |c| &mut c.b_i, &grads.b_i),
                ("b_f", |c| &mut c.b_f, &grads.b_f),
                ("b_o", |c| &mut c.b_o, &grads.b_o),
                ("b_g", |c| &mut c.b_g, &grads.b_g),
            ];
            for (tag, get, analytic) in parts {
                let e = check_entries(&mut st, get, loss, analytic, &all_entries(analytic.len()), eps);
                report.merge(format!("layer.lstm_cell.{tag}"), e, analytic.len());
            }
        }

        // Bi-LSTM over a short sequence (input gradients through both scans).
        {
            let (d, h, t_len) = (rng.below(2) + 1, rng.below(2) + 1, rng.below(4) + 2);
            let net = BiLstm::init(&mut rng, d, h)?;
            let xs = rand_tensor(&mut rng, &[t_len, d]);
            let probe = rand_tensor(&mut rng, &[t_len, 2 * h]);
            let (_, cache) = net.forward(&xs)?;
            let (dxs, _) = net.backward(&cache, &probe)?;
            let mut st = xs;
            let e = check_entries(
                &mut st,
                |s| s,
                |s| net.forward(s).unwrap().0.mul(&probe).unwrap().sum(),
                &dxs,
                &all_entries(dxs.len()),
                eps,
            );
            report.merge("layer.bilstm.input".into(), e, dxs.len());
        }

        // Scaled dot-product attention (all three inputs).
        {
            let (t_q, t_k) = (rng.below(3) + 1, rng.below(3) + 1);
            let (d_k, d_v) = (rng.below(3) + 1, rng.below(3) + 1);
            let q = rand_tensor(&mut rng, &[t_q, d_k]);
            let k = rand_tensor(&mut rng, &[t_k, d_k]);
            let v = rand_tensor(&mut rng, &[t_k, d_v]);
            let probe = rand_tensor(&mut rng, &[t_q, d_v]);
            let (_, _, cache) = attention(&q, &k, &v)?;
            let (dq, dk, dv) = attention_backward(&cache, &probe)?;
            let mut st = (q, k, v);
            type Get3 = fn(&mut (Tensor, Tensor, Tensor)) -> &mut Tensor;
            let loss = |s: &mut (Tensor, Tensor, Tensor)| {
                attention(&s.0, &s.1, &s.2).unwrap().0.mul(&probe).unwrap().sum()
            };
            let parts: [(&str, Get3, &Tensor); 3] = [
                ("q", |s| &mut s.0, &dq),
                ("k", |s| &mut s.1, &dk),
                ("v", |s| &mut s.2, &dv),
            ];
            for (tag, get, analytic) in parts {
                let e = check_entries(&mut st, get, loss, analytic, &all_entries(analytic.len()), eps);
                report.merge(format!("layer.attention.{tag}"), e, analytic.len());
            }
        }

        // Additive attention pooling.
        {
            let (in_dim, d_att, t_len) = (rng.below(3) + 2, rng.below(3) + 1, rng.below(4) + 1);
            let pool = AttentionPool::init(&mut rng, in_dim, d_att)?;
            let hs = rand_tensor(&mut rng, &[t_len, in_dim]);
            let probe = rand_tensor(&mut rng, &[in_dim]);
            let (_, _, cache) = pool.forward(&hs)?;
            let (d_hs, grads) = pool.backward(&cache, &probe)?;
            let mut st = (pool, hs);
            let loss = |s: &mut (AttentionPool, Tensor)| {
                s.0.forward(&s.1).unwrap().0.mul(&probe).unwrap().sum()
            };
            let e = check_entries(&mut st, |s| &mut s.0.w_a, loss, &grads.d_w_a, &all_entries(grads.d_w_a.len()), eps);
            report.merge("layer.attention_pool.w_a".into(), e, grads.d_w_a.len());
            let e = check_entries(&mut st, |s| &mut s.0.w, loss, &grads.d_w, &all_entries(grads.d_w.len()), eps);
            report.merge("layer.attention_pool.w".into(), e, grads.d_w.len());
            let e = check_entries(&mut st, |s| &mut s.1, loss, &d_hs, &all_entries(d_hs.len()), eps);
            report.merge("layer.attention_pool.input".into(), e, d_hs.len());
        }
    }
    Ok(())
}

/// Standalone checks for the parameterized fusion strategies (checked again
/// inside the whole-model sweep; this isolates them).
pub fn check_fusions(report: &mut GradCheckReport, seeds: &[u64]) -> Result<()> {
    let eps = report.epsilon;
    for &seed in seeds {
        let mut rng = Rng::from_seeds(&[seed, stream::GRAD_CHECK, 2]);
        let (d_i, d_t, d_z) = (rng.below(3) + 2, rng.below(3) + 2, rng.below(3) + 2);

        // Gated.
        {
            let fusion = GatedFusion::init(&mut rng, d_i, d_t, d_z)?;
            let v_img = rand_tensor(&mut rng, &[d_i]);
            let v_txt = rand_tensor(&mut rng, &[d_t]);
            let probe = rand_tensor(&mut rng, &[d_z]);
            let (_, _, cache) = fusion.forward(&v_img, &v_txt)?;
            let (d_img, d_txt, grads) = fusion.backward(&cache, &probe)?;
            let mut st = (fusion, v_img, v_txt);
            type GetG = fn(&mut (GatedFusion, Tensor, Tensor)) -> &mut Tensor;
            let loss = |s: &mut (GatedFusion, Tensor, Tensor)| {
                s.0.forward(&s.1, &s.2).unwrap().0.mul(&probe).unwrap().sum()
            };
            let parts: [(&str, GetG, &Tensor); 8] = [
                ("w_g", |s| &mut s.0.w_g, &grads.d_w_g),
                ("b_g", |s| &mut s.0.b_g, &grads.d_b_g),
                ("w_i", |s| &mut s.0.w_i, &grads.d_w_i),
                ("b_i", |s| &mut s.0.b_i, &grads.d_b_i),
                ("w_t", |s| &mut s.0.w_t, &grads.d_w_t),
                ("b_t", |s| &mut s.0.b_t, &grads.d_b_t),
                ("v_img", |s| &mut s.1, &d_img),
                ("v_txt", |s| &mut s.2, &d_txt),
            ];
            for (tag, get, analytic) in parts {
                let e = check_entries(&mut st, get, loss, analytic, &all_entries(analytic.len()), eps);
                report.merge(format!("fusion.gated.{tag}"), e, analytic.len());
            }
        }

        // Bilinear, full and low-rank.
        for rank in [None, Some(2)] {
            let fusion = BilinearFusion::init(&mut rng, d_i, d_t, d_z, rank)?;
            let v_img = rand_tensor(&mut rng, &[d_i]);
            let v_txt = rand_tensor(&mut rng, &[d_t]);
            let probe = rand_tensor(&mut rng, &[d_z]);
            let (_, cache) = fusion.forward(&v_img, &v_txt)?;
            let (d_img, d_txt, grads) = fusion.backward(&cache, &probe)?;
            let tag = if rank.is_none() { "full" } else { "lowrank" };
            let mut st = (fusion, v_img, v_txt);
            let loss = |s: &mut (BilinearFusion, Tensor, Tensor)| {
                s.0.forward(&s.1, &s.2).unwrap().0.mul(&probe).unwrap().sum()
            };
            match &grads.d_weights {
                BilinearWeights::Full(w) => {
                    let e = check_entries(
                        &mut st,
                        |s| match &mut s.0.weights {
                            BilinearWeights::Full(w) => w,
                            _ => unreachable!(),
                        },
                        loss,
                        w,
                        &all_entries(w.len()),
                        eps,
                    );
                    report.merge(format!("fusion.bilinear_{tag}.w"), e, w.len());
                }
                BilinearWeights::LowRank { u, v } => {
                    let e = check_entries(
                        &mut st,
                        |s| match &mut s.0.weights {
                            BilinearWeights::LowRank { u, .. } => u,
                            _ => unreachable!(),
                        },
                        loss,
                        u,
                        &all_entries(u.len()),
                        eps,
                    );
                    report.merge(format!("fusion.bilinear_{tag}.u"), e, u.len());
                    let e = check_entries(
                        &mut st,
                        |s| match &mut s.0.weights {
                            BilinearWeights::LowRank { v, .. } => v,
                            _ => unreachable!(),
                        },
                        loss,
                        v,
                        &all_entries(v.len()),
                        eps,
                    );
                    report.merge(format!("fusion.bilinear_{tag}.v"), e, v.len());
                }
            }
            let e = check_entries(&mut st, |s| &mut s.0.bias, loss, &grads.d_bias, &all_entries(grads.d_bias.len()), eps);
            report.merge(format!("fusion.bilinear_{tag}.b"), e, grads.d_bias.len());
            let e = check_entries(&mut st, |s| &mut s.1, loss, &d_img, &all_entries(d_img.len()), eps);
            report.merge(format!("fusion.bilinear_{tag}.v_img"), e, d_img.len());
            let e = check_entries(&mut st, |s| &mut s.2, loss, &d_txt, &all_entries(d_txt.len()), eps);
            report.merge(format!("fusion.bilinear_{tag}.v_txt"), e, d_txt.len());
        }

        // Cross-modal attention.
        {
            let (s_width, d_v, t_len) = (2 * (rng.below(2) + 1), rng.below(3) + 1, rng.below(4) + 1);
            let fusion = CrossAttnFusion::init(&mut rng, d_i, s_width, d_v, d_z)?;
            let v_img = rand_tensor(&mut rng, &[d_i]);
            let states = rand_tensor(&mut rng, &[t_len, s_width]);
            let probe = rand_tensor(&mut rng, &[d_z]);
            let (_, _, cache) = fusion.forward(&v_img, &states)?;
            let (d_img, d_states, grads) = fusion.backward(&cache, &probe)?;
            let mut st = (fusion, v_img, states);
            type GetC = fn(&mut (CrossAttnFusion, Tensor, Tensor)) -> &mut Tensor;
            let loss = |s: &mut (CrossAttnFusion, Tensor, Tensor)| {
                s.0.forward(&s.1, &s.2).unwrap().0.mul(&probe).unwrap().sum()
            };
            let parts: [(&str, GetC, &Tensor); 6] = [
                ("w_k", |s| &mut s.0.w_k, &grads.d_w_k),
                ("w_v", |s| &mut s.0.w_v, &grads.d_w_v),
                ("out.weight", |s| &mut s.0.out.weight, &grads.d_out_weight),
                ("out.bias", |s| &mut s.0.out.bias, &grads.d_out_bias),
                ("v_img", |s| &mut s.1, &d_img),
                ("states", |s| &mut s.2, &d_states),
            ];
            for (tag, get, analytic) in parts {
                let e = check_entries(&mut st, get, loss, analytic, &all_entries(analytic.len()), eps);
                report.merge(format!("fusion.crossattn.{tag}"), e, analytic.len());
            }
        }
    }
    Ok(())
}

/// Per-tensor entry selection for whole-model checks: everything for small
/// tensors, a deterministic 20-entry distinct subsample otherwise.
fn model_entries(rng: &mut Rng, len: usize) -> Vec<usize> {
    const SUBSAMPLE: usize = 20;
    if len <= SUBSAMPLE {
        return all_entries(len);
    }
    let mut chosen = Vec::with_capacity(SUBSAMPLE);
    while chosen.len() < SUBSAMPLE {
        let idx = rng.below(len);
        if !chosen.contains(&idx) {
            chosen.push(idx);
        }
    }
    chosen
}

/// Tiny model configuration for whole-model checks (corpus vocabulary).
pub fn tiny_model_config(modality: Modality, fusion: FusionKind, seed: u64) -> ModelConfig {
    ModelConfig {
        modality,
        fusion,
        vocab_size: Vocab::corpus_default().len(),
        seed,
        ..ModelConfig::tiny()
    }
}

/// Whole-model check: every parameter group of `model` against central
/// differences of the composite loss on one generated case.
pub fn check_model(
    report: &mut GradCheckReport,
    label: &str,
    config: &ModelConfig,
    seeds: &[u64],
) -> Result<()> {
    let eps = report.epsilon;
    for &seed in seeds {
        let cfg = ModelConfig {
            seed,
            ..config.clone()
        };
        let case = generate(&CorpusConfig {
            num_cases: 1,
            image_side: cfg.image_side,
            mask_side: cfg.mask_grid,
            noise_std: 0.05,
            distractor_tokens: 3,
            seed,
            ..CorpusConfig::default()
        })?
        .remove(0);
        let mut model = Model::init(&cfg)?;
        let (_, grads) = model.loss_and_grads(&case)?;
        let mut pick_rng = Rng::from_seeds(&[seed, stream::GRAD_CHECK, 3]);
        let names: Vec<String> = grads.keys().cloned().collect();
        for name in names {
            let analytic = &grads[&name];
            let entries = model_entries(&mut pick_rng, analytic.len());
            let n_entries = entries.len();
            let mut worst: f64 = 0.0;
            for &idx in &entries {
                let tweak = |m: &mut Model, delta: f64| {
                    for (pname, t) in m.param_tensors_mut() {
                        if pname == name {
                            t.data_mut()[idx] += delta;
                        }
                    }
                };
                tweak(&mut model, eps);
                let plus = model.loss(&case)?.total;
                tweak(&mut model, -2.0 * eps);
                let minus = model.loss(&case)?.total;
                tweak(&mut model, eps);
                worst = worst.max(entry_error(analytic.data()[idx], plus, minus, eps));
            }
            report.merge(format!("{label}/{name}"), worst, n_entries);
        }
    }
    Ok(())
}

/// The full verification suite: every layer, every fusion strategy, and the
/// whole model for all modality-by-fusion combinations on the tiny config.
pub fn run_full_suite(tolerance: f64, epsilon: f64, seeds: &[u64]) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        tolerance,
        epsilon,
        groups: Vec::new(),
    };
    check_layers(&mut report, seeds)?;
    check_fusions(&mut report, seeds)?;
    for modality in Modality::ALL {
        for fusion in FusionKind::ALL {
            let cfg = tiny_model_config(modality, fusion, 0);
            let label = cfg.model_name();
            check_model(&mut report, &label, &cfg, seeds)?;
        }
    }
    Ok(report)
}
