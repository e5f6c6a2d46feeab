//! Task heads and losses: disease classification, lesion localization
//! (box + coarse mask), and description generation.

use crate::error::{Error, Result};
use crate::layers::{
    glorot_uniform, DenseCache, DenseGrads, DenseLayer, EmbeddingTable, LstmCell, LstmGrads,
    LstmStepCache,
};
use crate::rng::Rng;
use crate::tensor::{Tensor, Unary};

/// Floor for probabilities inside log-losses; keeps reported values finite.
pub const PROB_FLOOR: f64 = 1e-12;

/// Normalized box with `x1 < x2` and `y1 < y2`, all coordinates in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&x1)
            && (0.0..=1.0).contains(&y1)
            && (0.0..=1.0).contains(&x2)
            && (0.0..=1.0).contains(&y2)
            && x1 < x2
            && y1 < y2;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "invalid box ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    /// Build a valid box from raw coordinates: swaps a reversed pair, and
    /// widens a degenerate (equal) pair by 1e-9 inside the unit square.
    pub fn from_unordered(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        let fix = |a: f64, b: f64| -> (f64, f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
            if lo < hi {
                (lo, hi)
            } else if hi < 1.0 - 1e-9 {
                (lo, hi + 1e-9)
            } else {
                (lo - 1e-9, hi)
            }
        };
        let (x1, x2) = fix(x1, x2);
        let (y1, y2) = fix(y1, y2);
        BBox { x1, y1, x2, y2 }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = String;
    fn try_from(v: [f64; 4]) -> std::result::Result<Self, String> {
        BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> [f64; 4] {
        b.coords()
    }
}

/// `-ln(max(probs[label], PROB_FLOOR))`.
pub fn cross_entropy(probs: &Tensor, label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    Ok(-probs.data()[label].max(PROB_FLOOR).ln())
}

/// Smooth L1 on raw coordinate 4-tuples:
/// `sum_i f(pred_i - target_i)` with `f(d) = 0.5 d^2` for `|d| < 1`,
/// `|d| - 0.5` otherwise.
pub fn smooth_l1_coords(pred: &[f64; 4], target: &[f64; 4]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| huber(p - t))
        .sum()
}

/// Gradient of [`smooth_l1_coords`] with respect to `pred`.
pub fn smooth_l1_coords_grad(pred: &[f64; 4], target: &[f64; 4]) -> [f64; 4] {
    let mut g = [0.0; 4];
    for (k, (p, t)) in pred.iter().zip(target).enumerate() {
        let d = p - t;
        g[k] = if d.abs() < 1.0 { d } else { d.signum() };
    }
    g
}

#[inline]
fn huber(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

/// Smooth L1 over the four coordinates of two boxes.
pub fn smooth_l1(pred: &BBox, target: &BBox) -> f64 {
    smooth_l1_coords(&pred.coords(), &target.coords())
}

pub const DICE_EPS: f64 = 1e-6;

/// `1 - (2 sum(p*t) + eps) / (sum(p) + sum(t) + eps)` with `eps = 1e-6`.
pub fn dice_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(Error::ShapeMismatch {
            op: "dice_loss",
            left: pred.dims().to_vec(),
            right: target.dims().to_vec(),
        });
    }
    let inter: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| p * t).sum();
    let denom = pred.sum() + target.sum() + DICE_EPS;
    Ok(1.0 - (2.0 * inter + DICE_EPS) / denom)
}

/// Gradient of [`dice_loss`] with respect to `pred`.
pub fn dice_loss_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.dims() != target.dims() {
        return Err(Error::ShapeMismatch {
            op: "dice_loss_grad",
            left: pred.dims().to_vec(),
            right: target.dims().to_vec(),
        });
    }
    let inter: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| p * t).sum();
    let denom = pred.sum() + target.sum() + DICE_EPS;
    let num = 2.0 * inter + DICE_EPS;
    let data = target
        .data()
        .iter()
        .map(|&t| -(2.0 * t * denom - num) / (denom * denom))
        .collect();
    Tensor::from_vec(pred.dims(), data)
}

/// Linear classifier over the joint vector; softmax applied at loss and
/// inference time.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    pub dense: DenseLayer,
}

impl ClassifierHead {
    pub fn init(rng: &mut Rng, d_in: usize, num_classes: usize) -> Result<Self> {
        Ok(ClassifierHead {
            dense: DenseLayer::new(
                glorot_uniform(rng, &[num_classes, d_in], d_in, num_classes),
                Tensor::zeros(&[num_classes])?,
                None,
            )?,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.dense.out_dim()
    }

    /// Returns `(probs, predicted class)` — argmax ties resolve low.
    pub fn classify(&self, z: &Tensor) -> Result<(Tensor, usize)> {
        let (logits, _) = self.dense.forward(z)?;
        let probs = logits.softmax(0)?;
        let class = probs.argmax1();
        Ok((probs, class))
    }

    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, DenseCache)> {
        self.dense.forward(z)
    }

    /// Cross-entropy against `label` plus the exact logit gradient
    /// `probs - onehot(label)`.
    pub fn loss_and_logit_grad(&self, logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
        let probs = logits.softmax(0)?;
        let loss = cross_entropy(&probs, label)?;
        let mut grad = probs.clone();
        grad.data_mut()[label] -= 1.0;
        Ok((loss, grad))
    }
}

/// Box and coarse-mask regression from the joint vector. Both outputs pass
/// through a sigmoid, so raw coordinates live in (0, 1).
#[derive(Debug, Clone)]
pub struct LocalizerHead {
    pub box_dense: DenseLayer,
    pub mask_dense: DenseLayer,
    /// Mask grid side length.
    pub grid: usize,
}

#[derive(Debug, Clone)]
pub struct LocalizerCache {
    pub box_cache: DenseCache,
    pub mask_cache: DenseCache,
}

impl LocalizerHead {
    pub fn init(rng: &mut Rng, d_in: usize, grid: usize) -> Result<Self> {
        Ok(LocalizerHead {
            box_dense: DenseLayer::new(
                glorot_uniform(rng, &[4, d_in], d_in, 4),
                Tensor::zeros(&[4])?,
                Some(Unary::Sigmoid),
            )?,
            mask_dense: DenseLayer::new(
                glorot_uniform(rng, &[grid * grid, d_in], d_in, grid * grid),
                Tensor::zeros(&[grid * grid])?,
                Some(Unary::Sigmoid),
            )?,
            grid,
        })
    }

    /// Returns `(raw box 4-vector, mask [g*g], cache)`.
    pub fn forward(&self, z: &Tensor) -> Result<(Tensor, Tensor, LocalizerCache)> {
        let (box4, box_cache) = self.box_dense.forward(z)?;
        let (mask, mask_cache) = self.mask_dense.forward(z)?;
        Ok((
            box4,
            mask,
            LocalizerCache {
                box_cache,
                mask_cache,
            },
        ))
    }

    /// Raw sigmoid coordinates to a valid box (ordering fix applied).
    pub fn predict_box(box4: &Tensor) -> BBox {
        let d = box4.data();
        BBox::from_unordered(d[0], d[1], d[2], d[3])
    }
}

/// LSTM decoder conditioned on the joint vector: every step consumes
/// `[embed(prev token) ; z]`.
#[derive(Debug, Clone)]
pub struct DecoderHead {
    pub cell: LstmCell,
    pub embed: EmbeddingTable,
    pub out: DenseLayer,
    pub bos: usize,
    pub eos: usize,
    pub pad: usize,
}

pub struct DecoderStepRecord {
    prev_token: usize,
    target: usize,
    lstm: LstmStepCache,
    dense: DenseCache,
    probs: Tensor,
}

pub struct DecoderCache {
    steps: Vec<DecoderStepRecord>,
    /// Number of non-PAD steps contributing to the mean.
    counted: usize,
}

#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub cell: LstmGrads,
    pub d_embed: Tensor,
    pub d_out: DenseGrads,
}

impl DecoderHead {
    pub fn init(
        rng: &mut Rng,
        vocab: usize,
        d_emb: usize,
        d_z: usize,
        hidden: usize,
        bos: usize,
        eos: usize,
        pad: usize,
    ) -> Result<Self> {
        if bos >= vocab || eos >= vocab || pad >= vocab || bos == eos || bos == pad || eos == pad {
            return Err(Error::InvalidArgument(
                "BOS, EOS, PAD must be distinct ids inside the vocabulary".into(),
            ));
        }
        Ok(DecoderHead {
            cell: LstmCell::init(rng, d_emb + d_z, hidden)?,
            embed: EmbeddingTable::new(glorot_uniform(rng, &[vocab, d_emb], vocab, d_emb))?,
            out: DenseLayer::new(
                glorot_uniform(rng, &[vocab, hidden], hidden, vocab),
                Tensor::zeros(&[vocab])?,
                None,
            )?,
            bos,
            eos,
            pad,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.vocab_size()
    }

    fn step_input(&self, prev: usize, z: &Tensor) -> Result<Tensor> {
        let emb = self.embed.lookup(&[prev])?;
        let emb = emb.reshaped(&[self.embed.dim()])?;
        emb.concat1(z)
    }

    /// Teacher forcing: step `t` consumes the ground-truth previous token
    /// (BOS at the start); the loss is the mean token cross-entropy over
    /// non-PAD target steps.
    pub fn teacher_forced(&self, z: &Tensor, targets: &[usize]) -> Result<(f64, DecoderCache)> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument("decoder targets must be nonempty".into()));
        }
        let h_dim = self.cell.hidden_dim();
        let mut h = Tensor::zeros(&[h_dim])?;
        let mut c = Tensor::zeros(&[h_dim])?;
        let mut prev = self.bos;
        let mut steps = Vec::with_capacity(targets.len());
        let mut loss = 0.0;
        let mut counted = 0usize;
        for &target in targets {
            if target >= self.vocab_size() {
                return Err(Error::TokenOutOfRange {
                    id: target,
                    vocab: self.vocab_size(),
                });
            }
            let x = self.step_input(prev, z)?;
            let (h_t, c_t, lstm) = self.cell.step(&x, &h, &c)?;
            let (logits, dense) = self.out.forward(&h_t)?;
            let probs = logits.softmax(0)?;
            if target != self.pad {
                loss += -probs.data()[target].max(PROB_FLOOR).ln();
                counted += 1;
            }
            steps.push(DecoderStepRecord {
                prev_token: prev,
                target,
                lstm,
                dense,
                probs,
            });
            h = h_t;
            c = c_t;
            prev = target;
        }
        let counted = counted.max(1);
        Ok((
            loss / counted as f64,
            DecoderCache { steps, counted },
        ))
    }

    /// Per-step probability rows from a teacher-forced pass, `[T, V]`.
    pub fn step_probs(cache: &DecoderCache) -> Result<Tensor> {
        let t_len = cache.steps.len();
        let v = cache.steps[0].probs.len();
        let mut data = Vec::with_capacity(t_len * v);
        for s in &cache.steps {
            data.extend_from_slice(s.probs.data());
        }
        Tensor::from_vec(&[t_len, v], data)
    }

    /// Backward through the teacher-forced pass, scaled by `upstream`
    /// (the weight the total loss puts on the generation term).
    /// Returns the gradient w.r.t. `z` plus parameter gradients.
    pub fn teacher_forced_backward(
        &self,
        cache: &DecoderCache,
        upstream: f64,
    ) -> Result<(Tensor, DecoderGrads)> {
        let d_emb = self.embed.dim();
        let d_in = self.cell.input_dim();
        let d_z = d_in - d_emb;
        let h_dim = self.cell.hidden_dim();
        let scale = upstream / cache.counted as f64;

        let mut cell_grads = LstmGrads::zeros(d_in, h_dim)?;
        let mut d_embed = Tensor::zeros(self.embed.table.dims())?;
        let mut d_out_weight = Tensor::zeros(self.out.weight.dims())?;
        let mut d_out_bias = Tensor::zeros(&[self.out.out_dim()])?;
        let mut d_z_total = Tensor::zeros(&[d_z])?;

        let mut dh_next = Tensor::zeros(&[h_dim])?;
        let mut dc_next = Tensor::zeros(&[h_dim])?;
        for step in cache.steps.iter().rev() {
            // Token cross-entropy gradient at the logits; PAD steps add none.
            let mut dlogits = if step.target == self.pad {
                Tensor::zeros(&[self.vocab_size()])?
            } else {
                let mut g = step.probs.scale(scale);
                g.data_mut()[step.target] -= scale;
                g
            };
            // The same hidden state feeds the output layer and the next step.
            let (mut dh, out_grads) = self.out.backward(&step.dense, &mut dlogits)?;
            add_into(&mut d_out_weight, &out_grads.d_weight);
            add_into(&mut d_out_bias, &out_grads.d_bias);
            dh = dh.add(&dh_next)?;
            let (dx, dh_prev, dc_prev) =
                self.cell.step_backward(&step.lstm, &dh, &dc_next, &mut cell_grads)?;
            // Split input gradient into embedding row and z parts.
            let row = step.prev_token * d_emb;
            for k in 0..d_emb {
                d_embed.data_mut()[row + k] += dx.data()[k];
            }
            for k in 0..d_z {
                d_z_total.data_mut()[k] += dx.data()[d_emb + k];
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        Ok((
            d_z_total,
            DecoderGrads {
                cell: cell_grads,
                d_embed,
                d_out: DenseGrads {
                    d_weight: d_out_weight,
                    d_bias: d_out_bias,
                },
            },
        ))
    }

    /// Greedy decoding from BOS: emits the argmax token each step (lowest
    /// index on ties), never PAD or BOS (they are masked out), and stops at
    /// EOS or after `max_len` tokens. EOS is not included in the result.
    pub fn greedy(&self, z: &Tensor, max_len: usize) -> Result<Vec<usize>> {
        let h_dim = self.cell.hidden_dim();
        let mut h = Tensor::zeros(&[h_dim])?;
        let mut c = Tensor::zeros(&[h_dim])?;
        let mut prev = self.bos;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let x = self.step_input(prev, z)?;
            let (h_t, c_t, _) = self.cell.step(&x, &h, &c)?;
            let (logits, _) = self.out.forward(&h_t)?;
            let mut best = usize::MAX;
            let mut best_v = f64::NEG_INFINITY;
            for (i, &v) in logits.data().iter().enumerate() {
                if i == self.pad || i == self.bos {
                    continue;
                }
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            if best == self.eos {
                break;
            }
            out.push(best);
            h = h_t;
            c = c_t;
            prev = best;
        }
        Ok(out)
    }
}

fn add_into(dst: &mut Tensor, src: &Tensor) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testutil::*;

    #[test]
    fn bbox_validation() {
        assert!(BBox::new(0.0, 0.0, 0.5, 0.5).is_ok());
        assert!(BBox::new(0.5, 0.0, 0.5, 0.5).is_err());
        assert!(BBox::new(0.0, 0.6, 0.5, 0.5).is_err());
        assert!(BBox::new(-0.1, 0.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn bbox_from_unordered_fixes_order_and_degeneracy() {
        let b = BBox::from_unordered(0.8, 0.9, 0.2, 0.1);
        assert!(b.x1 < b.x2 && b.y1 < b.y2);
        assert_eq!((b.x1, b.x2), (0.2, 0.8));
        let b = BBox::from_unordered(0.5, 0.5, 0.5, 0.5);
        assert!(b.x1 < b.x2 && b.y1 < b.y2);
        let b = BBox::from_unordered(1.0, 1.0, 1.0, 1.0);
        assert!(b.x1 < b.x2 && b.x2 <= 1.0);
    }

    #[test]
    fn cross_entropy_examples() {
        let onehot = Tensor::from_vec(&[3], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(cross_entropy(&onehot, 1).unwrap(), 0.0);
        let uniform = Tensor::from_vec(&[4], vec![0.25; 4]).unwrap();
        assert!((cross_entropy(&uniform, 2).unwrap() - 4.0f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&uniform, 2).unwrap() - 1.38629).abs() < 1e-5);
        let zero = Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap();
        let clamped = cross_entropy(&zero, 1).unwrap();
        assert!(clamped.is_finite());
        assert!((clamped - (-PROB_FLOOR.ln())).abs() < 1e-9);
        assert!((clamped - 27.631).abs() < 1e-3);
        assert!(cross_entropy(&zero, 2).is_err());
    }

    #[test]
    fn classifier_examples() {
        let mut rng = crate::rng::Rng::from_seed(1);
        let mut head = ClassifierHead::init(&mut rng, 3, 4).unwrap();
        head.dense.weight = Tensor::zeros(&[4, 3]).unwrap();
        head.dense.bias = Tensor::zeros(&[4]).unwrap();
        let z = rand_tensor(&mut rng, &[3]);
        let (probs, class) = head.classify(&z).unwrap();
        for p in probs.data() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert_eq!(class, 0); // uniform, tie-break low

        // Fixed logits [ln 2, ln 1] via the bias.
        let mut head = ClassifierHead::init(&mut rng, 2, 2).unwrap();
        head.dense.weight = Tensor::zeros(&[2, 2]).unwrap();
        head.dense.bias = Tensor::from_vec(&[2], vec![2.0f64.ln(), 0.0]).unwrap();
        let (probs, class) = head.classify(&Tensor::zeros(&[2]).unwrap()).unwrap();
        assert!((probs.data()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((probs.data()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(class, 0);
        assert!((probs.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classifier_loss_gradient_matches_finite_differences() {
        for seed in 0..5u64 {
            let mut rng = crate::rng::Rng::from_seed(1300 + seed);
            let (d, c) = (rng.below(4) + 1, rng.below(3) + 2);
            let mut head = ClassifierHead::init(&mut rng, d, c).unwrap();
            let z = rand_tensor(&mut rng, &[d]);
            let label = rng.below(c);

            let (logits, cache) = head.forward(&z).unwrap();
            let (_, dlogits) = head.loss_and_logit_grad(&logits, label).unwrap();
            let (_, grads) = head.dense.backward(&cache, &dlogits).unwrap();

            let loss = |head: &ClassifierHead, z: &Tensor| {
                let (logits, _) = head.forward(z).unwrap();
                cross_entropy(&logits.softmax(0).unwrap(), label).unwrap()
            };
            for idx in 0..head.dense.weight.len() {
                let orig = head.dense.weight.data()[idx];
                head.dense.weight.data_mut()[idx] = orig + FD_EPS;
                let plus = loss(&head, &z);
                head.dense.weight.data_mut()[idx] = orig - FD_EPS;
                let minus = loss(&head, &z);
                head.dense.weight.data_mut()[idx] = orig;
                assert!(
                    rel_err(grads.d_weight.data()[idx], (plus - minus) / (2.0 * FD_EPS)) < FD_TOL
                );
            }
        }
    }

    #[test]
    fn smooth_l1_examples() {
        let a = BBox::new(0.1, 0.1, 0.5, 0.5).unwrap();
        assert_eq!(smooth_l1(&a, &a), 0.0);
        assert!((smooth_l1_coords(&[0.5, 0.0, 0.0, 0.0], &[0.0; 4]) - 0.125).abs() < 1e-15);
        assert!((smooth_l1_coords(&[2.0, 0.0, 0.0, 0.0], &[0.0; 4]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn smooth_l1_knee_is_smooth() {
        // Numeric one-sided derivatives either side of the |d| = 1 knee.
        let f = |d: f64| smooth_l1_coords(&[d, 0.0, 0.0, 0.0], &[0.0; 4]);
        let h = 1e-7;
        let left = (f(1.0) - f(1.0 - h)) / h;
        let right = (f(1.0 + h) - f(1.0)) / h;
        assert!((left - right).abs() < 1e-6, "gap {}", (left - right).abs());
        let left = (f(-1.0 + h) - f(-1.0)) / h;
        let right = (f(-1.0) - f(-1.0 - h)) / h;
        assert!((left - right).abs() < 1e-6);
    }

    #[test]
    fn smooth_l1_gradient_is_correct() {
        let mut rng = crate::rng::Rng::from_seed(3);
        for _ in 0..50 {
            let pred = [rng.uniform() * 4.0 - 2.0, rng.uniform(), rng.uniform(), rng.uniform()];
            let target = [rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()];
            let grad = smooth_l1_coords_grad(&pred, &target);
            for k in 0..4 {
                let mut p = pred;
                p[k] += FD_EPS;
                let plus = smooth_l1_coords(&p, &target);
                p[k] = pred[k] - FD_EPS;
                let minus = smooth_l1_coords(&p, &target);
                let num = (plus - minus) / (2.0 * FD_EPS);
                assert!(rel_err(grad[k], num) < FD_TOL);
            }
        }
    }

    #[test]
    fn dice_examples() {
        let target = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(dice_loss(&target, &target).unwrap().abs() < 1e-6);

        let ones = Tensor::from_vec(&[2, 2], vec![1.0; 4]).unwrap();
        let empty = Tensor::zeros(&[2, 2]).unwrap();
        let miss = dice_loss(&ones, &empty).unwrap();
        assert!(miss > 0.999, "{miss}");

        let pred = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let got = dice_loss(&pred, &target).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-6, "{got}");

        assert!(dice_loss(&ones, &Tensor::zeros(&[3, 3]).unwrap()).is_err());
    }

    #[test]
    fn dice_stays_in_unit_interval() {
        let mut rng = crate::rng::Rng::from_seed(5);
        for _ in 0..200 {
            let g = rng.below(3) + 2;
            let pred = Tensor::from_vec(&[g, g], (0..g * g).map(|_| rng.uniform()).collect()).unwrap();
            let target =
                Tensor::from_vec(&[g, g], (0..g * g).map(|_| rng.below(2) as f64).collect())
                    .unwrap();
            let d = dice_loss(&pred, &target).unwrap();
            assert!((-1e-6..=1.0 + 1e-6).contains(&d), "{d}");
        }
    }

    #[test]
    fn dice_gradient_matches_finite_differences() {
        let mut rng = crate::rng::Rng::from_seed(6);
        for _ in 0..10 {
            let g = 3;
            let mut pred =
                Tensor::from_vec(&[g, g], (0..g * g).map(|_| rng.uniform() * 0.8 + 0.1).collect())
                    .unwrap();
            let target =
                Tensor::from_vec(&[g, g], (0..g * g).map(|_| rng.below(2) as f64).collect())
                    .unwrap();
            let grad = dice_loss_grad(&pred, &target).unwrap();
            for idx in 0..pred.len() {
                let orig = pred.data()[idx];
                pred.data_mut()[idx] = orig + FD_EPS;
                let plus = dice_loss(&pred, &target).unwrap();
                pred.data_mut()[idx] = orig - FD_EPS;
                let minus = dice_loss(&pred, &target).unwrap();
                pred.data_mut()[idx] = orig;
                assert!(rel_err(grad.data()[idx], (plus - minus) / (2.0 * FD_EPS)) < FD_TOL);
            }
        }
    }

    fn tiny_decoder(rng: &mut crate::rng::Rng, vocab: usize, d_z: usize) -> DecoderHead {
        DecoderHead::init(rng, vocab, 3, d_z, 4, 1, 2, 0).unwrap()
    }

    #[test]
    fn zero_decoder_uniform_loss() {
        let mut rng = crate::rng::Rng::from_seed(7);
        let vocab = 10;
        let mut head = tiny_decoder(&mut rng, vocab, 2);
        // Zero all parameters: logits are all zero, so probs are uniform.
        for t in [
            &mut head.out.weight,
            &mut head.out.bias,
            &mut head.embed.table,
            &mut head.cell.w_i,
            &mut head.cell.w_f,
            &mut head.cell.w_o,
            &mut head.cell.w_g,
            &mut head.cell.u_i,
            &mut head.cell.u_f,
            &mut head.cell.u_o,
            &mut head.cell.u_g,
            &mut head.cell.b_i,
            &mut head.cell.b_f,
            &mut head.cell.b_o,
            &mut head.cell.b_g,
        ] {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let z = Tensor::from_vec(&[2], vec![0.4, -0.6]).unwrap();
        let (loss, _) = head.teacher_forced(&z, &[head.eos]).unwrap();
        assert!((loss - (vocab as f64).ln()).abs() < 1e-12);

        // Scaling z changes nothing when the decoder weights are zero.
        let (loss2, _) = head.teacher_forced(&z.scale(2.0), &[head.eos]).unwrap();
        assert_eq!(loss, loss2);
    }

    #[test]
    fn teacher_forced_loss_nonnegative_and_pads_excluded() {
        let mut rng = crate::rng::Rng::from_seed(8);
        let head = tiny_decoder(&mut rng, 8, 3);
        let z = rand_tensor(&mut rng, &[3]);
        let (loss, cache) = head.teacher_forced(&z, &[4, 5, head.eos]).unwrap();
        assert!(loss >= 0.0);
        assert_eq!(cache.counted, 3);
        let (_, cache) = head.teacher_forced(&z, &[4, head.eos, head.pad]).unwrap();
        assert_eq!(cache.counted, 2);
        assert!(head.teacher_forced(&z, &[]).is_err());
        assert!(head.teacher_forced(&z, &[99]).is_err());
    }

    #[test]
    fn greedy_decoding_contract() {
        let mut rng = crate::rng::Rng::from_seed(9);
        let mut head = tiny_decoder(&mut rng, 6, 2);
        let z = rand_tensor(&mut rng, &[2]);

        // Rig the output layer so EOS always wins: empty sequence.
        head.out.weight = Tensor::zeros(&[6, 4]).unwrap();
        let mut bias = vec![0.0; 6];
        bias[head.eos] = 10.0;
        head.out.bias = Tensor::from_vec(&[6], bias).unwrap();
        assert_eq!(head.greedy(&z, 5).unwrap(), Vec::<usize>::new());

        // Unrigged: bounded length, no PAD/BOS, deterministic.
        let head = tiny_decoder(&mut rng, 6, 2);
        let toks = head.greedy(&z, 7).unwrap();
        assert!(toks.len() <= 7);
        assert!(toks.iter().all(|&t| t != head.pad && t != head.bos));
        assert_eq!(toks, head.greedy(&z, 7).unwrap());
    }

    #[test]
    fn decoder_gradients_match_finite_differences() {
        for seed in 0..3u64 {
            let mut rng = crate::rng::Rng::from_seed(1400 + seed);
            let vocab = 7;
            let d_z = 3;
            let mut head = tiny_decoder(&mut rng, vocab, d_z);
            let mut z = rand_tensor(&mut rng, &[d_z]);
            let targets = vec![4, 5, 3, head.eos];

            let (_, cache) = head.teacher_forced(&z, &targets).unwrap();
            let (d_z_grad, grads) = head.teacher_forced_backward(&cache, 1.0).unwrap();

            let loss = |head: &DecoderHead, z: &Tensor| head.teacher_forced(z, &targets).unwrap().0;

            for idx in 0..z.len() {
                let orig = z.data()[idx];
                z.data_mut()[idx] = orig + FD_EPS;
                let plus = loss(&head, &z);
                z.data_mut()[idx] = orig - FD_EPS;
                let minus = loss(&head, &z);
                z.data_mut()[idx] = orig;
                assert!(rel_err(d_z_grad.data()[idx], (plus - minus) / (2.0 * FD_EPS)) < FD_TOL);
            }

            let checks: Vec<(fn(&mut DecoderHead) -> &mut Tensor, Tensor)> = vec![
                (|h| &mut h.out.weight, grads.d_out.d_weight.clone()),
                (|h| &mut h.out.bias, grads.d_out.d_bias.clone()),
                (|h| &mut h.embed.table, grads.d_embed.clone()),
                (|h| &mut h.cell.w_i, grads.cell.w_i.clone()),
                (|h| &mut h.cell.u_f, grads.cell.u_f.clone()),
                (|h| &mut h.cell.b_g, grads.cell.b_g.clone()),
                (|h| &mut h.cell.w_o, grads.cell.w_o.clone()),
            ];
            for (get, analytic) in checks {
                for idx in 0..analytic.len() {
                    let orig = get(&mut head).data()[idx];
                    get(&mut head).data_mut()[idx] = orig + FD_EPS;
                    let plus = loss(&head, &z);
                    get(&mut head).data_mut()[idx] = orig - FD_EPS;
                    let minus = loss(&head, &z);
                    get(&mut head).data_mut()[idx] = orig;
                    let num = (plus - minus) / (2.0 * FD_EPS);
                    assert!(
                        rel_err(analytic.data()[idx], num) < FD_TOL,
                        "analytic {} vs fd {num}",
                        analytic.data()[idx]
                    );
                }
            }
        }
    }
}
