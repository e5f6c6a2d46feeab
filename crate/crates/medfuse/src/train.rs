//! Deterministic training: SGD with momentum, global-norm gradient
//! clipping, and per-case updates in a Fisher–Yates shuffled order drawn
//! from the stream `(seed, SHUFFLE, epoch)`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{GradMap, Model};
use crate::rng::{stream, Rng};
use crate::synthdata::CaseRecord;
use crate::tensor::Tensor;

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct SgdState {
    velocity: BTreeMap<String, Tensor>,
}

/// `v <- momentum * v + g; theta <- theta - lr * v` for every parameter.
pub fn sgd_step(
    model: &mut Model,
    grads: &GradMap,
    lr: f64,
    momentum: f64,
    state: &mut SgdState,
) -> Result<()> {
    for (name, tensor) in model.param_tensors_mut() {
        let g = grads.get(&name).ok_or_else(|| {
            Error::InvalidArgument(format!("gradient map is missing parameter '{name}'"))
        })?;
        if g.dims() != tensor.dims() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                left: tensor.dims().to_vec(),
                right: g.dims().to_vec(),
            });
        }
        let v = state
            .velocity
            .entry(name)
            .or_insert_with(|| Tensor::full(tensor.shape().clone(), 0.0));
        for ((vk, tk), gk) in v
            .data_mut()
            .iter_mut()
            .zip(tensor.data_mut())
            .zip(g.data())
        {
            *vk = momentum * *vk + gk;
            *tk -= lr * *vk;
        }
    }
    Ok(())
}

/// Scale all gradients by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut GradMap, max_norm: f64) -> f64 {
    let sq: f64 = grads
        .values()
        .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.values_mut() {
            for v in t.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Train in place for `model.config.epochs` epochs over `corpus`,
/// returning the per-epoch mean total loss. Deterministic given the
/// config seed; zero epochs leave the parameters untouched.
pub fn train(model: &mut Model, corpus: &[CaseRecord]) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let cfg = model.config.clone();
    let mut state = SgdState::default();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = Rng::from_seeds(&[cfg.seed, stream::SHUFFLE, epoch as u64]);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for &idx in &order {
            let (losses, mut grads) = model.loss_and_grads(&corpus[idx])?;
            clip_global_norm(&mut grads, cfg.grad_clip);
            sgd_step(model, &grads, cfg.learning_rate, cfg.momentum, &mut state)?;
            epoch_loss += losses.total;
        }
        log.push(epoch_loss / corpus.len() as f64);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionKind;
    use crate::model::{Modality, ModelConfig};
    use crate::synthdata::{generate, CorpusConfig, Vocab};

    fn overfit_setup(epochs: usize) -> (Model, Vec<CaseRecord>) {
        let corpus = generate(&CorpusConfig {
            num_cases: 4,
            image_side: 8,
            mask_side: 2,
            noise_std: 0.0,
            distractor_tokens: 2,
            seed: 100,
            ..CorpusConfig::default()
        })
        .unwrap();
        let cfg = ModelConfig {
            modality: Modality::Both,
            fusion: FusionKind::Gated,
            vocab_size: Vocab::corpus_default().len(),
            epochs,
            ..ModelConfig::tiny()
        };
        (Model::init(&cfg).unwrap(), corpus)
    }

    #[test]
    fn sgd_worked_examples() {
        // theta = 1, g = 2, lr = 0.1, no momentum -> theta' = 0.8.
        let (mut model, corpus) = overfit_setup(0);
        let _ = corpus;
        let first_name = model.params()[0].0.clone();
        let mut grads = GradMap::new();
        for (name, t) in model.params() {
            grads.insert(name, Tensor::full(t.shape().clone(), 0.0));
        }
        // Zero gradient with zero velocity is a fixed point.
        let before = model.param_map();
        let mut state = SgdState::default();
        sgd_step(&mut model, &grads, 0.1, 0.9, &mut state).unwrap();
        assert_eq!(before, model.param_map());

        // Single-parameter recurrence with momentum 0.9 and g = 1:
        // v1 = 1, theta1 = theta0 - 0.1; v2 = 1.9, theta2 = theta1 - 0.19.
        let theta0 = model.params()[0].1.data()[0];
        let shape = model.params()[0].1.shape().clone();
        let mut g1 = Tensor::full(shape, 0.0);
        g1.data_mut()[0] = 1.0;
        grads.insert(first_name.clone(), g1);
        let mut state = SgdState::default();
        sgd_step(&mut model, &grads, 0.1, 0.9, &mut state).unwrap();
        let theta1 = model.params()[0].1.data()[0];
        assert!((theta1 - (theta0 - 0.1)).abs() < 1e-15);
        sgd_step(&mut model, &grads, 0.1, 0.9, &mut state).unwrap();
        let theta2 = model.params()[0].1.data()[0];
        assert!((theta2 - (theta1 - 0.19)).abs() < 1e-12);
    }

    #[test]
    fn plain_sgd_step_arithmetic() {
        let (mut model, _) = overfit_setup(0);
        let (name, t) = &model.params()[0];
        let (name, shape) = (name.clone(), t.shape().clone());
        // Pin the first entry to 1.0 and take one step with g = 2, lr = 0.1.
        model.param_tensors_mut()[0].1.data_mut()[0] = 1.0;
        let mut grads = GradMap::new();
        for (n, t) in model.params() {
            grads.insert(n, Tensor::full(t.shape().clone(), 0.0));
        }
        let mut g = Tensor::full(shape, 0.0);
        g.data_mut()[0] = 2.0;
        grads.insert(name, g);
        sgd_step(&mut model, &grads, 0.1, 0.0, &mut SgdState::default()).unwrap();
        assert!((model.params()[0].1.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_scales_only_above_threshold() {
        let mut grads = GradMap::new();
        grads.insert("a".into(), Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap());
        let norm = clip_global_norm(&mut grads, 10.0);
        assert_eq!(norm, 5.0);
        assert_eq!(grads["a"].data(), &[3.0, 4.0]);
        let norm = clip_global_norm(&mut grads, 1.0);
        assert_eq!(norm, 5.0);
        assert!((grads["a"].data()[0] - 0.6).abs() < 1e-15);
        assert!((grads["a"].data()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (mut model, corpus) = overfit_setup(0);
        let before = model.param_map();
        let log = train(&mut model, &corpus).unwrap();
        assert!(log.is_empty());
        assert_eq!(before, model.param_map());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (mut a, corpus) = overfit_setup(3);
        let (mut b, _) = overfit_setup(3);
        let log_a = train(&mut a, &corpus).unwrap();
        let log_b = train(&mut b, &corpus).unwrap();
        assert_eq!(log_a, log_b);
        assert_eq!(a.param_map(), b.param_map());
    }

    #[test]
    fn loss_decreases_on_average_when_overfitting() {
        let (mut model, corpus) = overfit_setup(40);
        let log = train(&mut model, &corpus).unwrap();
        let head: f64 = log[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = log[log.len() - 5..].iter().sum::<f64>() / 5.0;
        assert!(
            tail < head * 0.8,
            "no meaningful improvement: head {head}, tail {tail}"
        );
        // Ten-step moving average of teacher-forced-dominated total loss is
        // non-increasing once past the first epochs.
        let avg = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
        let windows: Vec<f64> = log.windows(10).map(avg).collect();
        let violations = windows
            .windows(2)
            .filter(|pair| pair[1] > pair[0] + 0.05)
            .count();
        assert!(violations == 0, "moving average increased {violations} times");
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let (mut model, _) = overfit_setup(1);
        assert!(train(&mut model, &[]).is_err());
    }
}
