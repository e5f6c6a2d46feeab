//! Look inside the attention mechanisms after training a small fused model:
//! which report tokens the text encoder's additive pooling focuses on, and
//! how the gated fusion balances the two modalities.
//!
//! Run with: `cargo run --release --example attention_inspection`

use medfuse::fusion::FusionKind;
use medfuse::layers::{global_pool, PoolKind};
use medfuse::model::{Fusion, Modality, Model, ModelConfig};
use medfuse::synthdata::{generate, split_corpus, CorpusConfig, Vocab};
use medfuse::tensor::Tensor;
use medfuse::train::train;

fn main() -> medfuse::Result<()> {
    let vocab = Vocab::corpus_default();
    let corpus = generate(&CorpusConfig {
        num_cases: 600,
        noise_std: 0.05,
        seed: 11,
        ..CorpusConfig::default()
    })?;
    let (train_set, _val, test_set) = split_corpus(corpus);
    let cfg = ModelConfig {
        modality: Modality::Both,
        fusion: FusionKind::Gated,
        epochs: 10,
        seed: 11,
        ..ModelConfig::default()
    };
    let mut model = Model::init(&cfg)?;
    println!("training for {} epochs on {} cases...", cfg.epochs, train_set.len());
    train(&mut model, &train_set)?;

    let case = &test_set[0];
    println!("report: {}", vocab.detokenize(&case.report));

    // Text-side additive attention weights per token.
    let text_enc = model.text_enc.as_ref().expect("both-modality model");
    let xs = text_enc.embed.lookup(&case.report)?;
    let (states, _) = text_enc.bilstm.forward(&xs)?;
    let (pooled, alphas, _) = text_enc.attn_pool.forward(&states)?;
    println!("attention pooling weights:");
    for (t, &tok) in case.report.iter().enumerate() {
        let bar = "#".repeat((alphas.data()[t] * 120.0).round() as usize);
        println!("  {:<10} {:.3} {bar}", vocab.word(tok).unwrap_or("?"), alphas.data()[t]);
    }

    // Gate values: how much of each joint coordinate comes from the image.
    let (v_txt, _) = text_enc.to_feat.forward(&pooled)?;
    let image_enc = model.image_enc.as_ref().expect("both-modality model");
    let mut x = case.image.scale(2.0).sub(&Tensor::full(case.image.shape().clone(), 1.0))?;
    for b in &image_enc.blocks {
        let (y, _) = b.conv.forward(&x)?;
        let (p, _) = b.pool.forward(&y)?;
        x = p;
    }
    let (img_pooled, _) = global_pool(PoolKind::Avg, &x)?;
    let (v_img, _) = image_enc.to_feat.forward(&img_pooled)?;
    if let Fusion::Gated(g) = &model.fusion {
        let (_, gate, _) = g.forward(&v_img, &v_txt)?;
        let mean_gate = gate.sum() / gate.len() as f64;
        println!("gate values (1 = image path, 0 = text path):");
        println!("  per-dim: {:?}", gate.data().iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
        println!("  mean: {mean_gate:.3}");
    }
    Ok(())
}
