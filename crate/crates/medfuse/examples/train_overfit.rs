//! Overfit a small model on eight cases: the composite loss (classification
//! + box + mask + description) should collapse toward zero and the
//! training-set accuracy reach 1.0 inside 500 epochs.
//!
//! Run with: `cargo run --release --example train_overfit`

use medfuse::eval::{evaluate, TaskSet};
use medfuse::fusion::FusionKind;
use medfuse::model::{Modality, Model, ModelConfig};
use medfuse::synthdata::{generate, CorpusConfig, Vocab};
use medfuse::train::train;

fn main() -> medfuse::Result<()> {
    let corpus = generate(&CorpusConfig {
        num_cases: 8,
        image_side: 8,
        mask_side: 2,
        noise_std: 0.0,
        distractor_tokens: 3,
        seed: 42,
        ..CorpusConfig::default()
    })?;
    let cfg = ModelConfig {
        modality: Modality::Both,
        fusion: FusionKind::Gated,
        vocab_size: Vocab::corpus_default().len(),
        d_img: 8,
        d_txt: 8,
        d_z: 8,
        d_emb: 8,
        decoder_hidden: 12,
        epochs: 500,
        seed: 42,
        ..ModelConfig::tiny()
    };
    let mut model = Model::init(&cfg)?;
    let started = std::time::Instant::now();
    let log = train(&mut model, &corpus)?;
    for epoch in (0..log.len()).step_by(50) {
        println!("epoch {epoch:>3}: mean loss {:.5}", log[epoch]);
    }
    println!("epoch {:>3}: mean loss {:.5}", log.len() - 1, log.last().unwrap());

    let (report, _) = evaluate(&model, &corpus, &TaskSet::all(), "overfit")?;
    println!(
        "training-set accuracy {:.3}, mean IoU {:.3}, BLEU {:.3} ({:?})",
        report.accuracy.unwrap(),
        report.mean_iou.unwrap(),
        report.bleu.unwrap(),
        started.elapsed()
    );
    Ok(())
}
