//! Checkpoints are versioned JSON and round-trip bit-exactly: every
//! parameter and every forward output is identical after save + load.
//!
//! Run with: `cargo run --example checkpoint_roundtrip`

use medfuse::checkpoint::{load_checkpoint, save_checkpoint};
use medfuse::fusion::FusionKind;
use medfuse::model::{Modality, Model, ModelConfig};
use medfuse::synthdata::{generate, CorpusConfig, Vocab};

fn main() -> medfuse::Result<()> {
    let cfg = ModelConfig {
        modality: Modality::Both,
        fusion: FusionKind::Bilinear,
        vocab_size: Vocab::corpus_default().len(),
        seed: 9,
        ..ModelConfig::tiny()
    };
    let model = Model::init(&cfg)?;

    let dir = std::env::temp_dir().join("medfuse-checkpoint-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("model.ckpt.json");
    save_checkpoint(&model, &path)?;
    let loaded = load_checkpoint(&path)?;

    let case = generate(&CorpusConfig {
        num_cases: 1,
        image_side: 8,
        mask_side: 2,
        noise_std: 0.05,
        distractor_tokens: 3,
        seed: 9,
        ..CorpusConfig::default()
    })?
    .remove(0);

    let before = model.forward_all(&case)?;
    let after = loaded.forward_all(&case)?;
    assert_eq!(before.probs.data(), after.probs.data());
    assert_eq!(before.box_raw.data(), after.box_raw.data());
    assert_eq!(before.mask.data(), after.mask.data());
    assert_eq!(model.param_map(), loaded.param_map());

    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("checkpoint at {} ({bytes} bytes)", path.display());
    println!("all parameters and forward outputs identical after round trip");
    Ok(())
}
