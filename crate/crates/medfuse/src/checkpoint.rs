//! Checkpoint persistence: versioned JSON with the full config and a
//! name-to-tensor parameter map. Round-trips are bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct ParamEntry {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    params: BTreeMap<String, ParamEntry>,
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let params = model
        .params()
        .into_iter()
        .map(|(name, t)| {
            (
                name,
                ParamEntry {
                    shape: t.dims().to_vec(),
                    values: t.data().to_vec(),
                },
            )
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        params,
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    let mut model = Model::init(&file.config)?;
    let mut seen = 0usize;
    for (name, tensor) in model.param_tensors_mut() {
        let entry = file
            .params
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{name}'")))?;
        if entry.shape != tensor.dims() {
            return Err(Error::Checkpoint(format!(
                "parameter '{name}' has shape {:?}, expected {:?}",
                entry.shape,
                tensor.dims()
            )));
        }
        tensor.data_mut().copy_from_slice(&entry.values);
        seen += 1;
    }
    if seen != file.params.len() {
        let known: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
        let unknown = file
            .params
            .keys()
            .find(|k| !known.contains(k))
            .cloned()
            .unwrap_or_default();
        return Err(Error::Checkpoint(format!("unknown parameter '{unknown}'")));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionKind;
    use crate::model::Modality;
    use crate::synthdata::{generate, CorpusConfig, Vocab};

    fn tiny_model() -> Model {
        let cfg = ModelConfig {
            modality: Modality::Both,
            fusion: FusionKind::Gated,
            vocab_size: Vocab::corpus_default().len(),
            ..ModelConfig::tiny()
        };
        Model::init(&cfg).unwrap()
    }

    fn tiny_case() -> crate::synthdata::CaseRecord {
        generate(&CorpusConfig {
            num_cases: 1,
            image_side: 8,
            mask_side: 2,
            noise_std: 0.05,
            distractor_tokens: 3,
            seed: 2,
            ..CorpusConfig::default()
        })
        .unwrap()
        .remove(0)
    }

    #[test]
    fn round_trip_is_bit_exact_and_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let model = tiny_model();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(model.param_map(), loaded.param_map());

        let case = tiny_case();
        let a = model.forward_all(&case).unwrap();
        let b = loaded.forward_all(&case).unwrap();
        assert_eq!(a.probs.data(), b.probs.data());
        assert_eq!(a.box_raw.data(), b.box_raw.data());
        assert_eq!(a.mask.data(), b.mask.data());
        assert_eq!(a.gen_loss, b.gen_loss);

        // Save-load-save produces identical bytes.
        let path2 = dir.path().join("model2.ckpt.json");
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn version_and_shape_errors_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let model = tiny_model();
        save_checkpoint(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let bad = text.replacen("\"version\":1", "\"version\":9", 1);
        std::fs::write(&path, bad).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");

        let bad = text.replacen("heads.classifier.bias", "heads.classifier.bios", 1);
        std::fs::write(&path, bad).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("heads.classifier.bias"), "{err}");

        // Shape mismatch on a named parameter.
        let bad = text.replacen(
            "\"heads.classifier.bias\":{\"shape\":[2]",
            "\"heads.classifier.bias\":{\"shape\":[3]",
            1,
        );
        assert_ne!(bad, text, "fixture assumes 2 classes");
        std::fs::write(&path, bad).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("heads.classifier.bias") && err.contains("shape"), "{err}");
    }
}
