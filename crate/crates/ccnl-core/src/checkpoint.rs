//! Model persistence. A checkpoint is a self-describing container:
//!
//! ```text
//! CCNLCKPT v1\n
//! <single-line JSON header>\n
//! <f64 little-endian payload, tensors in header order>
//! <32-byte SHA-256 of everything above>
//! ```
//!
//! The header carries the full model configuration, both vocabularies,
//! and a (name, shape, dtype) entry per tensor, so a checkpoint alone is
//! enough to rebuild the model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{random_embeddings, Vocab};
use crate::error::{CcnlError, Result};
use crate::model::{CcnlModel, ModelConfig};
use crate::numerics::Tensor;
use crate::rng::SeededRng;

const MAGIC: &[u8] = b"CCNLCKPT v1\n";

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    source_vocab: Vec<String>,
    target_vocab: Vec<String>,
    tensors: Vec<TensorMeta>,
}

pub fn to_bytes(model: &CcnlModel) -> Result<Vec<u8>> {
    let header = Header {
        config: model.config.clone(),
        source_vocab: model.source_vocab.tokens().to_vec(),
        target_vocab: model.target_vocab.tokens().to_vec(),
        tensors: model
            .store
            .iter()
            .map(|p| TensorMeta {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                dtype: "f64".into(),
            })
            .collect(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let json = serde_json::to_string(&header)
        .map_err(|e| CcnlError::Checkpoint(format!("header serialization failed: {e}")))?;
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    for p in model.store.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<CcnlModel> {
    let err = |m: &str| CcnlError::Checkpoint(m.to_string());
    if bytes.len() < MAGIC.len() + 32 || !bytes.starts_with(MAGIC) {
        return Err(err("not a checkpoint (bad magic)"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(err("checksum mismatch (corrupt checkpoint)"));
    }
    let rest = &body[MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| err("missing header line"))?;
    let header: Header = serde_json::from_slice(&rest[..nl])
        .map_err(|e| CcnlError::Checkpoint(format!("bad header: {e}")))?;
    let payload = &rest[nl + 1..];

    let expected: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>() * 8)
        .sum();
    if payload.len() != expected {
        return Err(CcnlError::Checkpoint(format!(
            "payload is {} bytes, header promises {expected}",
            payload.len()
        )));
    }
    if let Some(t) = header.tensors.iter().find(|t| t.dtype != "f64") {
        return Err(CcnlError::Checkpoint(format!(
            "tensor {} has unsupported dtype {}",
            t.name, t.dtype
        )));
    }

    let source_vocab = Vocab::from_tokens(header.source_vocab);
    let target_vocab = Vocab::from_tokens(header.target_vocab);
    let mut rng = SeededRng::new(header.config.seed).derive("init");
    let src = random_embeddings(&source_vocab, header.config.embedding_dim, &mut rng);
    let tgt = random_embeddings(&target_vocab, header.config.embedding_dim, &mut rng);
    let mut model = CcnlModel::new(header.config, src, tgt, &mut rng);

    if model.store.len() != header.tensors.len() {
        return Err(CcnlError::Checkpoint(format!(
            "architecture expects {} tensors, checkpoint has {}",
            model.store.len(),
            header.tensors.len()
        )));
    }
    let mut cursor = 0usize;
    for (p, meta) in model.store.iter_mut().zip(&header.tensors) {
        if p.name != meta.name || p.value.shape() != meta.shape.as_slice() {
            return Err(CcnlError::Checkpoint(format!(
                "tensor mismatch: model has {} {:?}, checkpoint has {} {:?}",
                p.name,
                p.value.shape(),
                meta.name,
                meta.shape
            )));
        }
        let n = p.value.len();
        let mut data = Vec::with_capacity(n);
        for k in 0..n {
            let off = cursor + k * 8;
            data.push(f64::from_le_bytes(payload[off..off + 8].try_into().unwrap()));
        }
        cursor += n * 8;
        p.value = Tensor::new(meta.shape.clone(), data);
        p.gradient = Tensor::zeros(&meta.shape);
    }
    Ok(model)
}

pub fn save(model: &CcnlModel, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    fs::write(path, bytes).map_err(|e| CcnlError::io(path.display().to_string(), e))
}

pub fn load(path: &Path) -> Result<CcnlModel> {
    let bytes = fs::read(path).map_err(|e| CcnlError::io(path.display().to_string(), e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, Example, ParallelExample};
    use crate::model::Ablation;
    use tempfile::tempdir;

    fn small_model(ablation: Ablation) -> CcnlModel {
        let config = ModelConfig {
            embedding_dim: 8,
            lstm_units_per_direction: 4,
            classifier_hidden: 8,
            capsule_dim: 4,
            capsule_count: 2,
            routing_iterations: 2,
            max_sequence_length: 4,
            dropout: 0.0,
            ablation,
            ..ModelConfig::default()
        };
        let src_vocab = build_vocab(["uno dos tres mal"], 1);
        let tgt_vocab = build_vocab(["one two three bad"], 1);
        let mut rng = SeededRng::new(17);
        let src = random_embeddings(&src_vocab, config.embedding_dim, &mut rng);
        let tgt = random_embeddings(&tgt_vocab, config.embedding_dim, &mut rng);
        CcnlModel::new(config, src, tgt, &mut rng)
    }

    fn example() -> ParallelExample {
        ParallelExample {
            source: Example {
                id: "1".into(),
                text: "uno mal dos".into(),
                label: 1,
            },
            target_text: "one bad two".into(),
            label: 1,
        }
    }

    #[test]
    fn round_trip_bit_identical_predictions() {
        for ablation in Ablation::ALL {
            let model = small_model(ablation);
            let dir = tempdir().unwrap();
            let path = dir.path().join("m.ckpt");
            save(&model, &path).unwrap();
            let loaded = load(&path).unwrap();
            let a = model.predict_parallel(&[example()]).unwrap();
            let b = loaded.predict_parallel(&[example()]).unwrap();
            assert_eq!(a[0].0, b[0].0);
            assert_eq!(a[0].1[0].to_bits(), b[0].1[0].to_bits());
            assert_eq!(a[0].1[1].to_bits(), b[0].1[1].to_bits());
            assert_eq!(loaded.config.ablation, ablation);
        }
    }

    #[test]
    fn save_is_deterministic() {
        let model = small_model(Ablation::Full);
        assert_eq!(to_bytes(&model).unwrap(), to_bytes(&model).unwrap());
    }

    #[test]
    fn corrupt_byte_rejected() {
        let model = small_model(Ablation::Full);
        let mut bytes = to_bytes(&model).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        let e = from_bytes(&bytes).unwrap_err();
        assert!(matches!(e, CcnlError::Checkpoint(_)), "{e}");
    }

    #[test]
    fn truncated_and_garbage_rejected() {
        let model = small_model(Ablation::Full);
        let bytes = to_bytes(&model).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 40]).is_err());
        assert!(from_bytes(b"not a checkpoint at all").is_err());
    }
}
