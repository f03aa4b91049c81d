//! Checkpoint persistence: a JSON manifest (parameter names and shapes,
//! configuration, vocabulary, epoch, validation loss) next to a payload of
//! raw little-endian f64 values concatenated in manifest order. Round trips
//! are bitwise.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelDims};
use crate::numcore::array::{Array, ParamSet};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestParam {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    params: Vec<ManifestParam>,
    config: RunConfig,
    epoch: usize,
    val_loss: f64,
    vocab: Vec<String>,
}

/// Run metadata stored alongside the weights.
#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub config: RunConfig,
    pub epoch: usize,
    pub val_loss: f64,
    pub vocab: Vec<String>,
}

fn manifest_path(base: &Path) -> PathBuf {
    base.with_extension("json")
}

fn payload_path(base: &Path) -> PathBuf {
    base.with_extension("bin")
}

pub fn save_checkpoint(model: &Model, meta: &CheckpointMeta, base: &Path) -> Result<()> {
    let manifest = Manifest {
        params: model
            .params
            .iter()
            .map(|(name, a)| ManifestParam {
                name: name.to_string(),
                shape: a.shape().to_vec(),
            })
            .collect(),
        config: meta.config.clone(),
        epoch: meta.epoch,
        val_loss: meta.val_loss,
        vocab: meta.vocab.clone(),
    };
    let json = serde_json::to_string(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest encode: {e}")))?;
    fs::write(manifest_path(base), json)
        .map_err(|e| Error::Checkpoint(format!("write manifest: {e}")))?;

    let mut payload = Vec::with_capacity(model.params.total_params() * 8);
    for (_, array) in model.params.iter() {
        for v in array.values() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(payload_path(base), payload)
        .map_err(|e| Error::Checkpoint(format!("write payload: {e}")))?;
    Ok(())
}

pub fn load_checkpoint(base: &Path) -> Result<(Model, CheckpointMeta)> {
    let json = fs::read_to_string(manifest_path(base))
        .map_err(|e| Error::Checkpoint(format!("read manifest: {e}")))?;
    let manifest: Manifest =
        serde_json::from_str(&json).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    let payload = fs::read(payload_path(base))
        .map_err(|e| Error::Checkpoint(format!("read payload: {e}")))?;

    // The canonical parameter list for this configuration; the manifest must
    // agree exactly (names, order, shapes).
    let mut probe_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    use rand::SeedableRng;
    let canonical = Model::new(&manifest.config, manifest.vocab.len(), &mut probe_rng);
    if canonical.params.len() != manifest.params.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} parameters, configuration defines {}",
            manifest.params.len(),
            canonical.params.len()
        )));
    }
    for (idx, mp) in manifest.params.iter().enumerate() {
        let (name, array) = canonical.params.at(idx);
        if name != mp.name || array.shape() != mp.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter {}: manifest says {:?} {:?}, configuration defines {} {:?}",
                idx, mp.name, mp.shape, name, array.shape()
            )));
        }
    }

    let mut params = ParamSet::new();
    let mut offset = 0usize;
    for mp in &manifest.params {
        let n: usize = mp.shape.iter().product();
        let bytes_needed = n * 8;
        if offset + bytes_needed > payload.len() {
            return Err(Error::Checkpoint(format!(
                "payload truncated at parameter {}", mp.name
            )));
        }
        let values: Vec<f64> = payload[offset..offset + bytes_needed]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += bytes_needed;
        params.add(&mp.name, Array::from_vec(mp.shape.clone(), values)?);
    }
    if offset != payload.len() {
        return Err(Error::Checkpoint(format!(
            "payload has {} trailing bytes",
            payload.len() - offset
        )));
    }

    let dims = ModelDims::from_config(&manifest.config, manifest.vocab.len());
    let meta = CheckpointMeta {
        config: manifest.config,
        epoch: manifest.epoch,
        val_loss: manifest.val_loss,
        vocab: manifest.vocab,
    };
    Ok((Model { dims, params }, meta))
}

/// Load, additionally requiring the stored configuration to be structurally
/// compatible with `expected` (same architecture-determining fields).
pub fn load_checkpoint_expecting(
    base: &Path,
    expected: &RunConfig,
) -> Result<(Model, CheckpointMeta)> {
    let (model, meta) = load_checkpoint(base)?;
    let stored = &meta.config;
    let structural = [
        ("hidden", stored.hidden, expected.hidden),
        ("embed", stored.embed, expected.embed),
        ("layers", stored.layers, expected.layers),
    ];
    for (field, got, want) in structural {
        if got != want {
            return Err(Error::Checkpoint(format!(
                "checkpoint {field}={got} incompatible with requested {field}={want}"
            )));
        }
    }
    if stored.task != expected.task {
        return Err(Error::Checkpoint(format!(
            "checkpoint task {} incompatible with requested {}",
            stored.task, expected.task
        )));
    }
    Ok((model, meta))
}
