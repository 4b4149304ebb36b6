use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, check_vocab, io_err, read_json, write_json, IoError, FORMAT_VERSION};
use crate::autodiff::ParamStore;
use crate::expr::Vocab;
use crate::model::{ModelConfig, Prose};
use crate::train_eval::TrainLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the parameter block, in floats.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub vocab_hash: String,
    pub config_hash: String,
    /// The run config that produced the checkpoint, as TOML.
    pub run_config: String,
    pub model: ModelConfig,
    pub steps: usize,
    pub tensors: Vec<TensorRecord>,
}

pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: Prose,
    pub params: ParamStore<f32>,
}

const MANIFEST: &str = "checkpoint.json";
const PARAMS: &str = "params.f32";
const LOG: &str = "train_log.json";

pub fn save_checkpoint(
    dir: &Path,
    model: &Prose,
    params: &ParamStore<f32>,
    run_config: &super::RunConfig,
    log: Option<&TrainLog>,
) -> Result<CheckpointManifest, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut bytes = Vec::with_capacity(4 * params.numel());
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, t) in params.iter() {
        tensors.push(TensorRecord {
            name: name.to_string(),
            shape: t.shape.clone(),
            offset,
        });
        offset += t.data.len();
        bytes.extend(t.data.iter().flat_map(|v| v.to_le_bytes()));
    }
    let p = dir.join(PARAMS);
    fs::write(&p, &bytes).map_err(io_err(&p))?;
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        vocab_hash: Vocab::global().hash(),
        config_hash: run_config.hash(),
        run_config: run_config.to_toml()?,
        model: model.config.clone(),
        steps: log.and_then(|l| l.records.last()).map(|r| r.step).unwrap_or(0),
        tensors,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    if let Some(l) = log {
        write_json(&dir.join(LOG), l)?;
    }
    Ok(manifest)
}

/// Loads a checkpoint. With `expected_config` set, a different config hash
/// is refused.
pub fn load_checkpoint(dir: &Path, expected_config: Option<&str>) -> Result<Checkpoint, IoError> {
    let manifest: CheckpointManifest = read_json(&dir.join(MANIFEST))?;
    check_version(manifest.format_version)?;
    check_vocab(&manifest.vocab_hash)?;
    if let Some(h) = expected_config {
        if h != manifest.config_hash {
            return Err(IoError::ConfigMismatch {
                expected: h.to_string(),
                found: manifest.config_hash.clone(),
            });
        }
    }
    let (model, mut params) = Prose::init::<f32>(manifest.model.clone(), 0)?;
    let p = dir.join(PARAMS);
    let bytes = fs::read(&p).map_err(io_err(&p))?;
    let expected = 4 * params.numel() as u64;
    if (bytes.len() as u64) < expected {
        return Err(IoError::Truncated {
            path: p,
            offset: bytes.len() as u64,
            expected,
        });
    }
    if manifest.tensors.len() != params.len() {
        return Err(IoError::Format(format!(
            "checkpoint has {} tensors, model {}",
            manifest.tensors.len(),
            params.len()
        )));
    }
    for rec in &manifest.tensors {
        let id = params
            .find(&rec.name)
            .ok_or_else(|| IoError::Format(format!("unknown tensor {}", rec.name)))?;
        let t = params.get_mut(id);
        if t.shape != rec.shape {
            return Err(IoError::Format(format!("tensor {} has shape {:?}, model {:?}", rec.name, rec.shape, t.shape)));
        }
        let start = 4 * rec.offset;
        let end = start + 4 * t.data.len();
        let chunk = bytes
            .get(start..end)
            .ok_or_else(|| IoError::Format(format!("tensor {} outside the parameter block", rec.name)))?;
        for (v, c) in t.data.iter_mut().zip(chunk.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    Ok(Checkpoint {
        manifest,
        model,
        params,
    })
}
