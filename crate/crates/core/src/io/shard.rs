use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, check_vocab, io_err, read_json, write_json, IoError, FORMAT_VERSION};
use crate::expr::Vocab;
use crate::pde_zoo::{PdeInstance, N_INPUT_STAMPS, N_STAMPS};
use crate::train_eval::{Dataset, GenReport, GenSpec, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: u64,
    pub instance: PdeInstance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardFiles {
    /// Clean trajectories `[N][32][nx]`, little-endian f32.
    pub trajectories: String,
    /// Model inputs `[N][16][nx]` after noise, little-endian f32.
    pub inputs: String,
    /// Per instance: equation then skeleton, each a u16 length and u16 ids.
    pub tokens: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShardManifest {
    pub format_version: u32,
    pub vocab_hash: String,
    pub config_hash: Option<String>,
    pub spec: GenSpec,
    pub report: GenReport,
    pub nx: usize,
    pub n_stamps: usize,
    pub families: Vec<String>,
    pub instances: Vec<InstanceRecord>,
    pub files: ShardFiles,
}

const MANIFEST: &str = "manifest.json";

fn f32_bytes<'a>(values: impl Iterator<Item = &'a f32>) -> Vec<u8> {
    values.flat_map(|v| v.to_le_bytes()).collect()
}

/// The trajectory block exactly as written to disk.
pub fn tensor_bytes(data: &Dataset) -> Vec<u8> {
    f32_bytes(data.samples.iter().flat_map(|s| s.values.iter()))
}

fn push_tokens(buf: &mut Vec<u8>, ids: &[u16]) -> Result<(), IoError> {
    let n = u16::try_from(ids.len()).map_err(|_| IoError::Format(format!("token sequence of {} ids", ids.len())))?;
    buf.extend(n.to_le_bytes());
    buf.extend(ids.iter().flat_map(|i| i.to_le_bytes()));
    Ok(())
}

/// Writes `data` into `dir` (created if missing).
pub fn write_shard(dir: &Path, data: &Dataset, config_hash: Option<&str>) -> Result<ShardManifest, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let nx = data.samples.first().map(|s| s.nx()).unwrap_or(crate::pde_zoo::NX);
    let files = ShardFiles {
        trajectories: "trajectories.f32".into(),
        inputs: "inputs.f32".into(),
        tokens: "tokens.u16".into(),
    };
    let mut tokens = Vec::new();
    for s in &data.samples {
        push_tokens(&mut tokens, &s.equation)?;
        push_tokens(&mut tokens, &s.skeleton)?;
    }
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(io_err(&p))
    };
    write(&files.trajectories, &tensor_bytes(data))?;
    write(&files.inputs, &f32_bytes(data.samples.iter().flat_map(|s| s.inputs.iter())))?;
    write(&files.tokens, &tokens)?;
    let mut families: Vec<String> = data.spec.parts.iter().map(|p| p.family.id().to_string()).collect();
    families.dedup();
    let manifest = ShardManifest {
        format_version: FORMAT_VERSION,
        vocab_hash: Vocab::global().hash(),
        config_hash: config_hash.map(str::to_string),
        spec: data.spec.clone(),
        report: data.report.clone(),
        nx,
        n_stamps: N_STAMPS,
        families,
        instances: data
            .samples
            .iter()
            .map(|s| InstanceRecord {
                index: s.index,
                instance: s.instance.clone(),
            })
            .collect(),
        files,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn read_block(path: &Path, expected: u64) -> Result<Vec<u8>, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let len = bytes.len() as u64;
    if len < expected {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            offset: len,
            expected,
        });
    }
    if len > expected {
        return Err(IoError::Format(format!(
            "{}: {} trailing bytes after offset {expected}",
            path.display(),
            len - expected
        )));
    }
    Ok(bytes)
}

fn f32s(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

struct TokenReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl TokenReader<'_> {
    fn u16(&mut self) -> Result<u16, IoError> {
        let Some(b) = self.bytes.get(self.pos..self.pos + 2) else {
            return Err(IoError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.bytes.len() as u64,
                expected: self.pos as u64 + 2,
            });
        };
        self.pos += 2;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn seq(&mut self) -> Result<Vec<u16>, IoError> {
        let n = self.u16()? as usize;
        (0..n).map(|_| self.u16()).collect()
    }
}

/// Reads a shard, verifying version, vocabulary hash and block sizes.
pub fn read_shard(dir: &Path) -> Result<(Dataset, ShardManifest), IoError> {
    let m: ShardManifest = read_json(&dir.join(MANIFEST))?;
    check_version(m.format_version)?;
    check_vocab(&m.vocab_hash)?;
    if m.instances.len() != m.spec.total() {
        return Err(IoError::Format(format!(
            "manifest lists {} instances, spec asks for {}",
            m.instances.len(),
            m.spec.total()
        )));
    }
    let n = m.instances.len() as u64;
    let row = 4 * m.nx as u64;
    let traj = f32s(&read_block(&dir.join(&m.files.trajectories), n * m.n_stamps as u64 * row)?);
    let inputs = f32s(&read_block(&dir.join(&m.files.inputs), n * N_INPUT_STAMPS as u64 * row)?);
    let tok_path = dir.join(&m.files.tokens);
    let tok_bytes = fs::read(&tok_path).map_err(io_err(&tok_path))?;
    let mut reader = TokenReader {
        bytes: &tok_bytes,
        pos: 0,
        path: &tok_path,
    };
    let (ts, is) = (m.n_stamps * m.nx, N_INPUT_STAMPS * m.nx);
    let mut samples = Vec::with_capacity(m.instances.len());
    for (k, rec) in m.instances.iter().enumerate() {
        let equation = reader.seq()?;
        let skeleton = reader.seq()?;
        samples.push(Sample {
            index: rec.index,
            instance: rec.instance.clone(),
            values: traj[k * ts..(k + 1) * ts].to_vec(),
            inputs: inputs[k * is..(k + 1) * is].to_vec(),
            equation,
            skeleton,
        });
    }
    if reader.pos != tok_bytes.len() {
        return Err(IoError::Format(format!(
            "{}: trailing bytes after offset {}",
            tok_path.display(),
            reader.pos
        )));
    }
    let data = Dataset {
        spec: m.spec.clone(),
        samples,
        report: m.report.clone(),
    };
    Ok((data, m))
}
