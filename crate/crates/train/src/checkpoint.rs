//! Checkpoint directories: `manifest.json` plus one little-endian `f32` blob.

use std::fs;
use std::path::Path;

use affmt_nn::{Adam, Network};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::TrainError;

pub const MANIFEST: &str = "manifest.json";
pub const BLOB: &str = "tensors.bin";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Gan,
    Multitask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: CheckpointKind,
    pub step: u64,
    /// Per-step random streams are derived from this seed and the step.
    pub seed: u64,
    pub fingerprint: String,
    pub config: serde_json::Value,
    /// Update counts of each optimizer, by name.
    pub optimizer_steps: std::collections::BTreeMap<String, u64>,
    pub blob_sha256: String,
    pub tensors: Vec<TensorEntry>,
}

/// Named tensors collected for saving or restored from disk.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct TensorSet {
    pub entries: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl TensorSet {
    pub fn push(&mut self, name: String, shape: &[usize], data: &[f32]) {
        self.entries.push((name, shape.to_vec(), data.to_vec()));
    }

    pub fn get(&self, name: &str) -> Result<&[f32], TrainError> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, _, d)| d.as_slice())
            .ok_or_else(|| TrainError::Checkpoint(format!("tensor {name} missing")))
    }

    pub fn add_network(&mut self, prefix: &str, net: &Network) {
        net.visit_params(&mut |n, p| self.push(format!("{prefix}/param/{n}"), &p.shape, &p.value));
        net.visit_buffers(&mut |n, b| self.push(format!("{prefix}/buffer/{n}"), &[b.len()], b));
    }

    pub fn add_adam(&mut self, prefix: &str, opt: &Adam) {
        for (n, m) in &opt.moments {
            self.push(format!("{prefix}/m/{n}"), &[m.m.len()], &m.m);
            self.push(format!("{prefix}/v/{n}"), &[m.v.len()], &m.v);
        }
    }

    pub fn restore_network(&self, prefix: &str, net: &mut Network) -> Result<(), TrainError> {
        let mut err = None;
        net.visit_params_mut(&mut |n, p| match self.get(&format!("{prefix}/param/{n}")) {
            Ok(d) if d.len() == p.len() => p.value.copy_from_slice(d),
            Ok(_) => err = Some(TrainError::Checkpoint(format!("{prefix}/{n}: wrong size"))),
            Err(e) => err = Some(e),
        });
        net.visit_buffers_mut(&mut |n, b| match self.get(&format!("{prefix}/buffer/{n}")) {
            Ok(d) if d.len() == b.len() => b.copy_from_slice(d),
            Ok(_) => err = Some(TrainError::Checkpoint(format!("{prefix}/{n}: wrong size"))),
            Err(e) => err = Some(e),
        });
        err.map_or(Ok(()), Err)
    }

    pub fn restore_adam(&self, prefix: &str, opt: &mut Adam, step: u64) -> Result<(), TrainError> {
        opt.step = step;
        opt.moments.clear();
        let m_prefix = format!("{prefix}/m/");
        for (name, _, m) in &self.entries {
            if let Some(param) = name.strip_prefix(&m_prefix) {
                let v = self.get(&format!("{prefix}/v/{param}"))?;
                opt.moments.insert(
                    param.to_string(),
                    affmt_nn::optim::Moments { m: m.clone(), v: v.to_vec() },
                );
            }
        }
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct CheckpointMeta {
    pub kind: CheckpointKind,
    pub step: u64,
    pub seed: u64,
    pub fingerprint: String,
    pub config: serde_json::Value,
    pub optimizer_steps: std::collections::BTreeMap<String, u64>,
}

pub fn save(dir: &Path, meta: CheckpointMeta, tensors: &TensorSet) -> Result<(), TrainError> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.entries.len());
    let mut offset = 0;
    for (name, shape, data) in &tensors.entries {
        entries.push(TensorEntry { name: name.clone(), shape: shape.clone(), offset });
        for v in data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += data.len();
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: meta.kind,
        step: meta.step,
        seed: meta.seed,
        fingerprint: meta.fingerprint,
        config: meta.config,
        optimizer_steps: meta.optimizer_steps,
        blob_sha256: sha256_hex(&blob),
        tensors: entries,
    };
    fs::write(dir.join(BLOB), &blob)?;
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, TrainError> {
    let bytes = fs::read(dir.join(MANIFEST))
        .map_err(|e| TrainError::Checkpoint(format!("{}: {e}", dir.join(MANIFEST).display())))?;
    let m: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| TrainError::Checkpoint(format!("corrupt manifest: {e}")))?;
    if m.format_version != FORMAT_VERSION {
        return Err(TrainError::Checkpoint(format!("unsupported format version {}", m.format_version)));
    }
    Ok(m)
}

/// Reads and integrity-checks a checkpoint.
pub fn load(dir: &Path) -> Result<(Manifest, TensorSet), TrainError> {
    let m = read_manifest(dir)?;
    let blob = fs::read(dir.join(BLOB))?;
    if sha256_hex(&blob) != m.blob_sha256 {
        return Err(TrainError::Checkpoint("integrity check failed: tensor blob checksum mismatch".into()));
    }
    if blob.len() % 4 != 0 {
        return Err(TrainError::Checkpoint("tensor blob is not a whole number of f32".into()));
    }
    let floats: Vec<f32> = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let mut set = TensorSet::default();
    for e in &m.tensors {
        let n: usize = e.shape.iter().product();
        let data = floats
            .get(e.offset..e.offset + n)
            .ok_or_else(|| TrainError::Checkpoint(format!("tensor {} out of bounds", e.name)))?;
        set.push(e.name.clone(), &e.shape, data);
    }
    Ok((m, set))
}

/// Refuses a checkpoint written under a different config or seed.
pub fn check_fingerprint(m: &Manifest, expected: &str) -> Result<(), TrainError> {
    if m.fingerprint != expected {
        return Err(TrainError::Checkpoint(format!(
            "checkpoint fingerprint {} does not match config fingerprint {expected}",
            m.fingerprint
        )));
    }
    Ok(())
}
