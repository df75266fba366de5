use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{ModelSpec, Network};
use super::params::{ParameterSet, Tensor};
use super::shape::Shape2D;
use super::NetError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SERM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON sidecar stored next to the tensor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_spec: ModelSpec,
    pub input: Shape2D,
    pub seed: u64,
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// `SERM`, version, tensor count, then per tensor: name length, UTF-8 name, rank, dims and
/// f32 values, all little-endian.
pub fn encode_checkpoint(params: &ParameterSet<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.param_count() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for d in &t.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in &t.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl Reader<'_> {
    fn err(&self, reason: impl Into<String>) -> NetError {
        NetError::Checkpoint {
            path: self.path.to_string(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8], NetError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.err(format!("truncated at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &str) -> Result<Vec<Tensor<f32>>, NetError> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| r.err("tensor name is not UTF-8"))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .ok_or_else(|| r.err("shape overflow"))?;
        let raw = r.take(
            count
                .checked_mul(4)
                .ok_or_else(|| r.err("shape overflow"))?,
        )?;
        let value = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(Tensor { name, shape, value });
    }
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(tensors)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> NetError {
    NetError::Checkpoint {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Writes the tensor file at `path` and its sidecar at `path` + `.json`.
pub fn save_checkpoint(
    path: &Path,
    net: &Network<f32>,
    extra: serde_json::Value,
) -> Result<(), NetError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, encode_checkpoint(&net.params)).map_err(|e| io_err(path, e))?;
    let meta = CheckpointMeta {
        model_spec: net.spec.clone(),
        input: net.input,
        seed: net.params.rng_seed,
        extra,
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| io_err(&side, e))?;
    std::fs::write(&side, json).map_err(|e| io_err(&side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network<f32>, CheckpointMeta), NetError> {
    let side = sidecar_path(path);
    let meta: CheckpointMeta =
        serde_json::from_str(&std::fs::read_to_string(&side).map_err(|e| io_err(&side, e))?)
            .map_err(|e| io_err(&side, e))?;
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let tensors = decode_checkpoint(&bytes, &path.display().to_string())?;
    let mut net = Network::<f32>::new(meta.model_spec.clone(), meta.input, meta.seed)?;
    let loaded = ParameterSet {
        tensors,
        rng_seed: meta.seed,
    };
    net.params.assign(&loaded).map_err(|e| io_err(path, e))?;
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::<f32>::new(
            ModelSpec::temporal_compact(3, true),
            Shape2D::new(300, 40),
            11,
        )
        .unwrap();
        let path = dir.path().join("m/best.serm");
        save_checkpoint(&path, &net, serde_json::json!({"classes": ["a", "b", "c"]})).unwrap();
        let (back, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(back.params, net.params);
        assert_eq!(meta.extra["classes"][2], "c");
    }

    #[test]
    fn corruption_is_detected() {
        let net = Network::<f32>::new(
            ModelSpec::temporal_compact(2, false),
            Shape2D::new(300, 40),
            1,
        )
        .unwrap();
        let bytes = encode_checkpoint(&net.params);
        assert_eq!(&bytes[..4], b"SERM");
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1], "x").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra, "x").is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(decode_checkpoint(&magic, "x").is_err());
    }
}
