//! Self-describing tensor container used for checkpoints and the dataset
//! cache.
//!
//! Layout: 8 magic bytes, a little-endian `u64` header length, a TOML header,
//! then the raw little-endian `f32` payload of every tensor in index order.
//! The header carries caller metadata plus a tensor index and a SHA-256 of
//! the payload so truncated or corrupted files are detected on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"HGSEPAR1";

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: toml::Table,
    payload_sha256: String,
    tensors: Vec<IndexEntry>,
}

/// Named tensors plus free-form metadata, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub meta: toml::Table,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Archive {
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Removes and returns the named tensor.
    pub fn take(&mut self, name: &str) -> Result<Tensor<f32>> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Archive(format!("missing tensor `{name}`")))?;
        Ok(self.tensors.remove(pos).1)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::with_capacity(self.tensors.iter().map(|(_, t)| t.numel() * 4).sum());
        for (_, t) in &self.tensors {
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            meta: self.meta.clone(),
            payload_sha256: hex_digest(&payload),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| IndexEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let text = toml::to_string(&header).map_err(|e| Error::Archive(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + text.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Archive("bad magic bytes".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if header_len > body.len() {
            return Err(Error::Archive(format!(
                "header length {header_len} exceeds file size"
            )));
        }
        let text = std::str::from_utf8(&body[..header_len])
            .map_err(|e| Error::Archive(format!("header is not utf-8: {e}")))?;
        let header: Header = toml::from_str(text).map_err(|e| Error::Archive(e.to_string()))?;
        let payload = &body[header_len..];
        if hex_digest(payload) != header.payload_sha256 {
            return Err(Error::Archive("payload checksum mismatch".into()));
        }
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let end = offset + n * 4;
            if end > payload.len() {
                return Err(Error::Archive(format!("tensor `{}` is truncated", entry.name)));
            }
            let data = payload[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset = end;
            let t = Tensor::new(entry.shape, data)
                .map_err(|e| Error::Archive(format!("tensor `{}`: {e}", entry.name)))?;
            tensors.push((entry.name, t));
        }
        if offset != payload.len() {
            return Err(Error::Archive(format!(
                "{} trailing payload bytes",
                payload.len() - offset
            )));
        }
        Ok(Archive {
            meta: header.meta,
            tensors,
        })
    }

    /// Writes atomically: the file appears complete or not at all.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let file_name = path
            .file_name()
            .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
        let tmp = dir.join(format!(
            ".{}.tmp{}",
            file_name.to_string_lossy(),
            std::process::id()
        ));
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::io(path, e)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Archive(m) => Error::Archive(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Archive {
        let mut meta = toml::Table::new();
        meta.insert("step".into(), toml::Value::Integer(42));
        Archive {
            meta,
            tensors: vec![
                ("a".into(), Tensor::from_fn([2, 3], |i| i as f32 * 0.1 - 0.2)),
                ("b".into(), Tensor::new([1], vec![f32::MIN_POSITIVE]).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let a = sample();
        a.save(&path).unwrap();
        let b = Archive::load(&path).unwrap();
        assert_eq!(a, b);
        for ((_, x), (_, y)) in a.tensors.iter().zip(&b.tensors) {
            let xb: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes().unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        assert!(matches!(Archive::from_bytes(&bytes), Err(Error::Archive(_))));
        assert!(Archive::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        assert!(Archive::from_bytes(b"nonsense").is_err());
    }

    #[test]
    fn take_removes_entries() {
        let mut a = sample();
        assert_eq!(a.take("b").unwrap().numel(), 1);
        assert!(a.take("b").is_err());
        assert!(a.get("a").is_some());
    }
}
