//! Versioned binary container for trained models (network checkpoints, PCA
//! models).
//!
//! Layout: 8-byte magic `FLPREC01`, little-endian u64 JSON header length,
//! JSON header, then a flat little-endian f32 payload. The header records a
//! `kind`, free-form `meta`, and a tensor index (name, shape, element offset
//! and count into the payload). Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FLPREC01";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<i64>,
    /// Offset into the payload, in f32 elements.
    pub offset: u64,
    /// Element count (product of shape).
    pub len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// In-memory view of a container file.
#[derive(Debug, Clone)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    tensors: Vec<(TensorEntry, Vec<f32>)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, shape: Vec<i64>, data: Vec<f32>) {
        let expected: i64 = shape.iter().product();
        assert_eq!(expected as usize, data.len(), "tensor shape/data mismatch");
        let offset = self
            .tensors
            .iter()
            .map(|(e, _)| e.len)
            .sum::<u64>();
        self.tensors.push((
            TensorEntry {
                name: name.into(),
                shape,
                offset,
                len: data.len() as u64,
            },
            data,
        ));
    }

    pub fn tensor_names(&self) -> Vec<&str> {
        self.tensors.iter().map(|(e, _)| e.name.as_str()).collect()
    }

    pub fn tensor(&self, name: &str) -> Option<(&TensorEntry, &[f32])> {
        self.tensors
            .iter()
            .find(|(e, _)| e.name == name)
            .map(|(e, d)| (e, d.as_slice()))
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&TensorEntry, &[f32])> {
        self.tensors.iter().map(|(e, d)| (e, d.as_slice()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|(e, _)| e.clone()).collect(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        w.write_all(MAGIC)?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for (_, data) in &self.tensors {
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut r = std::io::BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::BadContainer(format!(
                "bad magic {:?}, expected {:?}",
                magic, MAGIC
            )));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let header_len = u64::from_le_bytes(len) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::BadContainer(format!("header parse: {e}")))?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let mut bytes = vec![0u8; entry.len as usize * 4];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((entry, data));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.flaprec");
        let mut c = Container::new("test", serde_json::json!({"epoch": 3}));
        // Include values that would change under any lossy conversion.
        let data = vec![0.1f32, -0.0, f32::MIN_POSITIVE, 1e-30, 3.14159265];
        c.push_tensor("w", vec![5], data.clone());
        c.push_tensor("b", vec![1, 2], vec![f32::MAX, f32::MIN]);
        c.save(&path).unwrap();

        let back = Container::load(&path).unwrap();
        assert_eq!(back.kind, "test");
        assert_eq!(back.meta["epoch"], 3);
        let (entry, w) = back.tensor("w").unwrap();
        assert_eq!(entry.shape, vec![5]);
        for (a, b) in w.iter().zip(&data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(back.tensor("missing").is_none());
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"NOTAMODEL......").unwrap();
        assert!(matches!(
            Container::load(&path),
            Err(Error::BadContainer(_))
        ));
    }
}
