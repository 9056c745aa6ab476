//! Embedding files and training checkpoints.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BeliefAdapter, SusceptibilityHead, TrainConfig, N_BINS};
use crate::error::{Error, Result};

const EMBEDDING_FILE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingHeader {
    dim: usize,
    count: usize,
    hash_algo: String,
    version: u32,
}

/// Text embeddings keyed by SHA-256 of the text.
///
/// On disk: one JSON header line, then `count` records of a 32-byte hash
/// followed by `dim` little-endian `f32` values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<[u8; 32], Vec<f32>>,
}

fn hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, text: &str, v: Vec<f32>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding of length {} in a table of dim {}",
                v.len(),
                self.dim
            )));
        }
        self.entries.insert(hash(text), v);
        Ok(())
    }

    pub fn get(&self, text: &str) -> Option<&[f32]> {
        self.entries.get(&hash(text)).map(Vec::as_slice)
    }

    /// Looks up `text` and widens to `f64`.
    pub fn get_f64(&self, text: &str) -> Result<Vec<f64>> {
        self.get(text)
            .map(|v| v.iter().map(|&x| f64::from(x)).collect())
            .ok_or_else(|| Error::unknown("embedding for text", text))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let header = EmbeddingHeader {
            dim: self.dim,
            count: self.entries.len(),
            hash_algo: "sha256".into(),
            version: EMBEDDING_FILE_VERSION,
        };
        let mut line = serde_json::to_string(&header).expect("header serializes");
        line.push('\n');
        let res = (|| -> std::io::Result<()> {
            w.write_all(line.as_bytes())?;
            for (k, v) in &self.entries {
                w.write_all(k)?;
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        let header: EmbeddingHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::parse(path, "header", e))?;
        if header.version != EMBEDDING_FILE_VERSION || header.hash_algo != "sha256" {
            return Err(Error::parse(
                path,
                "header",
                format!("unsupported version {} / hash {}", header.version, header.hash_algo),
            ));
        }
        let mut table = Self::new(header.dim);
        let mut key = [0u8; 32];
        let mut buf = vec![0u8; 4 * header.dim];
        for i in 0..header.count {
            r.read_exact(&mut key)
                .and_then(|_| r.read_exact(&mut buf))
                .map_err(|e| Error::parse(path, format!("record {}", i + 1), e))?;
            let v = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            table.entries.insert(key, v);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
        if !rest.is_empty() {
            return Err(Error::parse(path, "trailer", format!("{} unexpected bytes", rest.len())));
        }
        Ok(table)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointBody {
    BeliefAdapter(BeliefAdapter),
    SusceptibilityHead(SusceptibilityHead),
}

/// Versioned, self-describing parameter snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// `[rows, cols]` of the weight matrix, checked on load.
    pub shape: [usize; 2],
    pub config: TrainConfig,
    pub body: CheckpointBody,
}

impl Checkpoint {
    pub fn adapter(adapter: &BeliefAdapter, config: &TrainConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            shape: [N_BINS, adapter.d_emb],
            config: *config,
            body: CheckpointBody::BeliefAdapter(adapter.clone()),
        }
    }

    pub fn head(head: &SusceptibilityHead, config: &TrainConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            shape: [2, head.d_emb + head.d_bel],
            config: *config,
            body: CheckpointBody::SusceptibilityHead(head.clone()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, "checkpoint", e))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::parse(
                path,
                "checkpoint",
                format!("version {} (expected {CHECKPOINT_VERSION})", ck.version),
            ));
        }
        let (m, bias, expect_bias) = match &ck.body {
            CheckpointBody::BeliefAdapter(a) => (&a.w, &a.b, N_BINS),
            CheckpointBody::SusceptibilityHead(h) => (&h.u, &h.c, 2),
        };
        let consistent = [m.rows(), m.cols()] == ck.shape
            && m.as_slice().len() == m.rows() * m.cols()
            && bias.len() == expect_bias;
        let dims_ok = match &ck.body {
            CheckpointBody::BeliefAdapter(a) => a.d_emb == m.cols(),
            CheckpointBody::SusceptibilityHead(h) => h.d_emb + h.d_bel == m.cols(),
        };
        if !consistent || !dims_ok {
            return Err(Error::Shape(format!(
                "{}: parameters do not match recorded shape {:?}",
                path.display(),
                ck.shape
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        let mut t = EmbeddingTable::new(3);
        t.insert("a", vec![1.0, 2.0, 3.5]).unwrap();
        t.insert("b", vec![-1.0, 0.0, 1e-3]).unwrap();
        assert!(t.insert("c", vec![1.0]).is_err());
        t.write(&p).unwrap();
        let back = EmbeddingTable::read(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get("a").unwrap(), &[1.0, 2.0, 3.5]);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        assert!(EmbeddingTable::read(&p).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.json");
        let a = BeliefAdapter::new(4, 9);
        let ck = Checkpoint::adapter(&a, &TrainConfig::phase1());
        ck.save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), ck);
        let mut bad = ck.clone();
        bad.version = 99;
        bad.save(&p).unwrap();
        assert!(Checkpoint::load(&p).is_err());
        let mut bad = ck;
        bad.shape = [10, 5];
        bad.save(&p).unwrap();
        assert!(matches!(Checkpoint::load(&p), Err(Error::Shape(_))));
    }
}
