//! Self-describing checkpoint container.
//!
//! ```text
//! b"MIXSUMCK"            magic
//! u32 LE                 format version
//! u64 LE                 header length
//! header                 JSON: config, dtype, byte order, tensor table,
//!                        optional optimizer hyperparameters and progress
//! f64 LE × n             parameter values in tensor-table order
//! f64 LE × 2n            optimizer first then second moments (if present)
//! u32 LE                 CRC-32 of every preceding byte
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::training::OptimizerState;

const MAGIC: &[u8; 8] = b"MIXSUMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub step: u64,
    pub examples_consumed: u64,
    pub stream_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState>,
    pub progress: Option<TrainProgress>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    dtype: String,
    byte_order: String,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerHeader>,
    progress: Option<TrainProgress>,
}

fn push_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    buf.reserve(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = &self.params;
        let header = Header {
            config: params.config().clone(),
            dtype: "f64".into(),
            byte_order: "little-endian".into(),
            tensors: params
                .layout()
                .specs()
                .iter()
                .map(|s| TensorEntry {
                    name: s.name.clone(),
                    rows: s.rows,
                    cols: s.cols,
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                step: o.step,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
            }),
            progress: self.progress,
        };
        let header = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(24 + header.len() + params.len() * 24);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        push_f64s(&mut buf, params.values());
        if let Some(opt) = &self.optimizer {
            if opt.m.len() != params.len() || opt.v.len() != params.len() {
                return Err(Error::Checkpoint("optimizer moments do not match parameters".into()));
            }
            push_f64s(&mut buf, &opt.m);
            push_f64s(&mut buf, &opt.v);
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(bad("checksum mismatch"));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&body[20..header_end])?;
        if header.dtype != "f64" || header.byte_order != "little-endian" {
            return Err(bad("unsupported dtype or byte order"));
        }
        let mut params = ModelParams::zeros(&header.config)?;
        let specs = params.layout().specs();
        if specs.len() != header.tensors.len()
            || specs
                .iter()
                .zip(&header.tensors)
                .any(|(s, t)| s.name != t.name || s.rows != t.rows || s.cols != t.cols)
        {
            return Err(bad("tensor table does not match the configuration"));
        }
        let n = params.len();
        let blocks = if header.optimizer.is_some() { 3 } else { 1 };
        let data = &body[header_end..];
        if data.len() != blocks * n * 8 {
            return Err(bad("tensor data length does not match the configuration"));
        }
        let mut floats = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for v in params.values_mut() {
            *v = floats.next().expect("length checked");
        }
        let optimizer = header.optimizer.map(|h| {
            let m: Vec<f64> = floats.by_ref().take(n).collect();
            let v: Vec<f64> = floats.by_ref().take(n).collect();
            OptimizerState {
                step: h.step,
                m,
                v,
                beta1: h.beta1,
                beta2: h.beta2,
                eps: h.eps,
            }
        });
        Ok(Self {
            params,
            optimizer,
            progress: header.progress,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn tiny() -> ModelConfig {
        ModelConfig {
            num_layers: 1,
            num_heads: 2,
            d_model: 4,
            d_ff: 8,
            dropout_p: 0.0,
            vocab_size: 10,
            max_positions: 8,
        }
    }

    #[test]
    fn roundtrip_with_optimizer() {
        let params = init_params(&tiny(), 1).unwrap();
        let mut opt = OptimizerState::new(params.len());
        opt.step = 7;
        opt.m[3] = 0.25;
        opt.v[5] = 1.5;
        let ck = Checkpoint {
            params,
            optimizer: Some(opt),
            progress: Some(TrainProgress {
                step: 7,
                examples_consumed: 70,
                stream_seed: 3,
            }),
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn corruption_is_detected() {
        let ck = Checkpoint {
            params: init_params(&tiny(), 1).unwrap(),
            optimizer: None,
            progress: None,
        };
        let mut bytes = ck.to_bytes().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(_))));
    }
}
