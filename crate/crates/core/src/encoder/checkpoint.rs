//! Binary checkpoint for the built-in encoder.
//!
//! Layout: 8-byte magic `POLYENC\n`, little-endian `u32` header length, UTF-8
//! JSON header, then little-endian `f64` arrays: token table, projection and,
//! when the header says so, the four optimizer moment arrays
//! (token first moment, token second moment, projection first, projection second).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BuiltinEncoderParams, EncoderError};

pub const MAGIC: &[u8; 8] = b"POLYENC\n";
pub const FORMAT_VERSION: u32 = 1;

/// Adam moments plus the position in the training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub epochs_completed: u64,
    pub step: u64,
    pub token_m: Vec<f64>,
    pub token_v: Vec<f64>,
    pub proj_m: Vec<f64>,
    pub proj_v: Vec<f64>,
}

impl OptimizerState {
    pub fn zeros(params: &BuiltinEncoderParams) -> Self {
        Self {
            epochs_completed: 0,
            step: 0,
            token_m: vec![0.0; params.token_table.len()],
            token_v: vec![0.0; params.token_table.len()],
            proj_m: vec![0.0; params.projection.len()],
            proj_v: vec![0.0; params.projection.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: BuiltinEncoderParams,
    pub optimizer: Option<OptimizerState>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    dim: usize,
    vocab_size: usize,
    ngram_range: (usize, usize),
    hash_seed: u64,
    seed: u64,
    fingerprint: String,
    #[serde(default)]
    optimizer: Option<OptimizerHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerHeader {
    epochs_completed: u64,
    step: u64,
}

fn write_f64s(out: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

fn read_f64s(input: &mut impl Read, n: usize) -> Result<Vec<f64>, EncoderError> {
    let mut buf = vec![0u8; n * 8];
    input
        .read_exact(&mut buf)
        .map_err(|e| EncoderError::Checkpoint(format!("truncated weights: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, EncoderError> {
        self.params.validate()?;
        let p = &self.params;
        let header = Header {
            format_version: FORMAT_VERSION,
            dim: p.dim,
            vocab_size: p.vocab_size,
            ngram_range: p.ngram_range,
            hash_seed: p.hash_seed,
            seed: p.seed,
            fingerprint: p.fingerprint(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                epochs_completed: o.epochs_completed,
                step: o.step,
            }),
        };
        let header = serde_json::to_vec(&header)
            .map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        write_f64s(&mut out, &p.token_table)?;
        write_f64s(&mut out, &p.projection)?;
        if let Some(o) = &self.optimizer {
            for arr in [&o.token_m, &o.token_v, &o.proj_m, &o.proj_v] {
                write_f64s(&mut out, arr)?;
            }
        }
        Ok(out)
    }

    pub fn from_reader(mut input: impl Read) -> Result<Self, EncoderError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EncoderError::Checkpoint("bad magic".into()));
        }
        let mut len = [0u8; 4];
        input.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)
            .map_err(|e| EncoderError::Checkpoint(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(EncoderError::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let (dim, vocab) = (header.dim, header.vocab_size);
        let token_table = read_f64s(&mut input, vocab * dim)?;
        let projection = read_f64s(&mut input, dim * dim)?;
        let params = BuiltinEncoderParams {
            dim,
            vocab_size: vocab,
            ngram_range: header.ngram_range,
            hash_seed: header.hash_seed,
            seed: header.seed,
            token_table,
            projection,
        };
        params.validate()?;
        if params.fingerprint() != header.fingerprint {
            return Err(EncoderError::Checkpoint("fingerprint does not match weights".into()));
        }
        let optimizer = match header.optimizer {
            Some(h) => Some(OptimizerState {
                epochs_completed: h.epochs_completed,
                step: h.step,
                token_m: read_f64s(&mut input, vocab * dim)?,
                token_v: read_f64s(&mut input, vocab * dim)?,
                proj_m: read_f64s(&mut input, dim * dim)?,
                proj_v: read_f64s(&mut input, dim * dim)?,
            }),
            None => None,
        };
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(EncoderError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { params, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncoderError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncoderError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }
}
