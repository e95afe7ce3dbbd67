//! Text embedding: the [`Encoder`] trait, [`Embedding`] vectors and cosine similarity.

mod builtin;
pub mod checkpoint;
mod remote;

pub use builtin::{
    featurize, hash_ngram, Bag, BuiltinEncoder, BuiltinEncoderParams, Forward, DEFAULT_DIM,
    DEFAULT_HASH_SEED, DEFAULT_NGRAM_RANGE, DEFAULT_VOCAB_SIZE,
};
pub use remote::{RemoteEncoder, RemoteEncoderConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("text is empty")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding has zero norm and cannot be normalized")]
    ZeroNorm,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("remote embedding request timed out after {attempts} attempt(s)")]
    Timeout { attempts: usize },
    #[error("remote embedding protocol error: {0}")]
    Protocol(String),
    #[error("remote service returned an invalid vector: {0}")]
    InvalidRemoteVector(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A dense embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
    normalized: bool,
}

impl Embedding {
    /// Wraps raw values; fails on NaN or infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self, EncoderError> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// L2-normalizes `values`.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EncoderError> {
        Self::new(values)?.into_normalized()
    }

    pub fn into_normalized(mut self) -> Result<Self, EncoderError> {
        if self.normalized {
            return Ok(self);
        }
        let norm = l2_norm(&self.values);
        if norm == 0.0 {
            return Err(EncoderError::ZeroNorm);
        }
        if !norm.is_finite() {
            return Err(EncoderError::NonFinite);
        }
        for x in &mut self.values {
            *x /= norm;
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity; for two normalized embeddings this is the plain dot product.
pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64, EncoderError> {
    if u.dim() != v.dim() {
        return Err(EncoderError::DimensionMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    let d = dot(&u.values, &v.values);
    if u.normalized && v.normalized {
        return Ok(d.clamp(-1.0, 1.0));
    }
    let denom = l2_norm(&u.values) * l2_norm(&v.values);
    if denom == 0.0 {
        return Err(EncoderError::ZeroNorm);
    }
    Ok((d / denom).clamp(-1.0, 1.0))
}

/// A text → unit-vector embedding function.
pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;

    /// Stable identifier of the weights or service that produced embeddings.
    fn fingerprint(&self) -> &str;

    fn embed_text(&self, text: &str) -> Result<Embedding, EncoderError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(v: &[f64]) -> Embedding {
        Embedding::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let u = unit(&[0.3, -0.2, 0.9]);
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-9);
        let e1 = unit(&[1.0, 0.0, 0.0]);
        let e2 = unit(&[0.0, 1.0, 0.0]);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        let a = Embedding::new(vec![0.6, 0.8]).unwrap();
        let b = Embedding::new(vec![1.0, 0.0]).unwrap();
        assert!((cosine(&a, &b).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = Embedding::new(vec![1.0, 0.0]).unwrap();
        let b = Embedding::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine(&a, &b),
            Err(EncoderError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Embedding::new(vec![f64::NAN]).is_err());
        assert!(Embedding::normalized(vec![0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(
            u in proptest::collection::vec(-10.0f64..10.0, 8),
            v in proptest::collection::vec(-10.0f64..10.0, 8),
        ) {
            prop_assume!(l2_norm(&u) > 1e-6 && l2_norm(&v) > 1e-6);
            let (u, v) = (Embedding::new(u).unwrap(), Embedding::new(v).unwrap());
            let (a, b) = (cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }
    }
}
