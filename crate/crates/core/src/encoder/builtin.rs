//! Trainable character n-gram encoder.
//!
//! Pipeline: lowercase, split into alphanumeric tokens, wrap each token in `<`/`>`
//! boundary markers, hash every character n-gram (lengths in `ngram_range`) into
//! `vocab_size` buckets, average the bucket rows of `token_table`, multiply by
//! `projection`, L2-normalize.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::{Embedding, Encoder, EncoderError};

pub const DEFAULT_DIM: usize = 128;
pub const DEFAULT_VOCAB_SIZE: usize = 1 << 16;
pub const DEFAULT_NGRAM_RANGE: (usize, usize) = (3, 5);
pub const DEFAULT_HASH_SEED: u64 = 0x5eed_cafe_f00d_0001;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Seeded FNV-1a over the UTF-8 bytes followed by a splitmix64 finalizer.
pub fn hash_ngram(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Sparse bag of hashed n-grams: sorted bucket ids with their frequency weights
/// (count / total), so the weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub buckets: Vec<u32>,
    pub weights: Vec<f64>,
}

pub fn featurize(
    text: &str,
    ngram_range: (usize, usize),
    vocab_size: usize,
    hash_seed: u64,
) -> Result<Bag, EncoderError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(EncoderError::EmptyText);
    }
    let lower = trimmed.to_lowercase();
    let mut tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        // punctuation-only input still embeds
        tokens.push(lower.as_str());
    }

    let (min_n, max_n) = ngram_range;
    let mut ids: Vec<u32> = Vec::new();
    let mut chars: Vec<char> = Vec::new();
    let mut buf = String::new();
    for token in tokens {
        chars.clear();
        chars.push('<');
        chars.extend(token.chars());
        chars.push('>');
        let mut emitted = false;
        for n in min_n..=max_n {
            if n > chars.len() {
                break;
            }
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                ids.push(bucket_of(&buf, vocab_size, hash_seed));
                emitted = true;
            }
        }
        if !emitted {
            buf.clear();
            buf.extend(chars.iter());
            ids.push(bucket_of(&buf, vocab_size, hash_seed));
        }
    }

    ids.sort_unstable();
    let total = ids.len() as f64;
    let mut buckets = Vec::new();
    let mut weights = Vec::new();
    for id in ids {
        if buckets.last() == Some(&id) {
            *weights.last_mut().unwrap() += 1.0;
        } else {
            buckets.push(id);
            weights.push(1.0);
        }
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(Bag { buckets, weights })
}

fn bucket_of(gram: &str, vocab_size: usize, seed: u64) -> u32 {
    (hash_ngram(gram.as_bytes(), seed) % vocab_size as u64) as u32
}

/// Weights of the built-in encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinEncoderParams {
    pub dim: usize,
    pub vocab_size: usize,
    pub ngram_range: (usize, usize),
    pub hash_seed: u64,
    /// Seed used to initialize the weights; informational after training.
    pub seed: u64,
    /// Row-major `vocab_size x dim`.
    pub token_table: Vec<f64>,
    /// Row-major `dim x dim`; `hidden[i] = sum_j projection[i*dim + j] * pooled[j]`.
    pub projection: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>,
    pub norm: f64,
    pub output: Vec<f64>,
}

impl BuiltinEncoderParams {
    /// Gaussian token rows (std `1/sqrt(dim)`) and an identity projection.
    pub fn init(dim: usize, vocab_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
        let token_table = (0..vocab_size * dim).map(|_| normal.sample(&mut rng)).collect();
        let mut projection = vec![0.0; dim * dim];
        for i in 0..dim {
            projection[i * dim + i] = 1.0;
        }
        Self {
            dim,
            vocab_size,
            ngram_range: DEFAULT_NGRAM_RANGE,
            hash_seed: DEFAULT_HASH_SEED,
            seed,
            token_table,
            projection,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |msg: String| Err(EncoderError::Checkpoint(msg));
        if self.dim == 0 || self.vocab_size == 0 {
            return bad("dim and vocab_size must be positive".into());
        }
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return bad(format!("invalid ngram range ({lo}, {hi})"));
        }
        if self.token_table.len() != self.vocab_size * self.dim {
            return bad(format!(
                "token table has {} values, expected {}",
                self.token_table.len(),
                self.vocab_size * self.dim
            ));
        }
        if self.projection.len() != self.dim * self.dim {
            return bad(format!(
                "projection has {} values, expected {}",
                self.projection.len(),
                self.dim * self.dim
            ));
        }
        if self
            .token_table
            .iter()
            .chain(&self.projection)
            .any(|x| !x.is_finite())
        {
            return Err(EncoderError::NonFinite);
        }
        Ok(())
    }

    pub fn featurize(&self, text: &str) -> Result<Bag, EncoderError> {
        featurize(text, self.ngram_range, self.vocab_size, self.hash_seed)
    }

    pub fn token_row(&self, bucket: u32) -> &[f64] {
        let start = bucket as usize * self.dim;
        &self.token_table[start..start + self.dim]
    }

    pub fn forward(&self, bag: &Bag) -> Result<Forward, EncoderError> {
        let d = self.dim;
        let mut pooled = vec![0.0; d];
        for (&bucket, &w) in bag.buckets.iter().zip(&bag.weights) {
            for (p, t) in pooled.iter_mut().zip(self.token_row(bucket)) {
                *p += w * t;
            }
        }
        let hidden: Vec<f64> = self
            .projection
            .chunks_exact(d)
            .map(|row| super::dot(row, &pooled))
            .collect();
        let norm = super::l2_norm(&hidden);
        if norm == 0.0 {
            return Err(EncoderError::ZeroNorm);
        }
        if !norm.is_finite() {
            return Err(EncoderError::NonFinite);
        }
        let output = hidden.iter().map(|h| h / norm).collect();
        Ok(Forward {
            pooled,
            hidden,
            norm,
            output,
        })
    }

    /// Gradient of the loss w.r.t. `hidden`, given the gradient w.r.t. the
    /// normalized output: `(I - e e^T) g / |h|`.
    pub fn hidden_grad(fwd: &Forward, output_grad: &[f64]) -> Vec<f64> {
        let proj = super::dot(&fwd.output, output_grad);
        fwd.output
            .iter()
            .zip(output_grad)
            .map(|(e, g)| (g - proj * e) / fwd.norm)
            .collect()
    }

    /// Gradient w.r.t. the pooled vector: `P^T dh`.
    pub fn pooled_grad(&self, hidden_grad: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (row, &g) in self.projection.chunks_exact(d).zip(hidden_grad) {
            if g == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(row) {
                *o += g * p;
            }
        }
        out
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, EncoderError> {
        let bag = self.featurize(text)?;
        let fwd = self.forward(&bag)?;
        let mut emb = Embedding::new(fwd.output)?;
        emb.normalized = true;
        Ok(emb)
    }

    /// SHA-256 over the configuration and the little-endian weight bytes.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"polyedit-builtin-v1");
        for v in [
            self.dim as u64,
            self.vocab_size as u64,
            self.ngram_range.0 as u64,
            self.ngram_range.1 as u64,
            self.hash_seed,
        ] {
            hasher.update(v.to_le_bytes());
        }
        for x in self.token_table.iter().chain(&self.projection) {
            hasher.update(x.to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..16])
    }
}

/// Frozen built-in encoder with a cached fingerprint.
#[derive(Debug, Clone)]
pub struct BuiltinEncoder {
    params: BuiltinEncoderParams,
    fingerprint: String,
}

impl BuiltinEncoder {
    pub fn new(params: BuiltinEncoderParams) -> Self {
        let fingerprint = params.fingerprint();
        Self {
            params,
            fingerprint,
        }
    }

    pub fn params(&self) -> &BuiltinEncoderParams {
        &self.params
    }

    pub fn into_params(self) -> BuiltinEncoderParams {
        self.params
    }
}

impl Encoder for BuiltinEncoder {
    fn dim(&self) -> usize {
        self.params.dim
    }

    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EncoderError> {
        self.params.embed(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> BuiltinEncoderParams {
        BuiltinEncoderParams::init(32, 1 << 12, 11)
    }

    #[test]
    fn hash_is_pinned() {
        // frozen so bucket assignment cannot drift across releases
        assert_eq!(hash_ngram(b"<ab", DEFAULT_HASH_SEED), hash_ngram(b"<ab", DEFAULT_HASH_SEED));
        assert_ne!(hash_ngram(b"<ab", 1), hash_ngram(b"<ab", 2));
        let bag = featurize("Ab", (3, 5), 1 << 16, DEFAULT_HASH_SEED).unwrap();
        // "<ab>" -> "<ab", "ab>", "<ab>"
        assert_eq!(bag.weights.iter().sum::<f64>(), 1.0);
        assert_eq!(bag.buckets.len(), 3);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(params().embed("   "), Err(EncoderError::EmptyText)));
    }

    #[test]
    fn embedding_is_unit_and_deterministic() {
        let p = params();
        let a = p.embed("The capital of Velland is Zorb.").unwrap();
        let b = p.embed("The capital of Velland is Zorb.").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_weights_collapse_every_text() {
        let mut p = params();
        p.token_table.iter_mut().for_each(|x| *x = 1.0);
        let a = p.embed("alpha").unwrap();
        let b = p.embed("something else entirely, in Ελληνικά").unwrap();
        let expected = 1.0 / (p.dim as f64).sqrt();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - expected).abs() < 1e-12);
            assert!((y - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn same_ngram_multiset_embeds_identically() {
        let p = params();
        assert_eq!(
            p.embed("red fox jumps").unwrap(),
            p.embed("jumps, red fox").unwrap()
        );
        assert_eq!(p.embed("Fox").unwrap(), p.embed("fox").unwrap());
    }

    #[test]
    fn fingerprint_tracks_weights() {
        let p = params();
        let mut q = p.clone();
        q.projection[0] += 1e-12;
        assert_ne!(p.fingerprint(), q.fingerprint());
        assert_eq!(p.fingerprint(), params().fingerprint());
    }

    proptest! {
        #[test]
        fn outputs_are_finite_and_unit(text in "\\PC{1,64}") {
            let p = params();
            match p.embed(&text) {
                Ok(e) => {
                    prop_assert!(e.values().iter().all(|x| x.is_finite()));
                    prop_assert!((e.norm() - 1.0).abs() < 1e-6);
                }
                Err(EncoderError::EmptyText) => prop_assert!(text.trim().is_empty()),
                Err(other) => prop_assert!(false, "unexpected {other}"),
            }
        }
    }

    #[test]
    fn adversarial_inputs() {
        let p = params();
        let long = "abcdefghij".repeat(2000);
        for text in [long.as_str(), "x", "東京は日本の首都です", "Kroatia ni राजधानी mixed", "?!"] {
            let e = p.embed(text).unwrap();
            assert!((e.norm() - 1.0).abs() < 1e-6, "{text}");
        }
    }
}
