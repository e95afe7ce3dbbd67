//! Client for OpenAI-embeddings-compatible HTTP services.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Embedding, Encoder, EncoderError};
use crate::http::{HttpError, JsonPoster, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEncoderConfig {
    pub endpoint: String,
    pub model: String,
    /// Expected vector length.
    pub dim: usize,
    /// Name of the environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    input: &'a [&'a str],
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<serde_json::Value>,
}

pub struct RemoteEncoder {
    config: RemoteEncoderConfig,
    poster: JsonPoster,
    fingerprint: String,
}

impl RemoteEncoder {
    pub fn new(config: RemoteEncoderConfig) -> Result<Self, EncoderError> {
        let poster = JsonPoster::new(&config.endpoint, config.api_key_env.as_deref(), config.retry)
            .map_err(http_to_encoder)?;
        let mut hasher = Sha256::new();
        hasher.update(b"polyedit-remote-v1\0");
        hasher.update(config.endpoint.as_bytes());
        hasher.update([0]);
        hasher.update(config.model.as_bytes());
        hasher.update((config.dim as u64).to_le_bytes());
        let fingerprint = hex::encode(&hasher.finalize()[..16]);
        Ok(Self {
            config,
            poster,
            fingerprint,
        })
    }

    pub fn config(&self) -> &RemoteEncoderConfig {
        &self.config
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EncoderError::EmptyText);
        }
        let resp: EmbeddingResponse = self
            .poster
            .post(&EmbeddingRequest {
                input: texts,
                model: &self.config.model,
            })
            .map_err(http_to_encoder)?;
        if resp.data.len() != texts.len() {
            return Err(EncoderError::Protocol(format!(
                "asked for {} embeddings, received {}",
                texts.len(),
                resp.data.len()
            )));
        }
        resp.data
            .into_iter()
            .map(|item| self.to_embedding(item.embedding))
            .collect()
    }

    fn to_embedding(&self, raw: Vec<serde_json::Value>) -> Result<Embedding, EncoderError> {
        if raw.len() != self.config.dim {
            return Err(EncoderError::DimensionMismatch {
                expected: self.config.dim,
                actual: raw.len(),
            });
        }
        let values = raw
            .iter()
            .map(|v| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| EncoderError::InvalidRemoteVector(format!("entry {v}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Embedding::normalized(values).map_err(|e| EncoderError::InvalidRemoteVector(e.to_string()))
    }
}

fn http_to_encoder(err: HttpError) -> EncoderError {
    match err {
        HttpError::Timeout { attempts } => EncoderError::Timeout { attempts },
        other => EncoderError::Protocol(other.to_string()),
    }
}

impl Encoder for RemoteEncoder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EncoderError> {
        Ok(self.request(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(64) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}
