//! Text embeddings and cosine similarity.
//!
//! The builtin encoder is signed feature hashing over character n-grams:
//!
//! 1. lowercase the text and split it into overlapping character n-grams
//!    (a text shorter than `n` characters is a single gram);
//! 2. hash each gram's UTF-8 bytes with 64-bit FNV-1a (standard offset basis,
//!    no extra seed);
//! 3. the bucket is `hash % dimension`, the sign is `-1` when bit 63 is set;
//! 4. accumulate, then L2-normalize.
//!
//! If signed accumulation cancels to the zero vector for a non-empty text the
//! grams are re-accumulated unsigned, so every non-empty text embeds to a unit
//! vector. The empty text embeds to the zero vector.
//!
//! Remote mode posts `{"texts": [...]}` to an HTTP endpoint and expects
//! `{"embeddings": [[...], ...]}` back in input order.

use std::hash::Hasher;
use std::time::Duration;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::JsonClient;

pub const DEFAULT_DIMENSION: usize = 256;
pub const DEFAULT_NGRAM: usize = 3;
pub const DEFAULT_TIMEOUT_MS: u64 = 5_000;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("encoder unavailable: {0}")]
    Unavailable(String),
}

/// A dense embedding vector. Unit-norm for non-empty text, zero otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    /// Scales `values` to unit length; the zero vector is returned unchanged.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = l2_norm(&values);
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity. Zero vectors score 0 against everything.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EncoderError> {
    cosine_slices(a.as_slice(), b.as_slice())
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, EncoderError> {
    if a.len() != b.len() {
        return Err(EncoderError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EncoderMode {
    Builtin,
    Remote { endpoint: String, timeout_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub dimension: usize,
    pub ngram: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            mode: EncoderMode::Builtin,
            dimension: DEFAULT_DIMENSION,
            ngram: DEFAULT_NGRAM,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.dimension < 16 {
            return Err(EncoderError::InvalidConfig(format!(
                "dimension must be >= 16, got {}",
                self.dimension
            )));
        }
        if self.ngram < 2 {
            return Err(EncoderError::InvalidConfig(format!(
                "n-gram size must be >= 2, got {}",
                self.ngram
            )));
        }
        if let EncoderMode::Remote { endpoint, .. } = &self.mode {
            if endpoint.is_empty() {
                return Err(EncoderError::InvalidConfig("remote endpoint is empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EncodeResponse {
    embeddings: Vec<Vec<f64>>,
}

/// The text encoder used for memorization and retrieval.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    client: Option<JsonClient>,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Encoder {
    pub fn builtin() -> Self {
        Self {
            config: EncoderConfig::default(),
            client: None,
        }
    }

    pub fn new(config: EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        let client = match &config.mode {
            EncoderMode::Builtin => None,
            EncoderMode::Remote {
                endpoint,
                timeout_ms,
            } => Some(
                JsonClient::new(endpoint, Duration::from_millis(*timeout_ms))
                    .map_err(EncoderError::Unavailable)?,
            ),
        };
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn encode(&self, text: &str) -> Result<Embedding, EncoderError> {
        match &self.client {
            None => Ok(hash_embed(text, self.config.dimension, self.config.ngram)),
            Some(_) => {
                let mut out = self.encode_batch(&[text])?;
                Ok(out.remove(0))
            }
        }
    }

    pub fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        let Some(client) = &self.client else {
            return Ok(texts
                .iter()
                .map(|t| hash_embed(t, self.config.dimension, self.config.ngram))
                .collect());
        };
        let response: EncodeResponse = client
            .post(&EncodeRequest { texts })
            .map_err(EncoderError::Unavailable)?;
        if response.embeddings.len() != texts.len() {
            return Err(EncoderError::Unavailable(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                response.embeddings.len()
            )));
        }
        response
            .embeddings
            .into_iter()
            .map(|values| {
                if values.len() != self.config.dimension {
                    return Err(EncoderError::Unavailable(format!(
                        "embedding dimension {} does not match configured {}",
                        values.len(),
                        self.config.dimension
                    )));
                }
                Ok(Embedding::normalized(values))
            })
            .collect()
    }
}

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    hasher.finish()
}

/// Character n-grams of the lowercased text.
pub fn char_ngrams(text: &str, n: usize) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() < n {
        return vec![chars.iter().collect()];
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

/// The builtin signed feature-hashing encoder.
pub fn hash_embed(text: &str, dimension: usize, n: usize) -> Embedding {
    let grams = char_ngrams(text, n);
    if grams.is_empty() {
        return Embedding::zeros(dimension);
    }
    let hashes: Vec<u64> = grams.iter().map(|g| fnv1a64(g.as_bytes())).collect();
    let mut values = vec![0.0; dimension];
    for h in &hashes {
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        values[(h % dimension as u64) as usize] += sign;
    }
    if values.iter().all(|v| *v == 0.0) {
        for h in &hashes {
            values[(h % dimension as u64) as usize] += 1.0;
        }
    }
    Embedding::normalized(values)
}
