//! Text embedding models.
//!
//! The filtering step only needs a deterministic map from text to a
//! fixed-dimension vector. The reference implementation hashes whitespace
//! tokens into buckets and L2-normalizes the counts; heavier encoders plug in
//! through the same trait (see the external process adapter in
//! [`crate::backend::external`]).

use std::collections::HashMap;
use std::sync::Mutex;

use thiserror::Error;

use crate::hash::fnv1a64;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("embedding backend failed: {0}")]
    Backend(String),
}

/// A fixed-dimension embedding vector. All components are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps a raw vector, rejecting empty or non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::ZeroDim);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(EmbedError::Backend(format!("non-finite component {bad}")));
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

/// Deterministic text-to-vector model. Implementations must be pure: the
/// same text always maps to the same vector with a fixed dimension.
pub trait EmbeddingModel: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;
    /// Stable identifier recorded in manifests and used as a cache key.
    fn identity(&self) -> String;
}

/// Reference embedder: FNV-1a token hashing into `dim` buckets, L2-normalized
/// counts. Empty (whitespace-only) text maps to the zero vector.
#[derive(Debug, Clone)]
pub struct ReferenceHashingEmbedder {
    dim: usize,
}

impl Default for ReferenceHashingEmbedder {
    fn default() -> Self {
        ReferenceHashingEmbedder { dim: 64 }
    }
}

impl ReferenceHashingEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::ZeroDim);
        }
        Ok(ReferenceHashingEmbedder { dim })
    }
}

impl EmbeddingModel for ReferenceHashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut counts = vec![0.0f64; self.dim];
        for token in text.split_whitespace() {
            let bucket = (fnv1a64(token.as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1.0;
        }
        let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut counts {
                *v /= norm;
            }
        }
        Embedding::new(counts)
    }

    fn identity(&self) -> String {
        format!("hashing-fnv1a-{}", self.dim)
    }
}

/// Memoizing wrapper: embeds each distinct text once. Augmentation runs embed
/// the same class instances for the centroid and for calibration, so this
/// saves real work with expensive backends.
pub struct CachedEmbedder<'a> {
    inner: &'a dyn EmbeddingModel,
    cache: Mutex<HashMap<String, Embedding>>,
    hits: Mutex<u64>,
}

impl<'a> CachedEmbedder<'a> {
    pub fn new(inner: &'a dyn EmbeddingModel) -> Self {
        CachedEmbedder {
            inner,
            cache: Mutex::new(HashMap::new()),
            hits: Mutex::new(0),
        }
    }

    /// Number of embed calls served from cache so far.
    pub fn hits(&self) -> u64 {
        *self.hits.lock().expect("cache lock")
    }
}

impl EmbeddingModel for CachedEmbedder<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(text) {
            *self.hits.lock().expect("hits lock") += 1;
            return Ok(hit.clone());
        }
        let fresh = self.inner.embed(text)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(text.to_string(), fresh.clone());
        Ok(fresh)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}
