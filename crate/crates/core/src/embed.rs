//! Query-embedding providers.
//!
//! The router consumes fixed-dimension embeddings and does not care where
//! they come from. Two providers ship here: a dependency-free feature
//! hasher for desk-scale runs and tests, and a lookup table over
//! precomputed vectors for deployments that embed queries with an external
//! encoder.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// A source of query embeddings. Providers are immutable after
/// construction; concurrent `embed` calls are safe.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Deterministic for a fixed provider and input; every entry finite.
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x1000_0000_01b3;

pub(crate) fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut hash = FNV_OFFSET ^ seed;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Signed feature hashing of character n-grams (n = 2, 3) into `dimension`
/// buckets, L2-normalized by default. The text is wrapped in boundary
/// markers so single-character inputs still produce n-grams.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
    normalize: bool,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Result<Self, EmbedError> {
        if dimension == 0 {
            return Err(EmbedError::ZeroDimension);
        }
        Ok(HashingEmbedder {
            dimension,
            normalize: true,
        })
    }

    pub fn with_normalization(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        "hashing"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut chars: Vec<char> = Vec::with_capacity(text.chars().count() + 2);
        chars.push('<');
        chars.extend(text.chars());
        chars.push('>');

        let mut out = vec![0.0f64; self.dimension];
        let mut buf = [0u8; 16];
        for n in [2usize, 3] {
            for window in chars.windows(n) {
                let mut len = 0;
                for &ch in window {
                    len += ch.encode_utf8(&mut buf[len..]).len();
                }
                let hash = fnv1a64(&buf[..len], n as u64);
                let bucket = (hash % self.dimension as u64) as usize;
                let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
                out[bucket] += sign;
            }
        }

        if self.normalize {
            let norm = math::l2_norm(&out);
            if norm > 0.0 {
                for v in &mut out {
                    *v /= norm;
                }
            }
        }
        Ok(out)
    }
}

/// Serves exact stored vectors keyed by query id. Optional L2
/// normalization is applied once at ingest, never at serve time.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbedder {
    dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl PrecomputedEmbedder {
    /// Build from `(query_id, vector)` pairs. Every vector must share one
    /// dimension and contain only finite values.
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self, EmbedError> {
        let mut iter = entries.into_iter();
        let (first_id, first_vec) = iter.next().ok_or(EmbedError::NoEntries)?;
        let dimension = first_vec.len();
        if dimension == 0 {
            return Err(EmbedError::ZeroDimension);
        }
        let mut vectors = BTreeMap::new();
        validate_finite(&first_id, &first_vec)?;
        vectors.insert(first_id, first_vec);
        for (id, vec) in iter {
            if vec.len() != dimension {
                return Err(EmbedError::DimensionMismatch {
                    query_id: id,
                    expected: dimension,
                    got: vec.len(),
                });
            }
            validate_finite(&id, &vec)?;
            vectors.insert(id, vec);
        }
        Ok(PrecomputedEmbedder { dimension, vectors })
    }

    /// L2-normalize every stored vector in place (ingest-time opt-in).
    pub fn with_l2_normalization(mut self) -> Self {
        for vec in self.vectors.values_mut() {
            let norm = math::l2_norm(vec);
            if norm > 0.0 {
                for v in vec.iter_mut() {
                    *v /= norm;
                }
            }
        }
        self
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn validate_finite(id: &str, vec: &[f64]) -> Result<(), EmbedError> {
    if vec.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite {
            query_id: id.to_owned(),
        });
    }
    Ok(())
}

impl EmbeddingProvider for PrecomputedEmbedder {
    fn name(&self) -> &str {
        "precomputed"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::UnknownQueryId(text.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedError {
    EmptyText,
    ZeroDimension,
    NoEntries,
    UnknownQueryId(String),
    DimensionMismatch {
        query_id: String,
        expected: usize,
        got: usize,
    },
    NonFinite {
        query_id: String,
    },
}

impl fmt::Display for EmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedError::EmptyText => write!(f, "cannot embed empty text"),
            EmbedError::ZeroDimension => write!(f, "embedding dimension must be at least 1"),
            EmbedError::NoEntries => write!(f, "precomputed embedding set is empty"),
            EmbedError::UnknownQueryId(id) => {
                write!(f, "no precomputed embedding for query_id `{id}`")
            }
            EmbedError::DimensionMismatch {
                query_id,
                expected,
                got,
            } => write!(
                f,
                "embedding for `{query_id}` has dimension {got}, expected {expected}"
            ),
            EmbedError::NonFinite { query_id } => {
                write!(f, "embedding for `{query_id}` contains non-finite values")
            }
        }
    }
}

impl core::error::Error for EmbedError {}
