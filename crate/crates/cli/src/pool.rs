//! Pool config files: a JSON array of models with per-million-token prices.
//!
//! ```json
//! [
//!   {"model_id": "gemini-2.5-flash", "prompt_price_per_million": 0.30, "completion_price_per_million": 2.50},
//!   {"model_id": "gpt-4o", "prompt_price_per_million": 5.0, "completion_price_per_million": 15.0}
//! ]
//! ```
//!
//! Prices are stored per million tokens for readability and converted to
//! per-token internally.

use std::fs;
use std::path::Path;

use costroute_core::cost::{ModelPool, ModelSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct PoolEntry {
    pub model_id: String,
    pub prompt_price_per_million: f64,
    pub completion_price_per_million: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error("cannot read pool config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid pool config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("invalid pool config {path}: {source}")]
    Invalid {
        path: String,
        source: costroute_core::cost::CostError,
    },
}

pub fn load_pool(path: &Path) -> Result<ModelPool, PoolError> {
    let text = fs::read_to_string(path).map_err(|source| PoolError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let entries: Vec<PoolEntry> =
        serde_json::from_str(&text).map_err(|source| PoolError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    let specs = entries
        .into_iter()
        .map(|e| {
            ModelSpec::from_per_million(
                e.model_id,
                e.prompt_price_per_million,
                e.completion_price_per_million,
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| PoolError::Invalid {
            path: path.display().to_string(),
            source,
        })?;
    ModelPool::new(specs).map_err(|source| PoolError::Invalid {
        path: path.display().to_string(),
        source,
    })
}

/// Stable fingerprint over model ids and prices, for health checks and
/// checkpoint-pool sanity. FNV-1a over a canonical rendering.
pub fn pool_fingerprint(pool: &ModelPool) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
    };
    for model in pool.models() {
        feed(model.model_id.as_bytes());
        feed(&model.prompt_price.to_bits().to_le_bytes());
        feed(&model.completion_price.to_bits().to_le_bytes());
        feed(b";");
    }
    format!("{hash:016x}")
}
