//! Versioned, self-describing router checkpoints.
//!
//! A checkpoint is a single JSON document carrying the format version, the
//! router dimensions, all six weight tensors in row-major order, the gate
//! prior and temperature, and the pool's model-id list so the serving pool
//! order can be verified at load time.

use std::fs;
use std::path::Path;

use costroute_core::cost::ModelPool;
use costroute_core::router::RouterParams;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub pool_size: usize,
    pub prior_pi: f64,
    pub mask_temperature: f64,
    pub model_ids: Vec<String>,
    pub encoder_weight: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub mask_weight: Vec<f64>,
    pub mask_bias: Vec<f64>,
    pub decoder_weight: Vec<f64>,
    pub decoder_bias: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot read checkpoint {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write checkpoint {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid checkpoint {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("checkpoint {path} has format version {got}, this build reads {expected}")]
    Version {
        path: String,
        expected: u32,
        got: u32,
    },
    #[error("corrupt checkpoint {path}: {source}")]
    Corrupt {
        path: String,
        source: costroute_core::router::RouterError,
    },
    #[error("checkpoint was trained for models {checkpoint:?} but the pool config lists {pool:?}")]
    PoolMismatch {
        checkpoint: Vec<String>,
        pool: Vec<String>,
    },
}

pub fn save_checkpoint(
    path: &Path,
    params: &RouterParams,
    model_ids: &[String],
) -> Result<(), CheckpointError> {
    let doc = Checkpoint {
        format_version: FORMAT_VERSION,
        input_dim: params.input_dim,
        hidden_dim: params.hidden_dim,
        pool_size: params.pool_size,
        prior_pi: params.prior_pi,
        mask_temperature: params.temperature,
        model_ids: model_ids.to_vec(),
        encoder_weight: params.encoder_weight.clone(),
        encoder_bias: params.encoder_bias.clone(),
        mask_weight: params.mask_weight.clone(),
        mask_bias: params.mask_bias.clone(),
        decoder_weight: params.decoder_weight.clone(),
        decoder_bias: params.decoder_bias.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("checkpoint serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| CheckpointError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Load and validate a checkpoint. Returns the parameters and the model-id
/// list it was trained against.
pub fn load_checkpoint(path: &Path) -> Result<(RouterParams, Vec<String>), CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let doc: Checkpoint = serde_json::from_str(&text).map_err(|source| CheckpointError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    if doc.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            path: path.display().to_string(),
            expected: FORMAT_VERSION,
            got: doc.format_version,
        });
    }
    let params = RouterParams {
        input_dim: doc.input_dim,
        hidden_dim: doc.hidden_dim,
        pool_size: doc.pool_size,
        encoder_weight: doc.encoder_weight,
        encoder_bias: doc.encoder_bias,
        mask_weight: doc.mask_weight,
        mask_bias: doc.mask_bias,
        decoder_weight: doc.decoder_weight,
        decoder_bias: doc.decoder_bias,
        prior_pi: doc.prior_pi,
        temperature: doc.mask_temperature,
    };
    params
        .validate()
        .map_err(|source| CheckpointError::Corrupt {
            path: path.display().to_string(),
            source,
        })?;
    if doc.model_ids.len() != params.pool_size {
        return Err(CheckpointError::Corrupt {
            path: path.display().to_string(),
            source: costroute_core::router::RouterError::PoolSizeMismatch {
                params: params.pool_size,
                pool: doc.model_ids.len(),
            },
        });
    }
    Ok((params, doc.model_ids))
}

/// Verify that a pool config matches the model-id list a checkpoint was
/// trained against, naming both lists on mismatch.
pub fn verify_pool_order(
    checkpoint_ids: &[String],
    pool: &ModelPool,
) -> Result<(), CheckpointError> {
    let pool_ids: Vec<String> = pool.model_ids().iter().map(|s| s.to_string()).collect();
    if checkpoint_ids != pool_ids.as_slice() {
        return Err(CheckpointError::PoolMismatch {
            checkpoint: checkpoint_ids.to_vec(),
            pool: pool_ids,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use costroute_core::cost::ModelSpec;

    fn ids() -> Vec<String> {
        vec!["flash".into(), "mini".into(), "large".into()]
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let params = RouterParams::init(6, 4, 3, 0.35, 0.6, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("router.ckpt.json");
        save_checkpoint(&path, &params, &ids()).unwrap();
        let (loaded, model_ids) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(model_ids, ids());

        // Writing the same params twice is byte-identical.
        let path2 = dir.path().join("router2.ckpt.json");
        save_checkpoint(&path2, &params, &ids()).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn version_and_corruption_are_rejected() {
        let params = RouterParams::init(4, 4, 3, 0.5, 0.5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&path, &params, &ids()).unwrap();

        let mut doc: Checkpoint =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        doc.format_version = 99;
        fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Version { got: 99, .. })
        ));

        doc.format_version = FORMAT_VERSION;
        doc.encoder_bias.pop();
        fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Corrupt { .. })
        ));
    }

    #[test]
    fn pool_order_verification_names_both_lists() {
        let pool = ModelPool::new(vec![
            ModelSpec::from_per_million("mini", 0.4, 1.6).unwrap(),
            ModelSpec::from_per_million("flash", 0.3, 2.5).unwrap(),
        ])
        .unwrap();
        let err = verify_pool_order(&["flash".into(), "mini".into()], &pool).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("flash") && message.contains("mini"));
        assert!(matches!(err, CheckpointError::PoolMismatch { .. }));
    }
}
