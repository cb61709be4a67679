//! Success-gated supervision scores and softmax targets for router training.
//!
//! Each training record carries, per pool model, a binary success flag and
//! the token usage of that model's run. The supervision score is the
//! product of the success flag and the query's normalized cost score, so
//! only correct and cost-effective models receive a positive signal. The
//! training target is a softmax over the score vector.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cost::{cost_scores, operational_cost, CostError, CostScaling, ModelPool, UsageCounts};
use crate::math;

/// Outcome of running one model on one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelOutcome {
    pub success: bool,
    pub usage: UsageCounts,
}

/// One training query: its embedding and the per-model outcomes, ordered
/// like the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query_id: String,
    pub embedding: Vec<f64>,
    pub per_model: Vec<ModelOutcome>,
}

/// Per-model supervision scores and the derived target distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    /// `success * cost_score`, one entry per pool model, each in `[0, 1]`.
    pub scores: Vec<f64>,
    /// Softmax of `scores / temperature`; sums to 1.
    pub target: Vec<f64>,
}

/// What to do with records where every model failed. No positive signal
/// exists for them, so they are dropped by default; a uniform target is
/// available for callers that want to keep the query count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllFailPolicy {
    Drop,
    UniformTarget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    /// Softmax temperature applied to the score vector.
    pub temperature: f64,
    pub all_fail: AllFailPolicy,
    pub scaling: CostScaling,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            temperature: 1.0,
            all_fail: AllFailPolicy::Drop,
            scaling: CostScaling::MeanCost,
        }
    }
}

/// Build the score vector and target distribution for one record.
///
/// Returns [`ScoreError::NoSignal`] for all-failure records under the drop
/// policy so the caller can discard and count them.
pub fn build_scores(
    record: &QueryRecord,
    pool: &ModelPool,
    opts: &ScoreOptions,
) -> Result<ScoreVector, ScoreError> {
    if record.per_model.len() != pool.len() {
        return Err(ScoreError::PoolSizeMismatch {
            query_id: record.query_id.clone(),
            expected: pool.len(),
            got: record.per_model.len(),
        });
    }
    if !(opts.temperature.is_finite() && opts.temperature > 0.0) {
        return Err(ScoreError::InvalidTemperature(opts.temperature));
    }

    if record.per_model.iter().all(|o| !o.success) {
        return match opts.all_fail {
            AllFailPolicy::Drop => Err(ScoreError::NoSignal {
                query_id: record.query_id.clone(),
            }),
            AllFailPolicy::UniformTarget => Ok(ScoreVector {
                scores: vec![0.0; pool.len()],
                target: vec![1.0 / pool.len() as f64; pool.len()],
            }),
        };
    }

    let costs: Vec<f64> = record
        .per_model
        .iter()
        .zip(pool.models())
        .map(|(outcome, model)| operational_cost(&outcome.usage, model))
        .collect();
    let cost_scores = cost_scores(&costs, opts.scaling)?;

    let scores: Vec<f64> = record
        .per_model
        .iter()
        .zip(&cost_scores)
        .map(|(outcome, &s)| if outcome.success { s } else { 0.0 })
        .collect();

    let scaled: Vec<f64> = scores.iter().map(|s| s / opts.temperature).collect();
    let target = math::softmax(&scaled);

    Ok(ScoreVector { scores, target })
}

/// A record paired with its built scores; the unit the trainer consumes.
pub type ScoredRecord = (QueryRecord, ScoreVector);

/// Score a whole batch of records, dropping no-signal records when the drop
/// policy is active. Returns the kept records and the dropped count.
pub fn build_dataset(
    records: Vec<QueryRecord>,
    pool: &ModelPool,
    opts: &ScoreOptions,
) -> Result<(Vec<ScoredRecord>, usize), ScoreError> {
    let mut out = Vec::with_capacity(records.len());
    let mut dropped = 0usize;
    for record in records {
        match build_scores(&record, pool, opts) {
            Ok(scores) => out.push((record, scores)),
            Err(ScoreError::NoSignal { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, dropped))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreError {
    /// Every model failed on this query; there is nothing to learn from it.
    NoSignal {
        query_id: String,
    },
    PoolSizeMismatch {
        query_id: String,
        expected: usize,
        got: usize,
    },
    InvalidTemperature(f64),
    Cost(CostError),
}

impl fmt::Display for ScoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreError::NoSignal { query_id } => {
                write!(f, "no-signal record `{query_id}`: every model failed")
            }
            ScoreError::PoolSizeMismatch {
                query_id,
                expected,
                got,
            } => write!(
                f,
                "record `{query_id}` has {got} model entries but the pool has {expected}"
            ),
            ScoreError::InvalidTemperature(t) => {
                write!(
                    f,
                    "softmax temperature must be positive and finite, got {t}"
                )
            }
            ScoreError::Cost(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ScoreError {}

impl From<CostError> for ScoreError {
    fn from(e: CostError) -> Self {
        ScoreError::Cost(e)
    }
}
