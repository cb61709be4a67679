//! Operational costs and cost-effectiveness scores for a pool of priced
//! models.
//!
//! A call's dollar cost is linear in prompt and completion tokens. For
//! supervision we turn per-query costs into bounded scores: an exponential
//! utility `exp(-cost / kappa)` followed by a min-max normalization across
//! the pool, so 1 marks the most cost-effective model for that query and 0
//! the least.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// A candidate model's identity and per-token prices in USD.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model_id: String,
    /// USD per prompt token.
    pub prompt_price: f64,
    /// USD per completion token.
    pub completion_price: f64,
}

impl ModelSpec {
    pub fn new(
        model_id: impl Into<String>,
        prompt_price: f64,
        completion_price: f64,
    ) -> Result<Self, CostError> {
        let spec = ModelSpec {
            model_id: model_id.into(),
            prompt_price,
            completion_price,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Build from prices quoted per million tokens, the form used in pool
    /// config files.
    pub fn from_per_million(
        model_id: impl Into<String>,
        prompt_per_million: f64,
        completion_per_million: f64,
    ) -> Result<Self, CostError> {
        Self::new(
            model_id,
            prompt_per_million / 1_000_000.0,
            completion_per_million / 1_000_000.0,
        )
    }

    /// Query-agnostic cost of a single prompt-plus-completion token pair,
    /// `prompt_price + completion_price`. Used by the training loss, where
    /// completion length is unknown at routing time.
    pub fn unit_cost(&self) -> f64 {
        self.prompt_price + self.completion_price
    }

    fn validate(&self) -> Result<(), CostError> {
        for price in [self.prompt_price, self.completion_price] {
            if !price.is_finite() {
                return Err(CostError::NonFinitePrice {
                    model_id: self.model_id.clone(),
                });
            }
            if price < 0.0 {
                return Err(CostError::NegativePrice {
                    model_id: self.model_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Query-agnostic unit cost of invoking a model; see [`ModelSpec::unit_cost`].
pub fn unit_cost(model: &ModelSpec) -> f64 {
    model.unit_cost()
}

/// An ordered pool of at least two candidate models. The ordering is fixed
/// and indexes every score vector, target, and router output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPool {
    models: Vec<ModelSpec>,
}

impl ModelPool {
    pub fn new(models: Vec<ModelSpec>) -> Result<Self, CostError> {
        if models.len() < 2 {
            return Err(CostError::PoolTooSmall(models.len()));
        }
        for (i, m) in models.iter().enumerate() {
            m.validate()?;
            if models[..i].iter().any(|o| o.model_id == m.model_id) {
                return Err(CostError::DuplicateModelId(m.model_id.clone()));
            }
        }
        Ok(ModelPool { models })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn get(&self, index: usize) -> Option<&ModelSpec> {
        self.models.get(index)
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.model_id.as_str()).collect()
    }

    pub fn unit_costs(&self) -> Vec<f64> {
        self.models.iter().map(ModelSpec::unit_cost).collect()
    }

    pub fn max_unit_cost(&self) -> f64 {
        self.unit_costs().into_iter().fold(0.0, f64::max)
    }

    /// Index of the model with the lowest unit cost; ties go to the lower
    /// index.
    pub fn cheapest_index(&self) -> usize {
        let costs = self.unit_costs();
        let mut best = 0;
        for (i, &c) in costs.iter().enumerate().skip(1) {
            if c < costs[best] {
                best = i;
            }
        }
        best
    }

    /// Index of the model with the highest unit cost; ties go to the lower
    /// index.
    pub fn most_expensive_index(&self) -> usize {
        let costs = self.unit_costs();
        let mut best = 0;
        for (i, &c) in costs.iter().enumerate().skip(1) {
            if c > costs[best] {
                best = i;
            }
        }
        best
    }
}

/// Token counts for one model call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UsageCounts {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl UsageCounts {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        UsageCounts {
            prompt_tokens,
            completion_tokens,
        }
    }
}

/// Dollar cost of one call: `n_p * prompt_price + n_c * completion_price`.
pub fn operational_cost(usage: &UsageCounts, model: &ModelSpec) -> f64 {
    usage.prompt_tokens as f64 * model.prompt_price
        + usage.completion_tokens as f64 * model.completion_price
}

/// Scale applied to costs before the exponential utility.
///
/// Raw per-query costs sit around 1e-3 USD, which makes `exp(-c)` flat.
/// Dividing by the per-query mean cost keeps utilities well spread at any
/// absolute price level while preserving the per-query ordering; a fixed
/// constant is available when cross-query comparability matters more.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CostScaling {
    /// `kappa` = mean of the query's costs across the pool.
    #[default]
    MeanCost,
    /// `kappa` = the given constant (must be positive and finite).
    Fixed(f64),
}

/// Min-max-normalized exponential utilities of per-query costs.
///
/// Computes `u_t = exp(-costs[t] / kappa)` and rescales to `[0, 1]` across
/// the pool. When every cost is equal the min-max denominator vanishes and
/// all models are equally cost-effective, so the result is all ones.
pub fn cost_scores(costs: &[f64], scaling: CostScaling) -> Result<Vec<f64>, CostError> {
    if costs.is_empty() {
        return Err(CostError::EmptyCosts);
    }
    for &c in costs {
        if !c.is_finite() || c < 0.0 {
            return Err(CostError::InvalidCost(c));
        }
    }
    let kappa = match scaling {
        CostScaling::MeanCost => costs.iter().sum::<f64>() / costs.len() as f64,
        CostScaling::Fixed(k) => {
            if !k.is_finite() || k <= 0.0 {
                return Err(CostError::InvalidKappa(k));
            }
            k
        }
    };
    // All-zero costs give kappa = 0 under MeanCost; every model ties.
    if kappa == 0.0 {
        return Ok(vec![1.0; costs.len()]);
    }
    let utilities: Vec<f64> = costs.iter().map(|&c| math::exp(-c / kappa)).collect();
    let min = utilities.iter().copied().fold(f64::INFINITY, f64::min);
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![1.0; costs.len()]);
    }
    Ok(utilities.iter().map(|&u| (u - min) / (max - min)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostError {
    EmptyCosts,
    PoolTooSmall(usize),
    DuplicateModelId(String),
    NegativePrice { model_id: String },
    NonFinitePrice { model_id: String },
    InvalidCost(f64),
    InvalidKappa(f64),
}

impl fmt::Display for CostError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostError::EmptyCosts => write!(f, "malformed record: empty cost vector"),
            CostError::PoolTooSmall(n) => {
                write!(f, "model pool needs at least 2 models, got {n}")
            }
            CostError::DuplicateModelId(id) => write!(f, "duplicate model_id `{id}` in pool"),
            CostError::NegativePrice { model_id } => {
                write!(f, "model `{model_id}` has a negative price")
            }
            CostError::NonFinitePrice { model_id } => {
                write!(f, "model `{model_id}` has a non-finite price")
            }
            CostError::InvalidCost(c) => write!(f, "cost {c} is negative or non-finite"),
            CostError::InvalidKappa(k) => {
                write!(f, "fixed cost scale must be positive and finite, got {k}")
            }
        }
    }
}

impl core::error::Error for CostError {}
