//! Cost-aware routing of queries over a pool of priced candidate models.
//!
//! The crate covers the full routing stack in `no_std + alloc` form:
//!
//! - [`cost`] — per-call operational costs, unit costs, and normalized
//!   cost-effectiveness scores for a model pool;
//! - [`scoring`] — success-gated supervision scores and softmax targets
//!   built from recorded query executions;
//! - [`embed`] — pluggable query-embedding providers (feature hashing and
//!   precomputed lookup);
//! - [`router`] — the router network: deterministic feature encoder, a
//!   stochastic per-feature gate, and a decoder over the pool;
//! - [`train`] — the gated-router training objective (prediction +
//!   compression + expected-cost terms), exact gradients, and an AdamW loop;
//! - [`eval`] — synthetic workload generation, baseline policies, and
//!   cost/accuracy reporting.
//!
//! File formats, the CLI, and the HTTP service live in the companion
//! `costroute` crate. All randomness flows through [`rng::Rng`], so fixed
//! seeds reproduce results bit-for-bit.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod math;

pub mod cost;
pub mod embed;
pub mod eval;
pub mod rng;
pub mod router;
pub mod scoring;
pub mod train;

pub use cost::{cost_scores, operational_cost, CostScaling, ModelPool, ModelSpec, UsageCounts};
pub use router::{
    encode, forward_infer, forward_infer_with_gate_mode, forward_train, mask_kl, sample_mask,
    InferenceGate, MaskDistribution, RouterParams, RoutingDecision,
};
pub use scoring::{build_scores, QueryRecord, ScoreVector};
pub use train::{batch_loss, loss_gradient, optimizer_step, train, LossBreakdown, TrainConfig};
