//! The router network.
//!
//! A query embedding passes through a deterministic feature encoder, a
//! stochastic per-feature binary gate, and an affine decoder that produces
//! a distribution over the model pool:
//!
//! ```text
//! features = tanh(We x + be)
//! rates    = sigmoid(Wm features + bm)        clamped to [1e-6, 1 - 1e-6]
//! gate     = relaxed Bernoulli(rates)          (training)
//!          = rates                              (inference, expected value)
//! latent   = gate . features
//! probs    = softmax(Wd latent + bd)
//! ```
//!
//! Training samples the gate with the concrete (relaxed-Bernoulli)
//! reparameterization so gradients flow through it; inference uses the
//! expected gate and is fully deterministic.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cost::ModelPool;
use crate::math;
use crate::rng::Rng;

/// Gate rates are kept inside `[MASK_RATE_EPSILON, 1 - MASK_RATE_EPSILON]`
/// so every log in the objective stays finite.
pub const MASK_RATE_EPSILON: f64 = 1e-6;

/// Learnable parameters of the router. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub pool_size: usize,
    /// `hidden_dim x input_dim`
    pub encoder_weight: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    /// `hidden_dim x hidden_dim`
    pub mask_weight: Vec<f64>,
    pub mask_bias: Vec<f64>,
    /// `pool_size x hidden_dim`
    pub decoder_weight: Vec<f64>,
    pub decoder_bias: Vec<f64>,
    /// Bernoulli prior rate for the gate, in (0, 1).
    pub prior_pi: f64,
    /// Relaxation temperature for gate sampling, > 0.
    pub temperature: f64,
}

/// Names and shapes of the six parameter tensors, in a fixed order shared
/// by gradients, optimizer state, and checkpoints.
pub const TENSOR_NAMES: [&str; 6] = [
    "encoder_weight",
    "encoder_bias",
    "mask_weight",
    "mask_bias",
    "decoder_weight",
    "decoder_bias",
];

impl RouterParams {
    /// Deterministic initialization: uniform Xavier fan-in/fan-out for the
    /// encoder and mask maps, zeros for the decoder, and a mask bias at the
    /// prior's logit so gating starts at the prior rate.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        pool_size: usize,
        prior_pi: f64,
        temperature: f64,
        seed: u64,
    ) -> Result<Self, RouterError> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(RouterError::ZeroDimension);
        }
        if pool_size < 2 {
            return Err(RouterError::PoolTooSmall(pool_size));
        }
        if !(prior_pi.is_finite() && prior_pi > 0.0 && prior_pi < 1.0) {
            return Err(RouterError::InvalidPrior(prior_pi));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(RouterError::InvalidTemperature(temperature));
        }
        let mut rng = Rng::new(seed);
        let mut xavier = |rows: usize, cols: usize| -> Vec<f64> {
            let limit = math::sqrt(6.0 / (rows + cols) as f64);
            (0..rows * cols).map(|_| rng.range(-limit, limit)).collect()
        };
        let encoder_weight = xavier(hidden_dim, input_dim);
        let mask_weight = xavier(hidden_dim, hidden_dim);
        Ok(RouterParams {
            input_dim,
            hidden_dim,
            pool_size,
            encoder_weight,
            encoder_bias: vec![0.0; hidden_dim],
            mask_weight,
            mask_bias: vec![math::logit(prior_pi); hidden_dim],
            decoder_weight: vec![0.0; pool_size * hidden_dim],
            decoder_bias: vec![0.0; pool_size],
            prior_pi,
            temperature,
        })
    }

    /// Check shapes, finiteness, and hyperparameter ranges; used when
    /// loading checkpoints.
    pub fn validate(&self) -> Result<(), RouterError> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(RouterError::ZeroDimension);
        }
        if self.pool_size < 2 {
            return Err(RouterError::PoolTooSmall(self.pool_size));
        }
        if !(self.prior_pi.is_finite() && self.prior_pi > 0.0 && self.prior_pi < 1.0) {
            return Err(RouterError::InvalidPrior(self.prior_pi));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(RouterError::InvalidTemperature(self.temperature));
        }
        let shapes = [
            self.hidden_dim * self.input_dim,
            self.hidden_dim,
            self.hidden_dim * self.hidden_dim,
            self.hidden_dim,
            self.pool_size * self.hidden_dim,
            self.pool_size,
        ];
        for ((tensor, expected), name) in self.tensors().iter().zip(shapes).zip(TENSOR_NAMES) {
            if tensor.len() != expected {
                return Err(RouterError::BadTensorShape {
                    tensor: name,
                    expected,
                    got: tensor.len(),
                });
            }
            if tensor.iter().any(|v| !v.is_finite()) {
                return Err(RouterError::NonFiniteParam { tensor: name });
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Vec<f64>; 6] {
        [
            &self.encoder_weight,
            &self.encoder_bias,
            &self.mask_weight,
            &self.mask_bias,
            &self.decoder_weight,
            &self.decoder_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.encoder_weight,
            &mut self.encoder_bias,
            &mut self.mask_weight,
            &mut self.mask_bias,
            &mut self.decoder_weight,
            &mut self.decoder_bias,
        ]
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Read one scalar by flat index over the fixed tensor order.
    pub fn flat_get(&self, mut index: usize) -> f64 {
        for tensor in self.tensors() {
            if index < tensor.len() {
                return tensor[index];
            }
            index -= tensor.len();
        }
        panic!("flat index out of range");
    }

    /// Write one scalar by flat index over the fixed tensor order.
    pub fn flat_set(&mut self, mut index: usize, value: f64) {
        for tensor in self.tensors_mut() {
            if index < tensor.len() {
                tensor[index] = value;
                return;
            }
            index -= tensor.len();
        }
        panic!("flat index out of range");
    }
}

/// Per-feature Bernoulli rates of the gate, already clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDistribution {
    pub probs: Vec<f64>,
}

impl MaskDistribution {
    pub fn mean_rate(&self) -> f64 {
        if self.probs.is_empty() {
            return 0.0;
        }
        self.probs.iter().sum::<f64>() / self.probs.len() as f64
    }
}

/// The router's answer for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    /// Distribution over the pool; sums to 1.
    pub probs: Vec<f64>,
    /// Argmax of `probs`; ties go to the lower unit cost, then lower index.
    pub chosen: usize,
    /// `sum_t probs[t] * unit_cost(t)` in USD per token.
    pub expected_unit_cost: f64,
    /// Mean gate rate, a compression diagnostic.
    pub mask_rate: f64,
}

/// Everything the training loop needs from one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    /// tanh encoder output.
    pub features: Vec<f64>,
    /// Sigmoid output before clamping.
    pub rates_raw: Vec<f64>,
    /// Clamped gate rates.
    pub rates: Vec<f64>,
    /// Sampled (training) or expected (inference) gate values.
    pub gate: Vec<f64>,
    /// `gate . features`.
    pub latent: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
}

fn check_embedding(params: &RouterParams, embedding: &[f64]) -> Result<(), RouterError> {
    if embedding.len() != params.input_dim {
        return Err(RouterError::DimensionMismatch {
            expected: params.input_dim,
            got: embedding.len(),
        });
    }
    Ok(())
}

/// Features, raw sigmoid rates, and clamped rates for one embedding.
#[allow(clippy::type_complexity)]
fn encode_parts(
    params: &RouterParams,
    embedding: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), RouterError> {
    check_embedding(params, embedding)?;
    let h = params.hidden_dim;
    let mut pre = vec![0.0; h];
    math::matvec(
        &params.encoder_weight,
        h,
        params.input_dim,
        embedding,
        &mut pre,
    );
    let features: Vec<f64> = pre
        .iter()
        .zip(&params.encoder_bias)
        .map(|(v, b)| math::tanh(v + b))
        .collect();

    let mut logits = vec![0.0; h];
    math::matvec(&params.mask_weight, h, h, &features, &mut logits);
    let rates_raw: Vec<f64> = logits
        .iter()
        .zip(&params.mask_bias)
        .map(|(v, b)| math::sigmoid(v + b))
        .collect();
    let rates: Vec<f64> = rates_raw
        .iter()
        .map(|&p| p.clamp(MASK_RATE_EPSILON, 1.0 - MASK_RATE_EPSILON))
        .collect();
    Ok((features, rates_raw, rates))
}

/// Encoder features and gate-rate distribution for one embedding.
pub fn encode(
    params: &RouterParams,
    embedding: &[f64],
) -> Result<(Vec<f64>, MaskDistribution), RouterError> {
    let (features, _, rates) = encode_parts(params, embedding)?;
    Ok((features, MaskDistribution { probs: rates }))
}

/// Draw one relaxed-Bernoulli (concrete) gate sample:
/// `sigmoid((logit(rate) + logistic noise) / temperature)`, elementwise.
/// Reproducible for a fixed seed.
pub fn sample_mask(mask: &MaskDistribution, temperature: f64, rng_seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(rng_seed);
    sample_mask_with(mask, temperature, &mut rng)
}

pub(crate) fn sample_mask_with(
    mask: &MaskDistribution,
    temperature: f64,
    rng: &mut Rng,
) -> Vec<f64> {
    mask.probs
        .iter()
        .map(|&p| {
            let u = rng.open01();
            let noise = math::ln(u) - math::ln(1.0 - u);
            math::sigmoid((math::logit(p) + noise) / temperature)
        })
        .collect()
}

pub(crate) fn forward_with_gate(
    params: &RouterParams,
    features: &[f64],
    rates_raw: Vec<f64>,
    rates: Vec<f64>,
    gate: Vec<f64>,
) -> ForwardTrace {
    let latent: Vec<f64> = gate.iter().zip(features).map(|(m, f)| m * f).collect();
    let mut logits = vec![0.0; params.pool_size];
    math::matvec(
        &params.decoder_weight,
        params.pool_size,
        params.hidden_dim,
        &latent,
        &mut logits,
    );
    for (l, b) in logits.iter_mut().zip(&params.decoder_bias) {
        *l += b;
    }
    let log_probs = math::log_softmax(&logits);
    let probs: Vec<f64> = log_probs.iter().map(|&lp| math::exp(lp)).collect();
    ForwardTrace {
        features: features.to_vec(),
        rates_raw,
        rates,
        gate,
        latent,
        log_probs,
        probs,
    }
}

pub(crate) fn forward_trace(
    params: &RouterParams,
    embedding: &[f64],
    rng: Option<&mut Rng>,
) -> Result<ForwardTrace, RouterError> {
    let (features, rates_raw, rates) = encode_parts(params, embedding)?;
    let gate = match rng {
        Some(rng) => sample_mask_with(
            &MaskDistribution {
                probs: rates.clone(),
            },
            params.temperature,
            rng,
        ),
        None => rates.clone(),
    };
    Ok(forward_with_gate(params, &features, rates_raw, rates, gate))
}

/// Output of a sampling (training-mode) forward pass.
#[derive(Debug, Clone)]
pub struct TrainForward {
    /// Distribution over the pool under the sampled gate.
    pub probs: Vec<f64>,
    pub mask: MaskDistribution,
    /// The gated latent `gate . features`.
    pub latent: Vec<f64>,
}

/// Training-mode forward pass: one Monte-Carlo gate sample per call.
pub fn forward_train(
    params: &RouterParams,
    embedding: &[f64],
    rng_seed: u64,
) -> Result<TrainForward, RouterError> {
    let mut rng = Rng::new(rng_seed);
    let trace = forward_trace(params, embedding, Some(&mut rng))?;
    Ok(TrainForward {
        probs: trace.probs,
        mask: MaskDistribution { probs: trace.rates },
        latent: trace.latent,
    })
}

/// Forward pass with an externally supplied gate vector. Useful for
/// probing limits (an all-zero gate severs the input entirely, leaving
/// `softmax(decoder_bias)`).
pub fn forward_with_mask(
    params: &RouterParams,
    embedding: &[f64],
    gate: &[f64],
) -> Result<Vec<f64>, RouterError> {
    check_embedding(params, embedding)?;
    if gate.len() != params.hidden_dim {
        return Err(RouterError::DimensionMismatch {
            expected: params.hidden_dim,
            got: gate.len(),
        });
    }
    let (features, rates_raw, rates) = encode_parts(params, embedding)?;
    let trace = forward_with_gate(params, &features, rates_raw, rates, gate.to_vec());
    Ok(trace.probs)
}

/// How the gate is resolved at inference time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InferenceGate {
    /// Use the expected gate (the rates themselves). Deterministic and
    /// keeps calibrated soft gates.
    #[default]
    Expected,
    /// Binarize the gate at the given rate threshold.
    Threshold(f64),
}

/// Deterministic inference: expected gate, argmax choice with a
/// lower-unit-cost tie-break, and the decision's expected unit cost.
pub fn forward_infer(
    params: &RouterParams,
    embedding: &[f64],
    pool: &ModelPool,
) -> Result<RoutingDecision, RouterError> {
    forward_infer_with_gate_mode(params, embedding, pool, InferenceGate::Expected)
}

/// [`forward_infer`] with an explicit gate-resolution mode.
pub fn forward_infer_with_gate_mode(
    params: &RouterParams,
    embedding: &[f64],
    pool: &ModelPool,
    gate_mode: InferenceGate,
) -> Result<RoutingDecision, RouterError> {
    if pool.len() != params.pool_size {
        return Err(RouterError::PoolSizeMismatch {
            params: params.pool_size,
            pool: pool.len(),
        });
    }
    let trace = match gate_mode {
        InferenceGate::Expected => forward_trace(params, embedding, None)?,
        InferenceGate::Threshold(threshold) => {
            let (features, rates_raw, rates) = encode_parts(params, embedding)?;
            let gate: Vec<f64> = rates
                .iter()
                .map(|&p| if p > threshold { 1.0 } else { 0.0 })
                .collect();
            forward_with_gate(params, &features, rates_raw, rates, gate)
        }
    };
    let unit_costs = pool.unit_costs();
    let chosen = argmax_with_cost_tie_break(&trace.probs, &unit_costs);
    let expected_unit_cost = trace
        .probs
        .iter()
        .zip(&unit_costs)
        .map(|(p, c)| p * c)
        .sum();
    let mask_rate = trace.rates.iter().sum::<f64>() / trace.rates.len() as f64;
    Ok(RoutingDecision {
        probs: trace.probs,
        chosen,
        expected_unit_cost,
        mask_rate,
    })
}

/// Argmax over probabilities; exact ties resolve to the lower unit cost,
/// then to the lower index.
pub(crate) fn argmax_with_cost_tie_break(probs: &[f64], unit_costs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..probs.len() {
        if probs[i] > probs[best] || (probs[i] == probs[best] && unit_costs[i] < unit_costs[best]) {
            best = i;
        }
    }
    best
}

/// Closed-form KL divergence between the factorized Bernoulli gate
/// distribution and a Bernoulli(`prior_pi`) prior, in nats:
/// `sum_j p_j ln(p_j / pi) + (1 - p_j) ln((1 - p_j) / (1 - pi))`.
pub fn mask_kl(mask: &MaskDistribution, prior_pi: f64) -> f64 {
    let pi = prior_pi.clamp(MASK_RATE_EPSILON, 1.0 - MASK_RATE_EPSILON);
    mask.probs
        .iter()
        .map(|&p| {
            let p = p.clamp(MASK_RATE_EPSILON, 1.0 - MASK_RATE_EPSILON);
            p * math::ln(p / pi) + (1.0 - p) * math::ln((1.0 - p) / (1.0 - pi))
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum RouterError {
    ZeroDimension,
    PoolTooSmall(usize),
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
    PoolSizeMismatch {
        params: usize,
        pool: usize,
    },
    InvalidPrior(f64),
    InvalidTemperature(f64),
    BadTensorShape {
        tensor: &'static str,
        expected: usize,
        got: usize,
    },
    NonFiniteParam {
        tensor: &'static str,
    },
}

impl fmt::Display for RouterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouterError::ZeroDimension => write!(f, "router dimensions must be at least 1"),
            RouterError::PoolTooSmall(n) => {
                write!(f, "router needs a pool of at least 2 models, got {n}")
            }
            RouterError::DimensionMismatch { expected, got } => {
                write!(
                    f,
                    "embedding dimension {got} does not match router input {expected}"
                )
            }
            RouterError::PoolSizeMismatch { params, pool } => write!(
                f,
                "router was built for {params} models but the pool has {pool}"
            ),
            RouterError::InvalidPrior(p) => {
                write!(f, "gate prior must lie strictly inside (0, 1), got {p}")
            }
            RouterError::InvalidTemperature(t) => {
                write!(f, "gate temperature must be positive and finite, got {t}")
            }
            RouterError::BadTensorShape {
                tensor,
                expected,
                got,
            } => write!(
                f,
                "tensor `{tensor}` has {got} entries, expected {expected}"
            ),
            RouterError::NonFiniteParam { tensor } => {
                write!(f, "tensor `{tensor}` contains non-finite values")
            }
        }
    }
}

impl core::error::Error for RouterError {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::ModelSpec;

    fn sample_pool() -> ModelPool {
        ModelPool::new(vec![
            ModelSpec::from_per_million("gemini-2.5-flash", 0.30, 2.50).unwrap(),
            ModelSpec::from_per_million("gpt-4.1-mini", 0.40, 1.60).unwrap(),
            ModelSpec::from_per_million("gpt-4o", 5.0, 15.0).unwrap(),
        ])
        .unwrap()
    }

    fn zeroed_params(d: usize, h: usize, t: usize) -> RouterParams {
        RouterParams {
            input_dim: d,
            hidden_dim: h,
            pool_size: t,
            encoder_weight: vec![0.0; h * d],
            encoder_bias: vec![0.0; h],
            mask_weight: vec![0.0; h * h],
            mask_bias: vec![0.0; h],
            decoder_weight: vec![0.0; t * h],
            decoder_bias: vec![0.0; t],
            prior_pi: 0.5,
            temperature: 0.5,
        }
    }

    #[test]
    fn zero_params_give_rates_of_exactly_half() {
        let params = zeroed_params(4, 4, 3);
        let (_, mask) = encode(&params, &[0.3, -0.1, 0.7, 0.0]).unwrap();
        assert!(mask.probs.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn rates_respect_the_clamp() {
        let mut params = zeroed_params(2, 3, 2);
        // Bias large enough to saturate the sigmoid past the clamp.
        params.mask_bias = vec![100.0, -100.0, 0.0];
        let (_, mask) = encode(&params, &[1.0, 1.0]).unwrap();
        assert_eq!(mask.probs[0], 1.0 - MASK_RATE_EPSILON);
        assert_eq!(mask.probs[1], MASK_RATE_EPSILON);
        assert_eq!(mask.probs[2], 0.5);
    }

    #[test]
    fn encode_matches_scalar_oracle() {
        // h = 4, d = 2: hand evaluation of tanh(We x + be) and
        // sigmoid(Wm f + bm) with std float intrinsics.
        let mut params = zeroed_params(2, 4, 2);
        params.encoder_weight = vec![
            0.5, -0.25, //
            0.1, 0.2, //
            -0.3, 0.4, //
            0.0, 1.0,
        ];
        params.encoder_bias = vec![0.1, -0.1, 0.0, 0.2];
        params.mask_weight = vec![
            0.2, 0.0, 0.0, 0.0, //
            0.0, -0.5, 0.0, 0.0, //
            0.1, 0.1, 0.1, 0.1, //
            0.0, 0.0, 0.0, 0.3,
        ];
        params.mask_bias = vec![0.05, 0.0, -0.2, 0.6];
        let x = [0.8, -0.4];

        let pre_activation: [f64; 4] = [
            0.5 * 0.8 + (-0.25) * (-0.4) + 0.1,
            0.1 * 0.8 + 0.2 * (-0.4) - 0.1,
            -0.3 * 0.8 + 0.4 * (-0.4) + 0.0,
            0.0 * 0.8 + 1.0 * (-0.4) + 0.2,
        ];
        let f_expected: Vec<f64> = pre_activation.iter().map(|v| v.tanh()).collect();
        let logits = [
            0.2 * f_expected[0] + 0.05,
            -0.5 * f_expected[1],
            0.1 * (f_expected[0] + f_expected[1] + f_expected[2] + f_expected[3]) - 0.2,
            0.3 * f_expected[3] + 0.6,
        ];
        let p_expected: Vec<f64> = logits.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();

        let (features, mask) = encode(&params, &x).unwrap();
        for (a, b) in features.iter().zip(&f_expected) {
            assert!((a - b).abs() < 1e-12, "feature {a} vs {b}");
        }
        for (a, b) in mask.probs.iter().zip(&p_expected) {
            assert!((a - b).abs() < 1e-12, "rate {a} vs {b}");
        }
    }

    #[test]
    fn encode_rejects_dimension_mismatch() {
        let params = zeroed_params(4, 4, 2);
        assert_eq!(
            encode(&params, &[1.0, 2.0]).unwrap_err(),
            RouterError::DimensionMismatch {
                expected: 4,
                got: 2
            }
        );
    }

    #[test]
    fn saturated_rate_samples_near_one() {
        let mask = MaskDistribution {
            probs: vec![1.0 - MASK_RATE_EPSILON; 100],
        };
        let sample = sample_mask(&mask, 0.5, 20240817);
        for &m in &sample {
            assert!(m > 1.0 - 1e-3, "sample {m} not saturated");
        }
    }

    #[test]
    fn sampling_is_reproducible_under_a_seed() {
        let mask = MaskDistribution {
            probs: vec![0.2, 0.5, 0.9],
        };
        let a = sample_mask(&mask, 0.5, 7);
        let b = sample_mask(&mask, 0.5, 7);
        let c = sample_mask(&mask, 0.5, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|&m| m > 0.0 && m < 1.0));
    }

    #[test]
    fn low_temperature_sample_mean_approaches_the_rate() {
        // At tau -> 0 the relaxed sample approaches a Bernoulli draw, so the
        // empirical mean over 100k draws must sit within 0.02 of p = 0.7.
        let mask = MaskDistribution { probs: vec![0.7] };
        let n = 100_000;
        let mut acc = 0.0;
        for i in 0..n {
            acc += sample_mask(&mask, 0.1, 1000 + i as u64)[0];
        }
        let mean = acc / n as f64;
        assert!((mean - 0.7).abs() < 0.02, "mean={mean}");
    }

    #[test]
    fn all_zero_gate_leaves_only_the_decoder_bias() {
        let mut params = RouterParams::init(4, 4, 3, 0.5, 0.5, 99).unwrap();
        params.decoder_bias = vec![0.3, -0.2, 1.1];
        params.decoder_weight = (0..12).map(|i| (i as f64) * 0.1 - 0.5).collect();
        let probs_a = forward_with_mask(&params, &[0.5, -1.0, 0.25, 0.0], &[0.0; 4]).unwrap();
        let probs_b = forward_with_mask(&params, &[-2.0, 0.1, 3.0, 1.0], &[0.0; 4]).unwrap();
        let expected = math::softmax(&params.decoder_bias);
        for (a, e) in probs_a.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_eq!(probs_a, probs_b, "full compression must ignore the query");
    }

    #[test]
    fn train_forward_probs_sum_to_one() {
        let params = RouterParams::init(8, 8, 4, 0.5, 0.5, 3).unwrap();
        let mut rng = Rng::new(17);
        for trial in 0..50 {
            let x: Vec<f64> = (0..8).map(|_| rng.range(-2.0, 2.0)).collect();
            let out = forward_train(&params, &x, trial).unwrap();
            let sum: f64 = out.probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_matches_scalar_oracle_end_to_end() {
        // h = 4, T = 3, fixed gate: independent scalar evaluation of the
        // decoder softmax over the gated latent.
        let mut params = zeroed_params(2, 4, 3);
        params.encoder_weight = vec![0.5, -0.25, 0.1, 0.2, -0.3, 0.4, 0.0, 1.0];
        params.encoder_bias = vec![0.1, -0.1, 0.0, 0.2];
        params.decoder_weight = vec![
            0.3, -0.1, 0.0, 0.2, //
            0.0, 0.4, -0.2, 0.1, //
            -0.3, 0.0, 0.5, -0.1,
        ];
        params.decoder_bias = vec![0.05, -0.05, 0.1];
        let x = [0.8, -0.4];
        let gate = [1.0, 0.0, 0.5, 0.25];

        let pre_activation: [f64; 4] = [
            0.5 * 0.8 + 0.25 * 0.4 + 0.1,
            0.1 * 0.8 - 0.2 * 0.4 - 0.1,
            -0.3 * 0.8 - 0.4 * 0.4,
            -0.4 + 0.2,
        ];
        let f: Vec<f64> = pre_activation.iter().map(|v| v.tanh()).collect();
        let z: Vec<f64> = gate.iter().zip(&f).map(|(g, v)| g * v).collect();
        let logits = [
            0.3 * z[0] - 0.1 * z[1] + 0.2 * z[3] + 0.05,
            0.4 * z[1] - 0.2 * z[2] + 0.1 * z[3] - 0.05,
            -0.3 * z[0] + 0.5 * z[2] - 0.1 * z[3] + 0.1,
        ];
        let zsum: f64 = logits.iter().map(|l| l.exp()).sum();
        let expected: Vec<f64> = logits.iter().map(|l| l.exp() / zsum).collect();

        let probs = forward_with_mask(&params, &x, &gate).unwrap();
        for (a, e) in probs.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn inference_breaks_ties_toward_the_cheaper_model() {
        // Zeroed decoder: identical logits across all three models.
        let params = zeroed_params(4, 4, 3);
        let decision = forward_infer(&params, &[0.1, 0.2, 0.3, 0.4], &sample_pool()).unwrap();
        // gpt-4.1-mini has the lowest unit cost (2.0e-6 USD/token).
        assert_eq!(decision.chosen, 1);
    }

    #[test]
    fn inference_is_deterministic() {
        let params = RouterParams::init(6, 6, 3, 0.5, 0.5, 42).unwrap();
        let x = [0.3, -0.5, 0.8, 0.0, 1.2, -0.9];
        let a = forward_infer(&params, &x, &sample_pool()).unwrap();
        let b = forward_infer(&params, &x, &sample_pool()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expected_unit_cost_under_uniform_probs() {
        // Zeroed decoder gives exactly uniform probs; the expectation is the
        // arithmetic mean of the pool's unit costs:
        // (2.8e-6 + 2.0e-6 + 20e-6) / 3.
        let params = zeroed_params(4, 4, 3);
        let decision = forward_infer(&params, &[1.0, 0.0, -1.0, 0.5], &sample_pool()).unwrap();
        let expected = (2.8e-6 + 2.0e-6 + 20e-6) / 3.0;
        assert!((decision.expected_unit_cost - expected).abs() < 1e-18);
        assert!((decision.expected_unit_cost - 8.2667e-6).abs() < 1e-10);
    }

    #[test]
    fn threshold_gate_binarizes_the_rates() {
        let mut params = RouterParams::init(4, 3, 3, 0.5, 0.5, 21).unwrap();
        // Pin the rates: one above, one at, one below a 0.5 threshold.
        params.mask_weight = vec![0.0; 9];
        params.mask_bias = vec![2.0, 0.0, -2.0];
        let x = [0.4, -0.2, 0.8, 0.1];
        let pool = sample_pool();

        let (features, mask) = encode(&params, &x).unwrap();
        let hard_gate: Vec<f64> = mask
            .probs
            .iter()
            .map(|&p| if p > 0.5 { 1.0 } else { 0.0 })
            .collect();
        let expected = forward_with_mask(&params, &x, &hard_gate).unwrap();
        let decision =
            forward_infer_with_gate_mode(&params, &x, &pool, InferenceGate::Threshold(0.5))
                .unwrap();
        assert_eq!(decision.probs, expected);
        // The diagnostic rate still reports the soft rates.
        let soft_mean = mask.probs.iter().sum::<f64>() / mask.probs.len() as f64;
        assert!((decision.mask_rate - soft_mean).abs() < 1e-15);
        assert_eq!(features.len(), 3);
    }

    #[test]
    fn pool_size_mismatch_is_rejected_at_inference() {
        let params = zeroed_params(4, 4, 4);
        let err = forward_infer(&params, &[0.0; 4], &sample_pool()).unwrap_err();
        assert_eq!(err, RouterError::PoolSizeMismatch { params: 4, pool: 3 });
    }

    #[test]
    fn mask_kl_is_zero_at_the_prior() {
        let mask = MaskDistribution {
            probs: vec![0.3; 8],
        };
        assert_eq!(mask_kl(&mask, 0.3), 0.0);
    }

    #[test]
    fn mask_kl_matches_numeric_oracle() {
        // Independent high-resolution evaluation of the two-term sum for
        // p = 0.8, pi = 0.5 with std intrinsics.
        let oracle = 0.8f64 * (0.8f64 / 0.5).ln() + 0.2f64 * (0.2f64 / 0.5).ln();
        let mask = MaskDistribution { probs: vec![0.8] };
        let got = mask_kl(&mask, 0.5);
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.19274).abs() < 1e-5, "got {got}");
    }

    #[test]
    fn mask_kl_is_nonnegative() {
        let mut rng = Rng::new(31);
        for _ in 0..200 {
            let mask = MaskDistribution {
                probs: (0..8).map(|_| rng.open01()).collect(),
            };
            let pi = rng.open01();
            assert!(mask_kl(&mask, pi) >= 0.0);
        }
    }

    #[test]
    fn compression_limit_with_tiny_prior() {
        // Rates pinned at the clamp floor with pi -> 0: the latent is
        // numerically dead and every query maps to softmax(decoder_bias).
        let mut params = RouterParams::init(6, 6, 3, 0.01, 0.5, 5).unwrap();
        params.mask_weight = vec![0.0; 36];
        params.mask_bias = vec![-100.0; 6];
        params.decoder_bias = vec![0.2, -0.4, 0.6];
        params.decoder_weight = (0..18).map(|i| 0.05 * i as f64).collect();
        let expected = math::softmax(&params.decoder_bias);
        let mut rng = Rng::new(77);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.range(-3.0, 3.0)).collect();
            let d = forward_infer(&params, &x, &sample_pool()).unwrap();
            for (p, e) in d.probs.iter().zip(&expected) {
                assert!((p - e).abs() < 1e-4, "{p} vs {e}");
            }
        }
    }

    #[test]
    fn init_validates_hyperparameters() {
        assert!(RouterParams::init(4, 4, 3, 0.0, 0.5, 1).is_err());
        assert!(RouterParams::init(4, 4, 3, 1.0, 0.5, 1).is_err());
        assert!(RouterParams::init(4, 4, 3, 0.5, 0.0, 1).is_err());
        assert!(RouterParams::init(4, 4, 1, 0.5, 0.5, 1).is_err());
        assert!(RouterParams::init(0, 4, 3, 0.5, 0.5, 1).is_err());
        let p = RouterParams::init(4, 4, 3, 0.5, 0.5, 1).unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn validate_catches_shape_and_nan_corruption() {
        let mut p = RouterParams::init(4, 4, 3, 0.5, 0.5, 1).unwrap();
        p.encoder_bias.push(0.0);
        assert!(matches!(
            p.validate(),
            Err(RouterError::BadTensorShape { .. })
        ));
        let mut q = RouterParams::init(4, 4, 3, 0.5, 0.5, 1).unwrap();
        q.decoder_weight[0] = f64::NAN;
        assert!(matches!(
            q.validate(),
            Err(RouterError::NonFiniteParam { .. })
        ));
    }

    #[test]
    fn flat_access_round_trips() {
        let mut p = RouterParams::init(3, 4, 2, 0.5, 0.5, 9).unwrap();
        let n = p.param_count();
        assert_eq!(n, 4 * 3 + 4 + 16 + 4 + 8 + 2);
        for i in 0..n {
            let v = p.flat_get(i);
            p.flat_set(i, v + 1.0);
            assert_eq!(p.flat_get(i), v + 1.0);
            p.flat_set(i, v);
        }
    }
}
