//! The router's training objective and loop.
//!
//! The per-batch loss has three terms:
//!
//! ```text
//! prediction  = mean cross-entropy(target, probs under a sampled gate)
//! compression = beta   * mean KL(gate rates || Bernoulli(prior))
//! cost        = lambda * mean sum_t probs[t] * unit_cost[t]
//! ```
//!
//! Unit costs inside the cost term are normalized to `[0, 1]` by the pool's
//! maximum unit cost by default, so the published `lambda` defaults stay
//! meaningful at any absolute price level; raw dollars are available behind
//! [`CostTermScaling::RawDollars`].
//!
//! Gradients are exact reverse-mode derivatives of the full objective under
//! a fixed noise realization: the gate sample is a deterministic function
//! of the step seed, so differentiation flows through the reparameterized
//! sample. Optimization is AdamW with decoupled weight decay.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cost::ModelPool;
use crate::math;
use crate::rng::{derive_seed, Rng};
use crate::router::{
    forward_trace, ForwardTrace, RouterError, RouterParams, MASK_RATE_EPSILON, TENSOR_NAMES,
};
use crate::scoring::ScoredRecord;

const INIT_SALT: u64 = 0x696e_6974;
const SHUFFLE_SALT: u64 = 0x7368_7566;
const NOISE_SALT: u64 = 0x6e6f_6973;

/// How unit costs enter the loss's cost term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostTermScaling {
    /// Divide by the pool's maximum unit cost.
    NormalizedMax,
    /// Use raw USD-per-token values.
    RawDollars,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the compression (KL) term.
    pub beta: f64,
    /// Weight of the expected-unit-cost term.
    pub lambda_cost: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Hidden width of the encoder; defaults to the embedding dimension.
    pub hidden_dim: Option<usize>,
    /// Bernoulli prior rate of the gate.
    pub prior_pi: f64,
    /// Relaxation temperature for gate samples.
    pub mask_temperature: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub cost_scaling: CostTermScaling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.3,
            lambda_cost: 0.2,
            learning_rate: 2e-5,
            steps: 2000,
            batch_size: 32,
            seed: 42,
            hidden_dim: None,
            prior_pi: 0.5,
            mask_temperature: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            weight_decay: 0.0,
            cost_scaling: CostTermScaling::NormalizedMax,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(TrainError::BadConfig("beta must be >= 0"));
        }
        if !(self.lambda_cost.is_finite() && self.lambda_cost >= 0.0) {
            return Err(TrainError::BadConfig("lambda_cost must be >= 0"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig("learning_rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be >= 1"));
        }
        if !(self.adam_beta1 >= 0.0 && self.adam_beta1 < 1.0) {
            return Err(TrainError::BadConfig("adam_beta1 must lie in [0, 1)"));
        }
        if !(self.adam_beta2 >= 0.0 && self.adam_beta2 < 1.0) {
            return Err(TrainError::BadConfig("adam_beta2 must lie in [0, 1)"));
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return Err(TrainError::BadConfig("adam_epsilon must be > 0"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(TrainError::BadConfig("weight_decay must be >= 0"));
        }
        Ok(())
    }
}

/// The three summands of the objective plus their total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean cross-entropy between targets and sampled-gate outputs.
    pub prediction: f64,
    /// `beta` times the mean gate KL.
    pub compression: f64,
    /// `lambda` times the mean expected unit cost of the output.
    pub cost: f64,
}

impl LossBreakdown {
    fn new(prediction: f64, compression: f64, cost: f64) -> Self {
        LossBreakdown {
            total: prediction + compression + cost,
            prediction,
            compression,
            cost,
        }
    }
}

/// Gradients congruent to [`RouterParams`]'s six tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterGrads {
    pub encoder_weight: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub mask_weight: Vec<f64>,
    pub mask_bias: Vec<f64>,
    pub decoder_weight: Vec<f64>,
    pub decoder_bias: Vec<f64>,
}

impl RouterGrads {
    pub fn zeros_like(params: &RouterParams) -> Self {
        RouterGrads {
            encoder_weight: vec![0.0; params.encoder_weight.len()],
            encoder_bias: vec![0.0; params.encoder_bias.len()],
            mask_weight: vec![0.0; params.mask_weight.len()],
            mask_bias: vec![0.0; params.mask_bias.len()],
            decoder_weight: vec![0.0; params.decoder_weight.len()],
            decoder_bias: vec![0.0; params.decoder_bias.len()],
        }
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

    fn scale(&mut self, factor: f64) {
        for tensor in self.tensors_mut() {
            for v in tensor.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// Unit costs as they enter the cost term, per the configured scaling.
pub fn scaled_unit_costs(pool: &ModelPool, scaling: CostTermScaling) -> Vec<f64> {
    let costs = pool.unit_costs();
    match scaling {
        CostTermScaling::RawDollars => costs,
        CostTermScaling::NormalizedMax => {
            let max = pool.max_unit_cost();
            if max > 0.0 {
                costs.into_iter().map(|c| c / max).collect()
            } else {
                vec![0.0; costs.len()]
            }
        }
    }
}

/// Batch loss under a fixed noise realization derived from `rng_seed`.
pub fn batch_loss(
    params: &RouterParams,
    batch: &[&ScoredRecord],
    pool: &ModelPool,
    config: &TrainConfig,
    rng_seed: u64,
) -> Result<LossBreakdown, TrainError> {
    let (loss, _, _) = batch_pass(params, batch, pool, config, rng_seed, false)?;
    Ok(loss)
}

/// Exact reverse-mode gradients of [`batch_loss`] under the same noise
/// realization.
pub fn loss_gradient(
    params: &RouterParams,
    batch: &[&ScoredRecord],
    pool: &ModelPool,
    config: &TrainConfig,
    rng_seed: u64,
) -> Result<RouterGrads, TrainError> {
    let (_, grads, _) = batch_pass(params, batch, pool, config, rng_seed, true)?;
    Ok(grads.expect("gradients requested"))
}

/// Loss, gradients, and the batch's mean gate rate in one pass.
pub fn loss_and_gradient(
    params: &RouterParams,
    batch: &[&ScoredRecord],
    pool: &ModelPool,
    config: &TrainConfig,
    rng_seed: u64,
) -> Result<(LossBreakdown, RouterGrads, f64), TrainError> {
    let (loss, grads, mean_rate) = batch_pass(params, batch, pool, config, rng_seed, true)?;
    Ok((loss, grads.expect("gradients requested"), mean_rate))
}

fn batch_pass(
    params: &RouterParams,
    batch: &[&ScoredRecord],
    pool: &ModelPool,
    config: &TrainConfig,
    rng_seed: u64,
    want_grads: bool,
) -> Result<(LossBreakdown, Option<RouterGrads>, f64), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    config.validate()?;
    if pool.len() != params.pool_size {
        return Err(TrainError::Router(RouterError::PoolSizeMismatch {
            params: params.pool_size,
            pool: pool.len(),
        }));
    }
    let scaled_costs = scaled_unit_costs(pool, config.cost_scaling);
    let prior_logit = math::logit(params.prior_pi);

    let mut rng = Rng::new(rng_seed);
    let mut grads = want_grads.then(|| RouterGrads::zeros_like(params));

    let mut prediction_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut cost_sum = 0.0;
    let mut rate_sum = 0.0;

    // Scratch buffers reused across records.
    let h = params.hidden_dim;
    let t = params.pool_size;
    let mut g_latent = vec![0.0; h];
    let mut g_features_from_mask = vec![0.0; h];

    for (record, scores) in batch.iter().map(|r| (&r.0, &r.1)) {
        if scores.target.len() != t {
            return Err(TrainError::TargetSizeMismatch {
                expected: t,
                got: scores.target.len(),
            });
        }
        let trace =
            forward_trace(params, &record.embedding, Some(&mut rng)).map_err(TrainError::Router)?;

        prediction_sum += cross_entropy(&scores.target, &trace.log_probs);
        kl_sum += kl_to_prior(&trace.rates, params.prior_pi);
        cost_sum += math::dot(&trace.probs, &scaled_costs);
        rate_sum += trace.rates.iter().sum::<f64>() / h as f64;

        if let Some(grads) = grads.as_mut() {
            accumulate_record_grads(
                params,
                record.embedding.as_slice(),
                scores.target.as_slice(),
                &trace,
                &scaled_costs,
                prior_logit,
                config,
                &mut g_latent,
                &mut g_features_from_mask,
                grads,
            );
        }
    }

    let n = batch.len() as f64;
    let loss = LossBreakdown::new(
        prediction_sum / n,
        config.beta * kl_sum / n,
        config.lambda_cost * cost_sum / n,
    );
    if let Some(grads) = grads.as_mut() {
        grads.scale(1.0 / n);
    }
    Ok((loss, grads, rate_sum / batch.len() as f64))
}

fn cross_entropy(target: &[f64], log_probs: &[f64]) -> f64 {
    -math::dot(target, log_probs)
}

fn kl_to_prior(rates: &[f64], prior_pi: f64) -> f64 {
    rates
        .iter()
        .map(|&p| p * math::ln(p / prior_pi) + (1.0 - p) * math::ln((1.0 - p) / (1.0 - prior_pi)))
        .sum()
}

/// Reverse-mode pass for one record; accumulates unscaled gradients.
#[allow(clippy::too_many_arguments)]
fn accumulate_record_grads(
    params: &RouterParams,
    embedding: &[f64],
    target: &[f64],
    trace: &ForwardTrace,
    scaled_costs: &[f64],
    prior_logit: f64,
    config: &TrainConfig,
    g_latent: &mut [f64],
    g_features_from_mask: &mut [f64],
    grads: &mut RouterGrads,
) {
    let h = params.hidden_dim;
    let t = params.pool_size;
    let q = &trace.probs;

    // Decoder logits: cross-entropy plus the cost term through the softmax.
    let expected_cost = math::dot(q, scaled_costs);
    let g_logits: Vec<f64> = (0..t)
        .map(|i| (q[i] - target[i]) + config.lambda_cost * q[i] * (scaled_costs[i] - expected_cost))
        .collect();

    math::outer_acc(&mut grads.decoder_weight, t, h, &g_logits, &trace.latent);
    for (g, v) in grads.decoder_bias.iter_mut().zip(&g_logits) {
        *g += v;
    }
    math::matvec_transpose(&params.decoder_weight, t, h, &g_logits, g_latent);

    // Gate and feature paths out of `latent = gate . features`.
    let mut g_rate_logits = vec![0.0; h];
    let mut g_features = vec![0.0; h];
    for j in 0..h {
        let gate = trace.gate[j];
        let rate = trace.rates[j];
        let g_gate = g_latent[j] * trace.features[j];
        g_features[j] = g_latent[j] * gate;

        // Through the concrete sample: gate = sigmoid((logit(rate) + L)/tau).
        let d_gate_d_rate = gate * (1.0 - gate) / (config.mask_temperature * rate * (1.0 - rate));
        // KL term, folded here with its beta weight.
        let d_kl_d_rate = math::logit(rate) - prior_logit;
        let g_rate = g_gate * d_gate_d_rate + config.beta * d_kl_d_rate;

        // Through the clamp (zero once saturated), then the sigmoid.
        let raw = trace.rates_raw[j];
        let clamped = !(MASK_RATE_EPSILON..=1.0 - MASK_RATE_EPSILON).contains(&raw);
        g_rate_logits[j] = if clamped {
            0.0
        } else {
            g_rate * raw * (1.0 - raw)
        };
    }

    math::outer_acc(
        &mut grads.mask_weight,
        h,
        h,
        &g_rate_logits,
        &trace.features,
    );
    for (g, v) in grads.mask_bias.iter_mut().zip(&g_rate_logits) {
        *g += v;
    }
    math::matvec_transpose(
        &params.mask_weight,
        h,
        h,
        &g_rate_logits,
        g_features_from_mask,
    );
    for j in 0..h {
        g_features[j] += g_features_from_mask[j];
    }

    // Through tanh into the encoder.
    let g_pre: Vec<f64> = (0..h)
        .map(|j| g_features[j] * (1.0 - trace.features[j] * trace.features[j]))
        .collect();
    math::outer_acc(
        &mut grads.encoder_weight,
        h,
        params.input_dim,
        &g_pre,
        embedding,
    );
    for (g, v) in grads.encoder_bias.iter_mut().zip(&g_pre) {
        *g += v;
    }
}

/// AdamW first/second moments and step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first_moment: RouterGrads,
    pub second_moment: RouterGrads,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &RouterParams) -> Self {
        AdamState {
            first_moment: RouterGrads::zeros_like(params),
            second_moment: RouterGrads::zeros_like(params),
            step: 0,
        }
    }
}

/// One AdamW update: decoupled weight decay, exponential-moving-average
/// moments, bias correction, and the adaptive step.
pub fn optimizer_step(
    params: &mut RouterParams,
    grads: &RouterGrads,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    config.validate()?;
    for (name, tensor) in TENSOR_NAMES.iter().zip(grads.tensors()) {
        if let Some(index) = tensor.iter().position(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient {
                tensor: name,
                index,
                value: tensor[index],
            });
        }
    }

    state.step += 1;
    let step = state.step as i32;
    let bias1 = 1.0 - libm::pow(config.adam_beta1, step as f64);
    let bias2 = 1.0 - libm::pow(config.adam_beta2, step as f64);
    let lr = config.learning_rate;

    let param_tensors = params.tensors_mut();
    let grad_tensors = grads.tensors();
    let m_tensors = state.first_moment.tensors_mut();
    let v_tensors = state.second_moment.tensors_mut();

    for (((theta, g), m), v) in param_tensors
        .into_iter()
        .zip(grad_tensors)
        .zip(m_tensors)
        .zip(v_tensors)
    {
        for i in 0..theta.len() {
            // Decoupled decay first, then the adaptive step.
            theta[i] *= 1.0 - lr * config.weight_decay;
            m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
            v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= lr * m_hat / (math::sqrt(v_hat) + config.adam_epsilon);
        }
    }
    Ok(())
}

/// One logged training step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogEntry {
    pub step: usize,
    pub loss: LossBreakdown,
    pub mean_mask_rate: f64,
}

/// Train a fresh router on the scored dataset. Initialization, shuffling,
/// and gate noise all derive from `config.seed`, so two runs with the same
/// inputs are bitwise identical.
pub fn train(
    dataset: &[ScoredRecord],
    pool: &ModelPool,
    config: &TrainConfig,
) -> Result<(RouterParams, Vec<TrainLogEntry>), TrainError> {
    train_with_observer(dataset, pool, config, |_, _, _| {})
}

/// [`train`] with a per-step observer, called after each optimizer update
/// with the step index (0-based), the updated parameters, and the log entry
/// for the step. Used by callers that snapshot checkpoints mid-run.
pub fn train_with_observer(
    dataset: &[ScoredRecord],
    pool: &ModelPool,
    config: &TrainConfig,
    mut observer: impl FnMut(usize, &RouterParams, &TrainLogEntry),
) -> Result<(RouterParams, Vec<TrainLogEntry>), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    config.validate()?;
    let input_dim = dataset[0].0.embedding.len();
    for (record, _) in dataset {
        if record.embedding.len() != input_dim {
            return Err(TrainError::Router(RouterError::DimensionMismatch {
                expected: input_dim,
                got: record.embedding.len(),
            }));
        }
    }
    let hidden_dim = config.hidden_dim.unwrap_or(input_dim);
    let mut params = RouterParams::init(
        input_dim,
        hidden_dim,
        pool.len(),
        config.prior_pi,
        config.mask_temperature,
        derive_seed(config.seed, INIT_SALT),
    )
    .map_err(TrainError::Router)?;
    let mut state = AdamState::new(&params);
    let mut log = Vec::with_capacity(config.steps);

    let batch_size = config.batch_size.min(dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = Rng::new(derive_seed(config.seed, SHUFFLE_SALT));
    let mut cursor = dataset.len(); // force a shuffle on the first step

    for step in 0..config.steps {
        if cursor + batch_size > order.len() {
            shuffle_rng.shuffle(&mut order);
            cursor = 0;
        }
        let batch: Vec<&ScoredRecord> = order[cursor..cursor + batch_size]
            .iter()
            .map(|&i| &dataset[i])
            .collect();
        cursor += batch_size;

        let step_seed = derive_seed(config.seed, NOISE_SALT ^ step as u64);
        let (loss, grads, mean_mask_rate) =
            loss_and_gradient(&params, &batch, pool, config, step_seed)?;
        if !loss.total.is_finite() {
            return Err(TrainError::NonFiniteLoss { step });
        }
        optimizer_step(&mut params, &grads, &mut state, config)?;

        let entry = TrainLogEntry {
            step,
            loss,
            mean_mask_rate,
        };
        observer(step, &params, &entry);
        log.push(entry);
    }

    Ok((params, log))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    EmptyBatch,
    EmptyDataset,
    BadConfig(&'static str),
    TargetSizeMismatch {
        expected: usize,
        got: usize,
    },
    NonFiniteLoss {
        step: usize,
    },
    NonFiniteGradient {
        tensor: &'static str,
        index: usize,
        value: f64,
    },
    Router(RouterError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::EmptyBatch => write!(f, "cannot evaluate the loss on an empty batch"),
            TrainError::EmptyDataset => write!(f, "cannot train on an empty dataset"),
            TrainError::BadConfig(msg) => write!(f, "invalid training config: {msg}"),
            TrainError::TargetSizeMismatch { expected, got } => {
                write!(f, "target has {got} entries but the pool has {expected}")
            }
            TrainError::NonFiniteLoss { step } => {
                write!(f, "loss became non-finite at step {step}")
            }
            TrainError::NonFiniteGradient {
                tensor,
                index,
                value,
            } => write!(
                f,
                "non-finite gradient {value} in `{tensor}` at index {index}; aborting training"
            ),
            TrainError::Router(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<RouterError> for TrainError {
    fn from(e: RouterError) -> Self {
        TrainError::Router(e)
    }
}
