//! Implementations of the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use costroute_core::cost::CostScaling;
use costroute_core::embed::{EmbeddingProvider, HashingEmbedder};
use costroute_core::eval::{
    affinity_matrix, baselines, evaluate, generate_synthetic, EvalReport, ModelArchetype,
    RouterPolicy, SuccessModel, SyntheticPoolSpec, TokenDistribution,
};
use costroute_core::router::{forward_infer_with_gate_mode, InferenceGate};
use costroute_core::scoring::{build_dataset, AllFailPolicy, ScoreOptions};
use costroute_core::train::{train_with_observer, CostTermScaling, TrainConfig};
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint, verify_pool_order};
use crate::cli::{
    AllFailMode, Cli, Command, EmbedderKind, EvaluateArgs, RouteArgs, ScoreArgs, ServeArgs,
    SynthArgs, TrainArgs,
};
use crate::dataset::{load_embeddings, load_records, load_scored, write_records, write_scored};
use crate::pool::{load_pool, pool_fingerprint};
use crate::service::{app, AppState};
use crate::trainlog::write_log_csv;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score(args) => cmd_score(args),
        Command::Train(args) => cmd_train(args),
        Command::Route(args) => cmd_route(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn resolve_seed(given: Option<u64>, default: u64, what: &str) -> u64 {
    match given {
        Some(seed) => seed,
        None => {
            eprintln!("{what} seed not given; using default {default}");
            default
        }
    }
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let pool = load_pool(&args.pool)?;
    let records = load_records(&args.data, pool.len(), args.dim)?;
    let total = records.len();
    if total == 0 {
        eprintln!("warning: {} contains no records", args.data.display());
        write_scored(&args.out, &[])?;
        println!("pool_size={} records=0 kept=0 dropped=0", pool.len());
        return Ok(());
    }

    let opts = ScoreOptions {
        temperature: args.temperature,
        all_fail: match args.all_fail {
            AllFailMode::Drop => AllFailPolicy::Drop,
            AllFailMode::Uniform => AllFailPolicy::UniformTarget,
        },
        scaling: match args.fixed_kappa {
            Some(kappa) => CostScaling::Fixed(kappa),
            None => CostScaling::MeanCost,
        },
    };
    let (dataset, dropped) = build_dataset(records, &pool, &opts)?;
    if dataset.is_empty() {
        bail!(
            "no trainable records: every record in {} was dropped",
            args.data.display()
        );
    }
    write_scored(&args.out, &dataset)?;

    let mut mean_scores = vec![0.0f64; pool.len()];
    for (_, sv) in &dataset {
        for (acc, s) in mean_scores.iter_mut().zip(&sv.scores) {
            *acc += s;
        }
    }
    for acc in &mut mean_scores {
        *acc /= dataset.len() as f64;
    }
    println!(
        "pool_size={} records={} kept={} dropped={}",
        pool.len(),
        total,
        dataset.len(),
        dropped
    );
    for (model, mean) in pool.models().iter().zip(&mean_scores) {
        println!("mean_score[{}]={:.6}", model.model_id, mean);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn ensure_writable(path: &Path) -> Result<()> {
    fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(())
}

fn snapshot_path(base: &Path, step: usize) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".to_string());
    let ext = base
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    base.with_file_name(format!("{stem}.step{step}{ext}"))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let pool = load_pool(&args.pool)?;
    let dataset = load_scored(&args.data, pool.len(), args.dim)?;
    if dataset.is_empty() {
        bail!("no trainable records in {}", args.data.display());
    }
    let seed = resolve_seed(args.seed, 42, "training");
    // Fail on unwritable output paths before the long training run, not
    // after it.
    ensure_writable(&args.checkpoint)?;
    ensure_writable(&args.log)?;
    let config = TrainConfig {
        beta: args.beta,
        lambda_cost: args.lambda,
        learning_rate: args.learning_rate,
        steps: args.steps,
        batch_size: args.batch_size,
        seed,
        hidden_dim: args.hidden_dim,
        prior_pi: args.prior_pi,
        mask_temperature: args.mask_temperature,
        adam_beta1: args.adam_beta1,
        adam_beta2: args.adam_beta2,
        adam_epsilon: args.adam_epsilon,
        weight_decay: args.weight_decay,
        cost_scaling: if args.raw_cost_term {
            CostTermScaling::RawDollars
        } else {
            CostTermScaling::NormalizedMax
        },
    };

    let model_ids: Vec<String> = pool.model_ids().iter().map(|s| s.to_string()).collect();
    let mut snapshot_error = None;
    let (params, log) = train_with_observer(&dataset, &pool, &config, |step, params, _| {
        if let Some(every) = args.checkpoint_every {
            if every > 0 && (step + 1) % every == 0 && snapshot_error.is_none() {
                let path = snapshot_path(&args.checkpoint, step + 1);
                if let Err(e) = save_checkpoint(&path, params, &model_ids) {
                    snapshot_error = Some(e);
                }
            }
        }
    })
    .map_err(|e| anyhow!("training aborted: {e}"))?;
    if let Some(e) = snapshot_error {
        return Err(e.into());
    }

    save_checkpoint(&args.checkpoint, &params, &model_ids)?;
    write_log_csv(&args.log, &log).with_context(|| format!("writing {}", args.log.display()))?;

    if let Some(last) = log.last() {
        println!(
            "final step={} total={:.6} prediction={:.6} compression={:.6} cost={:.6} mean_mask_rate={:.4}",
            last.step,
            last.loss.total,
            last.loss.prediction,
            last.loss.compression,
            last.loss.cost,
            last.mean_mask_rate
        );
    } else {
        println!("steps=0; checkpoint equals the initialization");
    }
    println!(
        "wrote {} and {}",
        args.checkpoint.display(),
        args.log.display()
    );
    Ok(())
}

fn build_embedder(
    kind: EmbedderKind,
    dimension: usize,
    embeddings_file: Option<&Path>,
    normalize: bool,
) -> Result<Box<dyn EmbeddingProvider>> {
    match kind {
        EmbedderKind::Hashing => Ok(Box::new(HashingEmbedder::new(dimension)?)),
        EmbedderKind::Precomputed => {
            let path = embeddings_file
                .ok_or_else(|| anyhow!("--embedder precomputed requires --embeddings-file"))?;
            let provider = load_embeddings(path, normalize)?;
            if provider.dimension() != dimension {
                bail!(
                    "embeddings in {} have dimension {}, the checkpoint expects {}",
                    path.display(),
                    provider.dimension(),
                    dimension
                );
            }
            Ok(Box::new(provider))
        }
    }
}

#[derive(Debug, Serialize)]
struct RouteOutput {
    model_id: String,
    chosen_index: usize,
    probs: Vec<f64>,
    expected_unit_cost: f64,
    mask_rate: f64,
}

fn cmd_route(args: RouteArgs) -> Result<()> {
    let (params, checkpoint_ids) = load_checkpoint(&args.checkpoint)?;
    let pool = load_pool(&args.pool)?;
    verify_pool_order(&checkpoint_ids, &pool)?;

    let embedding: Vec<f64> = match (&args.text, &args.embedding) {
        (None, None) => bail!("provide --text or --embedding"),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        (None, Some(raw)) => {
            serde_json::from_str(raw).context("parsing --embedding as a JSON array of numbers")?
        }
        (Some(text), None) => {
            let provider = build_embedder(
                args.embedder,
                params.input_dim,
                args.embeddings_file.as_deref(),
                args.normalize_embeddings,
            )?;
            provider.embed(text)?
        }
    };

    let gate_mode = match args.hard_gate_threshold {
        Some(threshold) => InferenceGate::Threshold(threshold),
        None => InferenceGate::Expected,
    };
    let decision = forward_infer_with_gate_mode(&params, &embedding, &pool, gate_mode)?;
    let output = RouteOutput {
        model_id: pool.get(decision.chosen).unwrap().model_id.clone(),
        chosen_index: decision.chosen,
        probs: decision.probs,
        expected_unit_cost: decision.expected_unit_cost,
        mask_rate: decision.mask_rate,
    };
    println!("{}", serde_json::to_string(&output)?);
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let (params, checkpoint_ids) = load_checkpoint(&args.checkpoint)?;
    let pool = load_pool(&args.pool)?;
    verify_pool_order(&checkpoint_ids, &pool)?;
    let records = load_records(&args.data, pool.len(), Some(params.input_dim))?;
    if records.is_empty() {
        bail!("no records to evaluate in {}", args.data.display());
    }
    let seed = resolve_seed(args.seed, 42, "evaluation");

    let mut rows = Vec::new();
    for mut policy in baselines(&pool, seed) {
        rows.push(evaluate(policy.as_mut(), &records, &pool)?);
    }
    let mut router_policy = RouterPolicy::new(&params);
    rows.push(evaluate(&mut router_policy, &records, &pool)?);
    let report = EvalReport { rows };

    print!("{}", report.to_table_string());
    if let Some(path) = &args.report_csv {
        fs::write(path, report.to_csv_string())
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.affinity_csv {
        let affinity = affinity_matrix(&params, &records, &pool)?;
        fs::write(path, affinity.to_csv_string(&pool))
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    let (params, checkpoint_ids) = load_checkpoint(&args.checkpoint)?;
    let pool = load_pool(&args.pool)?;
    verify_pool_order(&checkpoint_ids, &pool)?;
    let embedder = build_embedder(
        args.embedder,
        params.input_dim,
        args.embeddings_file.as_deref(),
        args.normalize_embeddings,
    )
    .map(Some)
    .unwrap_or_else(|e| {
        // A text embedder is optional for serving; embedding-only clients
        // are still fully functional.
        eprintln!("warning: no text embedder ({e}); /route accepts only `embedding` bodies");
        None
    });

    let fingerprint = pool_fingerprint(&pool);
    let state = Arc::new(AppState {
        params,
        pool,
        fingerprint,
        embedder,
    });

    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .with_context(|| format!("binding {}", args.bind))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app(state))
            .await
            .context("serving requests")
    })
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let pool = load_pool(&args.pool)?;
    if args.thresholds.len() != pool.len() {
        bail!(
            "--thresholds lists {} values but the pool has {} models",
            args.thresholds.len(),
            pool.len()
        );
    }
    let seed = resolve_seed(args.seed, 42, "generation");
    let spec = SyntheticPoolSpec {
        archetypes: pool
            .models()
            .iter()
            .zip(&args.thresholds)
            .map(|(model, &capability)| ModelArchetype {
                spec: model.clone(),
                capability,
                prompt_tokens: TokenDistribution::around(args.prompt_median, args.prompt_ln_sigma),
                completion_tokens: TokenDistribution::around(
                    args.completion_median,
                    args.completion_ln_sigma,
                ),
            })
            .collect(),
        embedding_dim: args.dim,
        noise_sigma: args.noise_sigma,
        rbf_width: args.rbf_width,
        embedding_gain: args.embedding_gain,
        success_model: match args.logistic_scale {
            Some(scale) => SuccessModel::Logistic { scale },
            None => SuccessModel::Threshold,
        },
    };
    let records = generate_synthetic(&spec, args.n, seed)?;
    let all_fail = records
        .iter()
        .filter(|r| r.per_model.iter().all(|o| !o.success))
        .count();
    write_records(&args.out, &records)?;
    println!(
        "generated {} records ({} all-failure) into {}",
        records.len(),
        all_fail,
        args.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_paths_keep_the_extension() {
        assert_eq!(
            snapshot_path(Path::new("/tmp/router.ckpt.json"), 100),
            Path::new("/tmp/router.ckpt.step100.json")
        );
        assert_eq!(
            snapshot_path(Path::new("router"), 5),
            Path::new("router.step5")
        );
    }
}
