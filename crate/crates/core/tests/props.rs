//! Property suites for the numeric invariants: cost-score shape, gating,
//! target validity, gate-KL behavior, and inference determinism.

use costroute_core::cost::{
    cost_scores, operational_cost, CostScaling, ModelPool, ModelSpec, UsageCounts,
};
use costroute_core::embed::{EmbeddingProvider, HashingEmbedder};
use costroute_core::router::{forward_infer, mask_kl, MaskDistribution, RouterParams};
use costroute_core::scoring::{build_scores, ModelOutcome, QueryRecord, ScoreError, ScoreOptions};
use costroute_core::train::{batch_loss, TrainConfig};
use proptest::prelude::*;

fn test_pool() -> ModelPool {
    ModelPool::new(vec![
        ModelSpec::from_per_million("flash", 0.30, 2.50).unwrap(),
        ModelSpec::from_per_million("mini", 0.40, 1.60).unwrap(),
        ModelSpec::from_per_million("large", 5.0, 15.0).unwrap(),
    ])
    .unwrap()
}

proptest! {
    #[test]
    fn cost_scores_stay_in_unit_range(
        costs in prop::collection::vec(0.0f64..0.05, 2..6)
    ) {
        let scores = cost_scores(&costs, CostScaling::MeanCost).unwrap();
        prop_assert_eq!(scores.len(), costs.len());
        prop_assert!(scores.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn distinct_costs_pin_both_endpoints(
        mut costs in prop::collection::vec(1e-6f64..0.05, 3..6)
    ) {
        costs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        costs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        prop_assume!(costs.len() >= 2);
        let scores = cost_scores(&costs, CostScaling::MeanCost).unwrap();
        let ones = scores.iter().filter(|&&s| s == 1.0).count();
        let zeros = scores.iter().filter(|&&s| s == 0.0).count();
        prop_assert_eq!(ones, 1);
        prop_assert_eq!(zeros, 1);
        // Sorted ascending by cost: the first is the most cost-effective.
        prop_assert_eq!(scores[0], 1.0);
        prop_assert_eq!(scores[scores.len() - 1], 0.0);
    }

    #[test]
    fn lower_cost_never_scores_lower(
        costs in prop::collection::vec(0.0f64..0.05, 2..6)
    ) {
        let scores = cost_scores(&costs, CostScaling::MeanCost).unwrap();
        for i in 0..costs.len() {
            for j in 0..costs.len() {
                if costs[i] < costs[j] {
                    prop_assert!(
                        scores[i] >= scores[j],
                        "cost {} < {} but score {} < {}",
                        costs[i], costs[j], scores[i], scores[j]
                    );
                }
            }
        }
    }

    #[test]
    fn rescaling_costs_and_kappa_preserves_scores(
        costs in prop::collection::vec(1e-5f64..0.05, 2..6),
        scale in 1e-2f64..1e3
    ) {
        let kappa = 0.01;
        let base = cost_scores(&costs, CostScaling::Fixed(kappa)).unwrap();
        let scaled_costs: Vec<f64> = costs.iter().map(|c| c * scale).collect();
        let scaled = cost_scores(&scaled_costs, CostScaling::Fixed(kappa * scale)).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn operational_cost_is_linear_in_token_counts(
        np_a in 0u64..100_000, nc_a in 0u64..100_000,
        np_b in 0u64..100_000, nc_b in 0u64..100_000,
        k in 1u64..50
    ) {
        let model = ModelSpec::from_per_million("m", 5.0, 15.0).unwrap();
        let a = UsageCounts::new(np_a, nc_a);
        let b = UsageCounts::new(np_b, nc_b);
        let sum = UsageCounts::new(np_a + np_b, nc_a + nc_b);
        let lhs = operational_cost(&sum, &model);
        let rhs = operational_cost(&a, &model) + operational_cost(&b, &model);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));

        let scaled = UsageCounts::new(np_a * k, nc_a * k);
        let lhs2 = operational_cost(&scaled, &model);
        let rhs2 = k as f64 * operational_cost(&a, &model);
        prop_assert!((lhs2 - rhs2).abs() <= 1e-12 * lhs2.abs().max(1.0));
    }

    #[test]
    fn gating_zeroes_failed_models_and_targets_stay_valid(
        successes in prop::collection::vec(any::<bool>(), 3),
        usages in prop::collection::vec((1u64..20_000, 1u64..5_000), 3)
    ) {
        let record = QueryRecord {
            query_id: "p".into(),
            embedding: vec![0.0; 4],
            per_model: successes
                .iter()
                .zip(&usages)
                .map(|(&success, &(p, c))| ModelOutcome {
                    success,
                    usage: UsageCounts::new(p, c),
                })
                .collect(),
        };
        match build_scores(&record, &test_pool(), &ScoreOptions::default()) {
            Ok(sv) => {
                for (t, outcome) in record.per_model.iter().enumerate() {
                    if !outcome.success {
                        prop_assert_eq!(sv.scores[t], 0.0);
                    }
                    prop_assert!((0.0..=1.0).contains(&sv.scores[t]));
                }
                let sum: f64 = sv.target.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(sv.target.iter().all(|&t| t >= 0.0));
            }
            Err(ScoreError::NoSignal { .. }) => {
                prop_assert!(successes.iter().all(|&s| !s));
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn hashing_embedder_honors_its_dimension(
        text in "[a-zA-Z0-9 ,.!?]{1,60}",
        dim in 1usize..96
    ) {
        let embedder = HashingEmbedder::new(dim).unwrap();
        let v = embedder.embed(&text).unwrap();
        prop_assert_eq!(v.len(), dim);
        prop_assert!(v.iter().all(|x| x.is_finite()));
        // Pure: same input, same output.
        prop_assert_eq!(v, embedder.embed(&text).unwrap());
    }

    #[test]
    fn gate_kl_nonnegative_and_zero_only_at_the_prior(
        rates in prop::collection::vec(0.01f64..0.99, 1..16),
        pi in 0.01f64..0.99
    ) {
        let mask = MaskDistribution { probs: rates.clone() };
        let kl = mask_kl(&mask, pi);
        prop_assert!(kl >= 0.0);
        if rates.iter().any(|&p| (p - pi).abs() > 1e-3) {
            prop_assert!(kl > 0.0);
        }
        let at_prior = MaskDistribution { probs: vec![pi; rates.len()] };
        prop_assert_eq!(mask_kl(&at_prior, pi), 0.0);
    }

    #[test]
    fn adding_a_constant_to_decoder_logits_keeps_the_choice(
        logits in prop::collection::vec(-3.0f64..3.0, 3),
        shift in -5.0f64..5.0
    ) {
        // Ignore near-ties, where float rounding may legitimately reorder.
        let mut sorted = logits.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assume!(sorted.windows(2).all(|w| (w[1] - w[0]).abs() > 1e-9));

        let mut params = RouterParams::init(4, 4, 3, 0.5, 0.5, 1).unwrap();
        params.decoder_bias = logits.clone();
        let base = forward_infer(&params, &[0.1, 0.2, 0.3, 0.4], &test_pool()).unwrap();
        params.decoder_bias = logits.iter().map(|l| l + shift).collect();
        let shifted = forward_infer(&params, &[0.1, 0.2, 0.3, 0.4], &test_pool()).unwrap();
        prop_assert_eq!(base.chosen, shifted.chosen);
    }

    #[test]
    fn inference_is_a_pure_function(
        embedding in prop::collection::vec(-2.0f64..2.0, 6),
        seed in 0u64..1000
    ) {
        let params = RouterParams::init(6, 6, 3, 0.5, 0.5, seed).unwrap();
        let a = forward_infer(&params, &embedding, &test_pool()).unwrap();
        let b = forward_infer(&params, &embedding, &test_pool()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn loss_total_is_the_sum_of_its_parts(
        embedding in prop::collection::vec(-1.0f64..1.0, 5),
        target_raw in prop::collection::vec(0.01f64..1.0, 3),
        seed in 0u64..1000
    ) {
        let params = RouterParams::init(5, 5, 3, 0.5, 0.5, seed).unwrap();
        let total_raw: f64 = target_raw.iter().sum();
        let target: Vec<f64> = target_raw.iter().map(|v| v / total_raw).collect();
        let record = (
            QueryRecord {
                query_id: "p".into(),
                embedding,
                per_model: Vec::new(),
            },
            costroute_core::scoring::ScoreVector {
                scores: target.clone(),
                target,
            },
        );
        let loss = batch_loss(
            &params,
            &[&record],
            &test_pool(),
            &TrainConfig::default(),
            seed,
        )
        .unwrap();
        prop_assert!(
            (loss.total - (loss.prediction + loss.compression + loss.cost)).abs() < 1e-9
        );
        prop_assert!(loss.prediction >= 0.0);
        prop_assert!(loss.compression >= 0.0);
        prop_assert!(loss.cost >= 0.0);
    }
}
