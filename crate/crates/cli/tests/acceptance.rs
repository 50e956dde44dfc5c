//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS/FAIL line with the measured values (run with `-- --nocapture`
//! to see them). Oracles here are written independently of the library
//! path they check: brute-force enumeration for the loss, naive
//! recomputation for the retrieval metrics, and central finite
//! differences for the gradient.

use std::sync::OnceLock;
use std::time::Instant;

use dare_core::budget::{
    anytime_sweep, conditional_exit_probs, embed_dataset, exit_distribution, expected_cost,
    route_and_identify_stream, solve_a_for_budget, stream_exit_table, train_sequential_ensemble,
    ExitPolicy, RoutingStrategy, StreamState,
};
use dare_core::dataset::{generate_synthetic, split_dataset, DatasetSplit, SyntheticConfig};
use dare_core::encoder::{EncoderConfig, EncoderParams};
use dare_core::linalg::Matrix;
use dare_core::retrieval::{cmc_at_k, mean_average_precision, rank_all, MatchFilter, RankedResult};
use dare_core::table::EmbeddingTable;
use dare_core::training::{
    batch_hard_triplet_loss, loss_gradient, lr_schedule, total_loss, train, PkBatch, TrainConfig,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 4] = [0, 1, 2, 3];
const TRAIN_ITERATIONS: u64 = 3000;
const QUERIES_PER_IDENTITY: usize = 4;

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

// ---------------------------------------------------------------------
// Independent oracles.
// ---------------------------------------------------------------------

/// Brute-force batch-hard loss: enumerate every anchor's positive and
/// negative sets explicitly.
fn oracle_batch_hard(embeddings: &Matrix, labels: &[u32]) -> f64 {
    let n = embeddings.rows();
    let dist = |a: usize, b: usize| {
        embeddings
            .row(a)
            .iter()
            .zip(embeddings.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut total = 0.0;
    for anchor in 0..n {
        let mut furthest_pos = f64::NEG_INFINITY;
        let mut nearest_neg = f64::INFINITY;
        for other in 0..n {
            if labels[other] == labels[anchor] {
                furthest_pos = furthest_pos.max(dist(anchor, other));
            } else {
                nearest_neg = nearest_neg.min(dist(anchor, other));
            }
        }
        total += softplus(furthest_pos - nearest_neg);
    }
    total
}

/// Naive retrieval metrics straight from raw distances: sort
/// (distance, index) pairs per query, then count hits and average
/// precision with explicit loops.
fn oracle_metrics(
    queries: &Matrix,
    query_labels: &[u32],
    gallery: &Matrix,
    gallery_labels: &[u32],
    k: usize,
) -> (f64, f64) {
    let mut hits = 0usize;
    let mut ap_sum = 0.0;
    let mut counted = 0usize;
    for q in 0..queries.rows() {
        let mut pairs: Vec<(f64, usize)> = (0..gallery.rows())
            .map(|g| {
                let d = queries
                    .row(q)
                    .iter()
                    .zip(gallery.row(g))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                (d, g)
            })
            .collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let matches = pairs
            .iter()
            .filter(|(_, g)| gallery_labels[*g] == query_labels[q])
            .count();
        if matches == 0 {
            continue;
        }
        counted += 1;
        if pairs
            .iter()
            .take(k)
            .any(|(_, g)| gallery_labels[*g] == query_labels[q])
        {
            hits += 1;
        }
        let mut seen = 0usize;
        let mut ap = 0.0;
        for (rank0, (_, g)) in pairs.iter().enumerate() {
            if gallery_labels[*g] == query_labels[q] {
                seen += 1;
                ap += seen as f64 / (rank0 + 1) as f64;
            }
        }
        ap_sum += ap / matches as f64;
    }
    (hits as f64 / counted as f64, ap_sum / counted as f64)
}

// ---------------------------------------------------------------------
// Shared trained models.
// ---------------------------------------------------------------------

struct TrainedModel {
    queries: EmbeddingTable,
    gallery: EmbeddingTable,
    split: DatasetSplit,
}

fn train_default_model(seed: u64, deep_supervision: bool) -> TrainedModel {
    let data = generate_synthetic(&SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let split = split_dataset(&data, 0.5, QUERIES_PER_IDENTITY, seed).unwrap();
    let config = EncoderConfig::new(data.dim());
    let train_config = TrainConfig {
        seed,
        deep_supervision,
        ..TrainConfig::with_iterations(TRAIN_ITERATIONS)
    };
    let (params, _) = train(&split.train, &config, &train_config).unwrap();
    let queries = embed_dataset(&params, &split.query).unwrap();
    let gallery = embed_dataset(&params, &split.gallery).unwrap();
    TrainedModel {
        queries,
        gallery,
        split,
    }
}

fn default_models() -> &'static Vec<TrainedModel> {
    static MODELS: OnceLock<Vec<TrainedModel>> = OnceLock::new();
    MODELS.get_or_init(|| SEEDS.iter().map(|&s| train_default_model(s, true)).collect())
}

fn rank1_of_block(model: &TrainedModel, block: usize) -> f64 {
    let results = rank_all(
        model.queries.stage(block),
        model.queries.labels(),
        model.queries.cameras(),
        model.gallery.stage(block),
        model.gallery.labels(),
        model.gallery.cameras(),
        MatchFilter::default(),
    )
    .unwrap();
    cmc_at_k(&results, 1).unwrap().value
}

// ---------------------------------------------------------------------
// Criteria.
// ---------------------------------------------------------------------

#[test]
fn c01_gradient_matches_central_finite_differences() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for case in 0..20 {
        let stages = rng.gen_range(2..=4usize);
        let input_dim = rng.gen_range(3..=8usize);
        let config = EncoderConfig {
            num_stages: stages,
            input_dim,
            backbone_widths: (0..stages).map(|_| rng.gen_range(3..=8)).collect(),
            head_hidden_width: rng.gen_range(3..=8),
            embedding_dim: rng.gen_range(2..=6),
        };
        if config.validate().is_err() {
            continue;
        }
        let params = dare_core::encoder::init_params(&config, 2000 + case).unwrap();
        let p = rng.gen_range(2..=3usize);
        let k = rng.gen_range(2..=3usize);
        let mut features = Matrix::zeros(p * k, input_dim);
        for v in features.data_mut() {
            *v = rng.gen_range(-1.5..1.5);
        }
        let labels: Vec<u32> = (0..p)
            .flat_map(|g| std::iter::repeat(g as u32).take(k))
            .collect();
        let batch = PkBatch::new(features, labels, p, k).unwrap();

        let (_, grads) = loss_gradient(&params, &batch, true).unwrap();
        let analytic = grads.flatten();
        let flat = params.flatten();
        let mut numeric = Vec::with_capacity(flat.len());
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += step;
            let mut minus = flat.clone();
            minus[i] -= step;
            let lp = total_loss(
                &EncoderParams::from_flat(&config, &plus).unwrap(),
                &batch,
                true,
            )
            .unwrap();
            let lm = total_loss(
                &EncoderParams::from_flat(&config, &minus).unwrap(),
                &batch,
                true,
            )
            .unwrap();
            numeric.push((lp - lm) / (2.0 * step));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12);
        worst = worst.max(rel);
        assert!(
            rel <= 1e-4,
            "criterion 1: FAIL - config {case} relative gradient error {rel}"
        );
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 30,
        "criterion 1: FAIL - runtime {elapsed:?} exceeds 30 s"
    );
    println!(
        "criterion 1 (gradient vs finite differences): PASS - worst relative error {worst:.2e}, {elapsed:.2?}"
    );
}

#[test]
fn c02_batch_hard_loss_matches_brute_force_enumeration() {
    // Hand case: two identities at {0, 1} and {4, 5} on the line.
    let emb = Matrix::from_vec(4, 1, vec![0.0, 1.0, 4.0, 5.0]);
    let labels = vec![0u32, 0, 1, 1];
    let loss = batch_hard_triplet_loss(&emb, &labels).unwrap();
    let expected = 2.0 * softplus(-3.0) + 2.0 * softplus(-2.0);
    assert!(
        (loss - expected).abs() <= 1e-12 && (loss - 0.35103).abs() < 1e-5,
        "criterion 2: FAIL - hand case loss {loss}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let p = rng.gen_range(2..=4usize);
        let k = rng.gen_range(2..=4usize);
        let dim = rng.gen_range(1..=8usize);
        let mut emb = Matrix::zeros(p * k, dim);
        for v in emb.data_mut() {
            *v = rng.gen_range(-3.0..3.0);
        }
        let labels: Vec<u32> = (0..p)
            .flat_map(|g| std::iter::repeat(g as u32).take(k))
            .collect();
        let fast = batch_hard_triplet_loss(&emb, &labels).unwrap();
        let brute = oracle_batch_hard(&emb, &labels);
        worst = worst.max((fast - brute).abs());
        assert!(
            (fast - brute).abs() <= 1e-12,
            "criterion 2: FAIL - loss {fast} vs oracle {brute}"
        );
    }
    println!("criterion 2 (batch-hard loss vs brute force): PASS - worst gap {worst:.2e}");
}

#[test]
fn c03_exit_policy_algebra() {
    // Distributions normalize across a wide parameter range.
    for i in 0..=1000 {
        let a = i as f64 * 0.05;
        for stages in 1..=6 {
            let p = exit_distribution(a, stages).unwrap();
            let total: f64 = p.iter().sum();
            assert!(
                (total - 1.0).abs() <= 1e-12,
                "criterion 3: FAIL - sum {total} at a {a}"
            );
        }
    }
    // Conditional probabilities rebuild the marginals.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..100 {
        let stages = rng.gen_range(2..8usize);
        let raw: Vec<f64> = (0..stages).map(|_| rng.gen_range(0.01..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.into_iter().map(|v| v / z).collect();
        let q = conditional_exit_probs(&p).unwrap();
        let mut survive = 1.0;
        for s in 0..stages {
            let qs = q[s].unwrap();
            assert!(
                (qs * survive - p[s]).abs() <= 1e-12,
                "criterion 3: FAIL - round trip at stage {s}"
            );
            survive *= 1.0 - qs;
        }
    }
    // Uniform and degenerate closed forms.
    let q = conditional_exit_probs(&exit_distribution(1.0, 4).unwrap()).unwrap();
    let expected = [0.25, 1.0 / 3.0, 0.5, 1.0];
    for (got, want) in q.iter().zip(expected) {
        assert!(
            (got.unwrap() - want).abs() <= 1e-12,
            "criterion 3: FAIL - uniform conditionals"
        );
    }
    assert_eq!(
        exit_distribution(0.0, 4).unwrap(),
        vec![1.0, 0.0, 0.0, 0.0],
        "criterion 3: FAIL - a=0 distribution"
    );
    // Solver self-consistency on random attainable instances.
    for _ in 0..200 {
        let stages = rng.gen_range(2..6usize);
        let mut costs = Vec::with_capacity(stages);
        let mut c = rng.gen_range(0.5..2.0);
        for _ in 0..stages {
            costs.push(c);
            c += rng.gen_range(0.25..3.0);
        }
        let budget = rng.gen_range(costs[0]..*costs.last().unwrap());
        let a = solve_a_for_budget(budget, &costs).unwrap();
        let achieved = expected_cost(&exit_distribution(a, stages).unwrap(), &costs);
        assert!(
            (achieved - budget).abs() <= 1e-9 * budget,
            "criterion 3: FAIL - solver {achieved} vs budget {budget}"
        );
    }
    // Expected cost is non-decreasing in the parameter.
    let costs = [1.0, 2.0, 3.5, 7.0];
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=2000 {
        let a = i as f64 * 0.05;
        let c = expected_cost(&exit_distribution(a, 4).unwrap(), &costs);
        assert!(c + 1e-12 >= prev, "criterion 3: FAIL - cost fell at a {a}");
        prev = c;
    }
    println!("criterion 3 (exit-policy algebra): PASS");
}

#[test]
fn c04_retrieval_metrics_match_naive_recomputation() {
    // Hand case: matches at ranks 1 and 3 of a 4-item gallery.
    let hand = RankedResult {
        query_index: 0,
        order: vec![0, 1, 2, 3],
        is_match: vec![true, false, true, false],
    };
    let ap = mean_average_precision(std::slice::from_ref(&hand)).unwrap();
    assert!(
        (ap.value - 5.0 / 6.0).abs() <= 1e-15,
        "criterion 4: FAIL - AP hand case {}",
        ap.value
    );

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for case in 0..200 {
        let gallery_rows = rng.gen_range(1..=6usize);
        let query_rows = rng.gen_range(1..=4usize);
        let dim = rng.gen_range(1..=4usize);
        let mut gallery = Matrix::zeros(gallery_rows, dim);
        for v in gallery.data_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let gallery_labels: Vec<u32> =
            (0..gallery_rows).map(|_| rng.gen_range(0..3u32)).collect();
        let mut queries = Matrix::zeros(query_rows, dim);
        for v in queries.data_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        // Closed set: every query label exists in the gallery.
        let query_labels: Vec<u32> = (0..query_rows)
            .map(|_| gallery_labels[rng.gen_range(0..gallery_rows)])
            .collect();

        let results = rank_all(
            &queries,
            &query_labels,
            &vec![None; query_rows],
            &gallery,
            &gallery_labels,
            &vec![None; gallery_rows],
            MatchFilter::default(),
        )
        .unwrap();
        for k in 1..=gallery_rows {
            let fast = cmc_at_k(&results, k).unwrap().value;
            let (naive_cmc, _) =
                oracle_metrics(&queries, &query_labels, &gallery, &gallery_labels, k);
            assert!(
                (fast - naive_cmc).abs() <= 1e-12,
                "criterion 4: FAIL - case {case} cmc@{k}: {fast} vs {naive_cmc}"
            );
        }
        let fast_map = mean_average_precision(&results).unwrap().value;
        let (_, naive_map) = oracle_metrics(&queries, &query_labels, &gallery, &gallery_labels, 1);
        assert!(
            (fast_map - naive_map).abs() <= 1e-12,
            "criterion 4: FAIL - case {case} map: {fast_map} vs {naive_map}"
        );
    }
    println!("criterion 4 (CMC/mAP vs naive recomputation): PASS");
}

#[test]
fn c05_stage_accuracy_profile_and_fusion_dominance() {
    let started = Instant::now();
    let models = default_models();
    let blocks = models[0].queries.num_stages();
    let mut stage1 = Vec::new();
    let mut stage3 = Vec::new();
    let mut fused_ok_all = true;
    for (seed, model) in SEEDS.iter().zip(models) {
        let accs: Vec<f64> = (0..blocks).map(|b| rank1_of_block(model, b)).collect();
        let fused = accs[blocks - 1];
        let max_stage = accs[..blocks - 1].iter().cloned().fold(0.0, f64::max);
        let fused_ok = fused >= max_stage - 0.010_000_001;
        fused_ok_all &= fused_ok;
        stage1.push(accs[0]);
        stage3.push(accs[2]);
        println!(
            "criterion 5: seed {seed} rank-1 per stage {:?} fused {:.4} (max stage {:.4}, within 1pt: {})",
            &accs[..blocks - 1]
                .iter()
                .map(|a| (a * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            fused,
            max_stage,
            fused_ok
        );
    }
    let mean1 = stage1.iter().sum::<f64>() / stage1.len() as f64;
    let mean3 = stage3.iter().sum::<f64>() / stage3.len() as f64;
    let ordering_ok = mean1 < mean3;
    let elapsed = started.elapsed();
    let runtime_ok = elapsed.as_secs() < 300;
    let pass = fused_ok_all && ordering_ok && runtime_ok;
    println!(
        "criterion 5 (stage profile): {} - fused within 1pt of best stage on every seed: {}, mean stage-1 {mean1:.4} < mean stage-3 {mean3:.4}: {}, runtime {elapsed:.1?} (<5 min: {})",
        if pass { "PASS" } else { "FAIL" },
        fused_ok_all,
        ordering_ok,
        runtime_ok
    );
    assert!(
        pass,
        "criterion 5: FAIL - fused_ok {fused_ok_all}, stage1 {mean1:.4} vs stage3 {mean3:.4}, runtime {elapsed:?}"
    );
}

#[test]
fn c06_deep_supervision_improves_the_fused_embedding() {
    let with: Vec<f64> = default_models()
        .iter()
        .map(|m| rank1_of_block(m, m.queries.num_stages() - 1))
        .collect();
    let without: Vec<f64> = SEEDS
        .iter()
        .map(|&s| {
            let model = train_default_model(s, false);
            rank1_of_block(&model, model.queries.num_stages() - 1)
        })
        .collect();
    let mean_with = with.iter().sum::<f64>() / with.len() as f64;
    let mean_without = without.iter().sum::<f64>() / without.len() as f64;
    let pass = mean_with >= mean_without;
    println!(
        "criterion 6 (deep supervision): {} - fused rank-1 {mean_with:.4} with vs {mean_without:.4} without",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion 6: FAIL - {mean_with:.4} vs {mean_without:.4}");
}

#[test]
fn c07_routing_strategies_order_correctly_at_matched_cost() {
    use rand::seq::SliceRandom;

    let mut accuracy_sums = [0.0f64; 3];
    for &seed in &SEEDS {
        // Default data scaled up in samples per identity so the query
        // stream exceeds 2,000 entries.
        let data = generate_synthetic(&SyntheticConfig {
            seed,
            samples_per_identity: 72,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let split = split_dataset(&data, 0.5, 64, seed).unwrap();
        let config = EncoderConfig::new(data.dim());
        let train_config = TrainConfig {
            seed,
            ..TrainConfig::with_iterations(TRAIN_ITERATIONS)
        };
        let (params, _) = train(&split.train, &config, &train_config).unwrap();
        let queries = stream_exit_table(&embed_dataset(&params, &split.query).unwrap()).unwrap();
        let gallery = stream_exit_table(&embed_dataset(&params, &split.gallery).unwrap()).unwrap();

        let mut order: Vec<usize> = (0..queries.num_rows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(500)));
        let stream = queries.select_rows(&order).unwrap();
        assert!(stream.num_rows() >= 2000, "criterion 7: stream too short");

        let policy = ExitPolicy::from_parameter(1.0, stream.costs()).unwrap();
        let target_cost = policy.expected_cost();
        let strategies = [
            RoutingStrategy::Margin,
            RoutingStrategy::Distance,
            RoutingStrategy::Random,
        ];
        for (i, strategy) in strategies.iter().enumerate() {
            let mut state = StreamState::new(stream.num_stages(), 10, seed * 31 + i as u64);
            let outcome = route_and_identify_stream(
                &stream,
                &gallery,
                &policy,
                *strategy,
                &mut state,
                Some(gallery.labels()),
                MatchFilter::default(),
            )
            .unwrap();
            for (s, (fraction, &p)) in outcome
                .exit_fractions
                .iter()
                .zip(policy.marginal())
                .enumerate()
            {
                assert!(
                    (fraction - p).abs() <= 0.05,
                    "criterion 7: FAIL - seed {seed} {} stage {} fraction {fraction:.3} vs target {p:.3}",
                    strategy.name(),
                    s + 1
                );
            }
            assert!(
                (outcome.mean_cost - target_cost).abs() <= 0.10 * target_cost,
                "criterion 7: FAIL - seed {seed} {} realized cost {:.0} vs target {target_cost:.0}",
                strategy.name(),
                outcome.mean_cost
            );
            accuracy_sums[i] += outcome.cmc1.value;
        }
    }
    let margin = accuracy_sums[0] / SEEDS.len() as f64;
    let distance = accuracy_sums[1] / SEEDS.len() as f64;
    let random = accuracy_sums[2] / SEEDS.len() as f64;
    let pass = margin >= distance && distance >= random - 0.005;
    println!(
        "criterion 7 (stream routing): {} - rank-1 margin {margin:.4} >= distance {distance:.4} >= random {random:.4} - 0.5pt; exit fractions within 0.05",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion 7: FAIL - margin {margin:.4}, distance {distance:.4}, random {random:.4}");
}

#[test]
fn c08_anytime_curve_dominates_the_sequential_ensemble() {
    let models = default_models();
    let mut dominated_seeds = 0usize;
    for (model, &seed) in models.iter().zip(&SEEDS) {
        let member_configs: Vec<EncoderConfig> =
            (2..=4).map(|s| EncoderConfig::with_stages(32, s)).collect();
        let train_config = TrainConfig {
            seed,
            deep_supervision: false,
            ..TrainConfig::with_iterations(TRAIN_ITERATIONS)
        };
        let (ensemble, _) =
            train_sequential_ensemble(&member_configs, &model.split.train, &train_config).unwrap();
        let ens_queries = ensemble.embed(&model.split.query).unwrap();
        let ens_gallery = ensemble.embed(&model.split.gallery).unwrap();

        let second_step = ensemble.cumulative_costs[1];
        let mut budgets: Vec<f64> = model.gallery.costs().to_vec();
        budgets.extend_from_slice(&ensemble.cumulative_costs);
        budgets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        budgets.retain(|&b| b >= second_step);
        budgets.push(budgets.last().unwrap() * 1.25);

        let ours = anytime_sweep(&model.queries, &model.gallery, &budgets, MatchFilter::default())
            .unwrap();
        let theirs =
            anytime_sweep(&ens_queries, &ens_gallery, &budgets, MatchFilter::default()).unwrap();
        let dominated = ours
            .iter()
            .zip(&theirs)
            .all(|(a, b)| a.cmc1 >= b.cmc1);
        println!(
            "criterion 8: seed {seed} dominated={dominated} at budgets {:?} (ours {:?} vs baseline {:?})",
            budgets.iter().map(|b| b.round()).collect::<Vec<_>>(),
            ours.iter().map(|r| (r.cmc1 * 1e3).round() / 1e3).collect::<Vec<_>>(),
            theirs.iter().map(|r| (r.cmc1 * 1e3).round() / 1e3).collect::<Vec<_>>()
        );
        if dominated {
            dominated_seeds += 1;
        }
    }
    let pass = dominated_seeds * 2 > SEEDS.len();
    println!(
        "criterion 8 (anytime vs sequential ensemble): {} - dominated on {dominated_seeds}/{} seeds",
        if pass { "PASS" } else { "FAIL" },
        SEEDS.len()
    );
    assert!(pass, "criterion 8: FAIL - dominated on {dominated_seeds} seeds");
}

#[test]
fn c09_learning_rate_schedule_boundaries() {
    let config = TrainConfig::default();
    let a0 = config.base_lr;
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    let at_decay_start = lr_schedule(config.decay_start, &config);
    let at_end = lr_schedule(config.total_iterations, &config);
    let mid = lr_schedule((config.decay_start + config.total_iterations) / 2, &config);
    assert!(
        rel(at_decay_start, a0) <= 1e-15,
        "criterion 9: FAIL - decay start {at_decay_start}"
    );
    assert!(
        rel(at_end, 0.001 * a0) <= 1e-15,
        "criterion 9: FAIL - end {at_end}"
    );
    assert!(
        rel(mid, a0 * 0.001f64.powf(0.5)) <= 1e-15,
        "criterion 9: FAIL - midpoint {mid}"
    );
    println!("criterion 9 (learning-rate schedule): PASS");
}

#[test]
fn c10_cli_pipeline_is_byte_deterministic() {
    fn run_pipeline(dir: &std::path::Path) {
        let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
        let runs: Vec<Vec<String>> = vec![
            vec![
                "dare", "gen-data", "--seed", "7", "--out", &path("data.txt"),
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec![
                "dare", "train", "--data", &path("data.txt"), "--out", &path("ckpt.txt"),
                "--loss-csv", &path("loss.csv"), "--iterations", "200", "--seed", "7",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec![
                "dare", "embed", "--checkpoint", &path("ckpt.txt"), "--data", &path("data.txt"),
                "--out", &path("table.txt"), "--split", "gallery", "--seed", "7",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec![
                "dare", "eval", "--checkpoint", &path("ckpt.txt"), "--data", &path("data.txt"),
                "--out", &path("eval.csv"), "--seed", "7",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec![
                "dare", "anytime", "--checkpoint", &path("ckpt.txt"), "--data", &path("data.txt"),
                "--out", &path("anytime.csv"), "--budget-steps", "12", "--seed", "7",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            vec![
                "dare", "stream", "--checkpoint", &path("ckpt.txt"), "--data", &path("data.txt"),
                "--strategy", "distance", "--a-grid", "0.5,1,2", "--out", &path("stream.csv"),
                "--seed", "7",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ];
        for argv in runs {
            dare_cli::run(argv).unwrap();
        }
    }

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_pipeline(dir_a.path());
    run_pipeline(dir_b.path());
    for name in [
        "data.txt",
        "ckpt.txt",
        "loss.csv",
        "table.txt",
        "eval.csv",
        "anytime.csv",
        "stream.csv",
    ] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert!(
            a == b,
            "criterion 10: FAIL - artifact {name} differs between runs"
        );
    }
    println!("criterion 10 (CLI determinism): PASS - 7 artifacts byte-identical");
}
