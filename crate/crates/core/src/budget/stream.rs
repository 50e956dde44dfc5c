//! Budgeted-stream identification.
//!
//! Queries arrive one by one and must meet a compute budget in
//! expectation. At each exit point a router decides whether the query
//! stops with the current embedding or pays for the next stage. The
//! final exit always stops. Three routers are provided:
//!
//! - random: exit with the conditional probability `q_s`;
//! - distance: exit the fraction `q_s` of queries whose nearest-gallery
//!   distance is smallest, judged against the per-stage history of
//!   previous queries;
//! - margin: exit the fraction `q_s` with the largest gap between the
//!   nearest gallery item and the nearest item of a different identity
//!   (requires gallery labels at routing time).
//!
//! The quantile rule is an order statistic over the stage's score
//! history: with n recorded scores, the threshold is the ceil(q*n)-th
//! best score and ties exit. Until a stage has `warmup` scores the
//! distance and margin routers fall back to random exits, keeping the
//! expected budget honest while history accumulates. Scores at different
//! stages are never compared; each stage keeps its own history.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::euclidean;
use crate::retrieval::{rank_and_label, MatchFilter, MetricValue};
use crate::table::EmbeddingTable;

use super::policy::ExitPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutingStrategy {
    Random,
    Distance,
    Margin,
}

impl RoutingStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            RoutingStrategy::Random => "random",
            RoutingStrategy::Distance => "distance",
            RoutingStrategy::Margin => "margin",
        }
    }
}

impl std::str::FromStr for RoutingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(RoutingStrategy::Random),
            "distance" => Ok(RoutingStrategy::Distance),
            "margin" => Ok(RoutingStrategy::Margin),
            other => Err(Error::config(format!(
                "unknown routing strategy '{other}' (expected random, distance, or margin)"
            ))),
        }
    }
}

/// Router state carried across a stream: per-stage score histories plus
/// the randomized-exit rng.
#[derive(Debug, Clone)]
pub struct StreamState {
    histories: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    warmup: usize,
}

impl StreamState {
    pub fn new(stages: usize, warmup: usize, seed: u64) -> Self {
        StreamState {
            histories: vec![Vec::new(); stages],
            rng: ChaCha8Rng::seed_from_u64(seed),
            warmup,
        }
    }

    pub fn history_len(&self, stage: usize) -> usize {
        self.histories[stage].len()
    }
}

/// Routing decision for one stream query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamDecision {
    pub query_index: usize,
    /// Exit block (0-based) in the exit table.
    pub exit_stage: usize,
    pub cost: f64,
    pub rank1_correct: bool,
}

/// Aggregate outcome of one stream run.
#[derive(Debug, Clone)]
pub struct StreamOutcome {
    pub cmc1: MetricValue,
    pub map: MetricValue,
    pub mean_cost: f64,
    pub exit_fractions: Vec<f64>,
    pub decisions: Vec<StreamDecision>,
}

fn kth_smallest(values: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= values.len());
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
    *kth
}

fn kth_largest(values: &[f64], k: usize) -> f64 {
    kth_smallest(values, values.len() + 1 - k)
}

/// Order-statistic exit test. `larger_exits` flips the direction for
/// margin scores, where certainty grows with the score.
fn quantile_exit(
    score: f64,
    history: &[f64],
    q: f64,
    warmup: usize,
    rng: &mut ChaCha8Rng,
    larger_exits: bool,
) -> bool {
    if q >= 1.0 {
        return true;
    }
    if q <= 0.0 {
        return false;
    }
    if history.len() < warmup {
        return rng.gen_bool(q);
    }
    let n = history.len();
    let k = (q * n as f64).ceil() as usize;
    if k == 0 {
        return false;
    }
    if larger_exits {
        score >= kth_largest(history, k.min(n))
    } else {
        score <= kth_smallest(history, k.min(n))
    }
}

/// Distance from the query embedding to its nearest gallery row, plus
/// the nearest row index.
fn nearest_distance(query: &[f64], gallery: &crate::linalg::Matrix) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for i in 0..gallery.rows() {
        let d = euclidean(query, gallery.row(i));
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Margin of certainty: distance to the nearest gallery item of another
/// identity minus the nearest distance.
fn margin_score(query: &[f64], gallery: &crate::linalg::Matrix, labels: &[u32]) -> Result<f64> {
    let (nearest, d_q) = nearest_distance(query, gallery);
    let nearest_label = labels[nearest];
    let mut d_other = f64::INFINITY;
    for i in 0..gallery.rows() {
        if labels[i] != nearest_label {
            let d = euclidean(query, gallery.row(i));
            if d < d_other {
                d_other = d;
            }
        }
    }
    if !d_other.is_finite() {
        return Err(Error::config(
            "margin routing needs gallery items from at least two identities",
        ));
    }
    Ok(d_other - d_q)
}

/// Routes a query stream through the exit table, identifying each query
/// with the embedding at its exit. Queries are processed strictly in row
/// order; the router state is history-coupled.
///
/// `routing_labels` models whether gallery identities are known to the
/// router at test time; the margin strategy requires them.
pub fn route_and_identify_stream(
    queries: &EmbeddingTable,
    gallery: &EmbeddingTable,
    policy: &ExitPolicy,
    strategy: RoutingStrategy,
    state: &mut StreamState,
    routing_labels: Option<&[u32]>,
    filter: MatchFilter,
) -> Result<StreamOutcome> {
    let stages = queries.num_stages();
    if gallery.num_stages() != stages {
        return Err(Error::config(format!(
            "query table has {} block(s), gallery has {}",
            stages,
            gallery.num_stages()
        )));
    }
    if gallery.num_rows() == 0 {
        return Err(Error::config("gallery is empty"));
    }
    if policy.stages() != stages {
        return Err(Error::config(format!(
            "policy covers {} stage(s), exit table has {}",
            policy.stages(),
            stages
        )));
    }
    if state.histories.len() != stages {
        return Err(Error::config(format!(
            "stream state tracks {} stage(s), exit table has {}",
            state.histories.len(),
            stages
        )));
    }
    if strategy == RoutingStrategy::Margin && routing_labels.is_none() {
        return Err(Error::config(
            "margin routing requires gallery labels at test time",
        ));
    }
    if let Some(labels) = routing_labels {
        if labels.len() != gallery.num_rows() {
            return Err(Error::config(format!(
                "{} routing labels for {} gallery rows",
                labels.len(),
                gallery.num_rows()
            )));
        }
    }

    let costs = queries.costs();
    let mut decisions = Vec::with_capacity(queries.num_rows());
    let mut results = Vec::with_capacity(queries.num_rows());
    let mut exit_counts = vec![0usize; stages];
    let mut total_cost = 0.0;

    for row in 0..queries.num_rows() {
        let mut exit_stage = stages - 1;
        for s in 0..stages {
            if s + 1 == stages {
                exit_stage = s;
                break;
            }
            let q = policy.exit_probability_at(s);
            let exits = match strategy {
                RoutingStrategy::Random => {
                    if q >= 1.0 {
                        true
                    } else if q <= 0.0 {
                        false
                    } else {
                        state.rng.gen_bool(q)
                    }
                }
                RoutingStrategy::Distance => {
                    let (_, score) = nearest_distance(queries.stage(s).row(row), gallery.stage(s));
                    let exits = quantile_exit(
                        score,
                        &state.histories[s],
                        q,
                        state.warmup,
                        &mut state.rng,
                        false,
                    );
                    state.histories[s].push(score);
                    exits
                }
                RoutingStrategy::Margin => {
                    let labels = routing_labels.expect("checked above");
                    let score = margin_score(queries.stage(s).row(row), gallery.stage(s), labels)?;
                    let exits = quantile_exit(
                        score,
                        &state.histories[s],
                        q,
                        state.warmup,
                        &mut state.rng,
                        true,
                    );
                    state.histories[s].push(score);
                    exits
                }
            };
            if exits {
                exit_stage = s;
                break;
            }
        }

        let result = rank_and_label(
            row,
            queries.stage(exit_stage).row(row),
            queries.labels()[row],
            queries.cameras()[row],
            gallery.stage(exit_stage),
            gallery.labels(),
            gallery.cameras(),
            filter,
        )?;
        let rank1_correct = result.is_match.first().copied().unwrap_or(false);
        exit_counts[exit_stage] += 1;
        total_cost += costs[exit_stage];
        decisions.push(StreamDecision {
            query_index: row,
            exit_stage,
            cost: costs[exit_stage],
            rank1_correct,
        });
        results.push(result);
    }

    let n = queries.num_rows().max(1) as f64;
    let cmc1 = crate::retrieval::cmc_at_k(&results, 1)?;
    let map = crate::retrieval::mean_average_precision(&results)?;
    Ok(StreamOutcome {
        cmc1,
        map,
        mean_cost: total_cost / n,
        exit_fractions: exit_counts.iter().map(|&c| c as f64 / n).collect(),
        decisions,
    })
}
