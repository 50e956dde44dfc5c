//! Anytime identification: rank with the deepest embedding whose
//! cumulative cost fits the budget.
//!
//! Exit points are the blocks of an embedding table in cost order; tables
//! produced from an encoder carry every stage plus the fused embedding as
//! the final block. A budget below the first exit cost yields no result.

use crate::encoder::{cost_profile, forward, EncoderParams};
use crate::error::{Error, Result};
use crate::retrieval::{rank_all, rank_gallery, MatchFilter};
use crate::table::EmbeddingTable;

/// Deepest block affordable at `budget`; the boundary is inclusive.
pub fn affordable_exit(exit_costs: &[f64], budget: f64) -> Option<usize> {
    exit_costs.iter().rposition(|&c| c <= budget)
}

/// Result of one anytime query.
#[derive(Debug, Clone, PartialEq)]
pub struct AnytimeOutcome {
    /// Block index used (stages first, fusion last), or None when even
    /// the first exit exceeded the budget.
    pub exit: Option<usize>,
    pub cost_spent: f64,
    /// Gallery indices by ascending distance, when a result exists.
    pub ranking: Option<Vec<usize>>,
}

fn check_gallery_matches_profile(gallery: &EmbeddingTable, exit_costs: &[f64]) -> Result<()> {
    if gallery.num_stages() != exit_costs.len() {
        return Err(Error::config(format!(
            "gallery table has {} block(s), encoder exposes {} exit points (stages plus fusion)",
            gallery.num_stages(),
            exit_costs.len()
        )));
    }
    for (s, (&table_cost, &expected)) in gallery.costs().iter().zip(exit_costs).enumerate() {
        let tol = 1e-12 * expected.abs().max(1.0);
        if (table_cost - expected).abs() > tol {
            return Err(Error::config(format!(
                "gallery block {} cost {} does not match encoder exit cost {}",
                s + 1,
                table_cost,
                expected
            )));
        }
    }
    Ok(())
}

/// Runs the encoder on one query under a hard budget and ranks the
/// gallery with the deepest completed embedding.
pub fn anytime_identify(
    params: &EncoderParams,
    query: &[f64],
    gallery: &EmbeddingTable,
    budget: f64,
) -> Result<AnytimeOutcome> {
    let profile = cost_profile(&params.config)?;
    let exit_costs = profile.exit_costs();
    check_gallery_matches_profile(gallery, &exit_costs)?;
    let exit = affordable_exit(&exit_costs, budget);
    let Some(block) = exit else {
        return Ok(AnytimeOutcome {
            exit: None,
            cost_spent: 0.0,
            ranking: None,
        });
    };
    let out = forward(params, query)?;
    let embedding = if block < params.config.num_stages {
        &out.stage_embeddings[block]
    } else {
        &out.fused
    };
    let ranking = rank_gallery(embedding, gallery.stage(block))?;
    Ok(AnytimeOutcome {
        exit: Some(block),
        cost_spent: exit_costs[block],
        ranking: Some(ranking),
    })
}

/// One operating point of an accuracy-vs-budget curve.
#[derive(Debug, Clone, PartialEq)]
pub struct AnytimeRow {
    pub budget: f64,
    pub cmc1: f64,
    pub map: f64,
    /// Exit block used at this budget, None when no result is produced.
    pub exit: Option<usize>,
}

fn check_tables_align(queries: &EmbeddingTable, gallery: &EmbeddingTable) -> Result<()> {
    if queries.num_stages() != gallery.num_stages() {
        return Err(Error::config(format!(
            "query table has {} block(s), gallery has {}",
            queries.num_stages(),
            gallery.num_stages()
        )));
    }
    for s in 0..queries.num_stages() {
        if queries.stage(s).cols() != gallery.stage(s).cols() {
            return Err(Error::shape(format!(
                "block {} dims differ: query {}, gallery {}",
                s + 1,
                queries.stage(s).cols(),
                gallery.stage(s).cols()
            )));
        }
    }
    Ok(())
}

/// Sweeps a budget grid. Queries with no affordable exit count as
/// failures (zero accuracy), matching the forced-output reading of the
/// anytime protocol.
pub fn anytime_sweep(
    queries: &EmbeddingTable,
    gallery: &EmbeddingTable,
    budgets: &[f64],
    filter: MatchFilter,
) -> Result<Vec<AnytimeRow>> {
    check_tables_align(queries, gallery)?;
    let exit_costs = gallery.costs();
    // Metrics per block are budget-independent; compute each at most once.
    let mut cached: Vec<Option<(f64, f64)>> = vec![None; exit_costs.len()];
    let mut rows = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let exit = affordable_exit(exit_costs, budget);
        let (cmc1, map) = match exit {
            None => (0.0, 0.0),
            Some(block) => {
                if cached[block].is_none() {
                    let results = rank_all(
                        queries.stage(block),
                        queries.labels(),
                        queries.cameras(),
                        gallery.stage(block),
                        gallery.labels(),
                        gallery.cameras(),
                        filter,
                    )?;
                    let (cmc1, map) = crate::retrieval::evaluate(&results)?;
                    cached[block] = Some((cmc1.value, map.value));
                }
                cached[block].unwrap()
            }
        };
        rows.push(AnytimeRow {
            budget,
            cmc1,
            map,
            exit,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn affordable_exit_is_boundary_inclusive() {
        let costs = [10.0, 20.0, 30.0];
        assert_eq!(affordable_exit(&costs, 9.9), None);
        assert_eq!(affordable_exit(&costs, 10.0), Some(0));
        assert_eq!(affordable_exit(&costs, 20.0), Some(1));
        assert_eq!(affordable_exit(&costs, 29.999), Some(1));
        assert_eq!(affordable_exit(&costs, 1e9), Some(2));
    }

    fn toy_tables() -> (EmbeddingTable, EmbeddingTable) {
        // Two blocks; block 2 separates the labels better than block 1.
        let q1 = Matrix::from_vec(2, 1, vec![0.4, 0.6]);
        let q2 = Matrix::from_vec(2, 1, vec![0.0, 1.0]);
        let g1 = Matrix::from_vec(2, 1, vec![0.45, 0.55]);
        let g2 = Matrix::from_vec(2, 1, vec![0.0, 1.0]);
        let queries =
            EmbeddingTable::new(vec![q1, q2], vec![5.0, 9.0], vec![0, 1], vec![None, None])
                .unwrap();
        let gallery =
            EmbeddingTable::new(vec![g1, g2], vec![5.0, 9.0], vec![0, 1], vec![None, None])
                .unwrap();
        (queries, gallery)
    }

    #[test]
    fn sweep_is_piecewise_constant_between_exit_costs() {
        let (queries, gallery) = toy_tables();
        let budgets = [0.0, 4.9, 5.0, 6.0, 8.999, 9.0, 100.0];
        let rows = anytime_sweep(&queries, &gallery, &budgets, MatchFilter::default()).unwrap();
        assert_eq!(rows[0].exit, None);
        assert_eq!(rows[0].cmc1, 0.0);
        assert_eq!(rows[1].exit, None);
        assert_eq!(rows[2].exit, Some(0));
        assert_eq!(rows[3].exit, Some(0));
        assert_eq!(rows[4].exit, Some(0));
        assert_eq!(rows[5].exit, Some(1));
        assert_eq!(rows[6].exit, Some(1));
        // Within a block interval the metrics are identical.
        assert_eq!(rows[2].cmc1, rows[4].cmc1);
        assert_eq!(rows[2].map, rows[4].map);
    }

    #[test]
    fn mismatched_tables_are_rejected() {
        let (queries, gallery) = toy_tables();
        let wrong = gallery.without_stage(0).unwrap();
        assert!(anytime_sweep(&queries, &wrong, &[1.0], MatchFilter::default()).is_err());
    }
}
