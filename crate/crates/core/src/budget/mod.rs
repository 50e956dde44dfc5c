//! Resource-constrained identification: exit policies, the anytime
//! engine, budgeted-stream routing, and the sequential-ensemble baseline.
//!
//! Budgets count encoder Mul-Adds only; gallery search cost is not
//! charged, and gallery embeddings at every exit are assumed precomputed
//! offline.

mod anytime;
mod ensemble;
mod policy;
mod stream;

pub use anytime::{affordable_exit, anytime_identify, anytime_sweep, AnytimeOutcome, AnytimeRow};
pub use ensemble::{train_sequential_ensemble, SequentialEnsemble};
pub use policy::{
    conditional_exit_probs, exit_distribution, expected_cost, solve_a_for_budget, ExitPolicy,
};
pub use stream::{
    route_and_identify_stream, RoutingStrategy, StreamDecision, StreamOutcome, StreamState,
};

use crate::dataset::IdentityDataset;
use crate::encoder::{cost_profile, forward, EncoderParams};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::table::EmbeddingTable;

/// Embeds every sample at every stage plus the fusion, producing the
/// table the anytime engine consumes. Blocks are ordered by cost with
/// the fused embedding last.
pub fn embed_dataset(params: &EncoderParams, ds: &IdentityDataset) -> Result<EmbeddingTable> {
    let config = &params.config;
    let profile = cost_profile(config)?;
    let stages = config.num_stages;
    let dim = config.embedding_dim;
    let outputs = crate::parallel::map_indexed(ds.len(), |i| forward(params, &ds.samples()[i].features));
    let mut blocks = vec![Matrix::zeros(ds.len(), dim); stages + 1];
    for (i, out) in outputs.into_iter().enumerate() {
        let out = out?;
        for (s, phi) in out.stage_embeddings.iter().enumerate() {
            blocks[s].row_mut(i).copy_from_slice(phi);
        }
        blocks[stages].row_mut(i).copy_from_slice(&out.fused);
    }
    EmbeddingTable::new(blocks, profile.exit_costs(), ds.labels(), ds.cameras())
}

/// Exit table for the budgeted stream: the deepest plain stage is
/// dropped in favor of the fused block, which ranks strictly better for
/// a small extra cost. The input must be a stages-plus-fusion table.
pub fn stream_exit_table(full: &EmbeddingTable) -> Result<EmbeddingTable> {
    if full.num_stages() < 2 {
        return Err(crate::error::Error::config(
            "stream exits need at least two blocks (stages plus fusion)",
        ));
    }
    full.without_stage(full.num_stages() - 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticConfig};
    use crate::encoder::{init_params, EncoderConfig};

    #[test]
    fn embedded_table_matches_encoder_layout() {
        let ds = generate_synthetic(&SyntheticConfig {
            num_identities: 4,
            samples_per_identity: 2,
            input_dim: 8,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let config = EncoderConfig::new(8);
        let params = init_params(&config, 0).unwrap();
        let table = embed_dataset(&params, &ds).unwrap();
        assert_eq!(table.num_stages(), 5);
        assert_eq!(table.num_rows(), 8);
        let profile = cost_profile(&config).unwrap();
        assert_eq!(table.costs(), profile.exit_costs().as_slice());
    }

    #[test]
    fn stream_table_drops_the_penultimate_block() {
        let ds = generate_synthetic(&SyntheticConfig {
            num_identities: 4,
            samples_per_identity: 2,
            input_dim: 8,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let config = EncoderConfig::new(8);
        let params = init_params(&config, 0).unwrap();
        let full = embed_dataset(&params, &ds).unwrap();
        let exits = stream_exit_table(&full).unwrap();
        assert_eq!(exits.num_stages(), 4);
        let profile = cost_profile(&config).unwrap();
        assert_eq!(
            exits.costs(),
            &[
                profile.cumulative[0],
                profile.cumulative[1],
                profile.cumulative[2],
                profile.fusion
            ]
        );
    }
}
