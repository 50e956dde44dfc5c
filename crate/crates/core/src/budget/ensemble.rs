//! Sequential-ensemble baseline: independently trained encoders of
//! increasing size, evaluated in ascending cost order. Each member is
//! trained with the fusion-only loss (no deep supervision) and
//! contributes its fused embedding as one exit point whose cost is the
//! cumulative cost of all members evaluated so far.

use crate::dataset::IdentityDataset;
use crate::encoder::{cost_profile, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::table::EmbeddingTable;
use crate::training::{train, LossPoint, TrainConfig};

#[derive(Debug, Clone)]
pub struct SequentialEnsemble {
    pub members: Vec<EncoderParams>,
    /// Full (fused) cost of each member alone.
    pub member_costs: Vec<f64>,
    /// Cost charged when exiting after member i: sum of member costs 0..=i.
    pub cumulative_costs: Vec<f64>,
}

/// Trains one encoder per config with the fusion-only objective. Member
/// seeds derive deterministically from the base seed.
pub fn train_sequential_ensemble(
    configs: &[EncoderConfig],
    train_split: &IdentityDataset,
    base: &TrainConfig,
) -> Result<(SequentialEnsemble, Vec<Vec<LossPoint>>)> {
    if configs.is_empty() {
        return Err(Error::config("ensemble needs at least one member"));
    }
    let mut member_costs = Vec::with_capacity(configs.len());
    for config in configs {
        member_costs.push(cost_profile(config)?.fusion);
    }
    for w in member_costs.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::config(format!(
                "ensemble member costs must strictly increase, got {} then {}",
                w[0], w[1]
            )));
        }
    }

    let mut members = Vec::with_capacity(configs.len());
    let mut traces = Vec::with_capacity(configs.len());
    for (i, config) in configs.iter().enumerate() {
        let member_config = TrainConfig {
            deep_supervision: false,
            seed: base.seed.wrapping_add(1_000_003u64.wrapping_mul(i as u64 + 1)),
            ..base.clone()
        };
        let (params, trace) = train(train_split, config, &member_config)?;
        members.push(params);
        traces.push(trace);
    }
    let cumulative_costs = member_costs
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c;
            Some(*acc)
        })
        .collect();
    Ok((
        SequentialEnsemble {
            members,
            member_costs,
            cumulative_costs,
        },
        traces,
    ))
}

impl SequentialEnsemble {
    /// Embeds a sample set with every member's fused embedding; the
    /// resulting table plugs straight into the anytime sweep, with block
    /// costs equal to the cumulative member costs.
    pub fn embed(&self, ds: &IdentityDataset) -> Result<EmbeddingTable> {
        let mut blocks = Vec::with_capacity(self.members.len());
        for member in &self.members {
            let dim = member.config.embedding_dim;
            let mut block = crate::linalg::Matrix::zeros(ds.len(), dim);
            let rows = crate::parallel::map_indexed(ds.len(), |i| {
                crate::encoder::forward(member, &ds.samples()[i].features).map(|o| o.fused)
            });
            for (i, row) in rows.into_iter().enumerate() {
                block.row_mut(i).copy_from_slice(&row?);
            }
            blocks.push(block);
        }
        EmbeddingTable::new(
            blocks,
            self.cumulative_costs.clone(),
            ds.labels(),
            ds.cameras(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticConfig};

    fn tiny_data() -> IdentityDataset {
        generate_synthetic(&SyntheticConfig {
            num_identities: 6,
            samples_per_identity: 4,
            input_dim: 8,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    fn tiny_train_config() -> TrainConfig {
        TrainConfig {
            identities_per_batch: 3,
            samples_per_identity: 2,
            total_iterations: 20,
            decay_start: 10,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn non_increasing_member_costs_are_rejected() {
        let big = EncoderConfig::with_stages(8, 3);
        let small = EncoderConfig::with_stages(8, 2);
        let err =
            train_sequential_ensemble(&[big, small], &tiny_data(), &tiny_train_config())
                .unwrap_err()
                .to_string();
        assert!(err.contains("strictly increase"), "{err}");
    }

    #[test]
    fn single_member_table_is_a_one_step_curve() {
        let config = EncoderConfig::with_stages(8, 2);
        let data = tiny_data();
        let (ensemble, _) =
            train_sequential_ensemble(std::slice::from_ref(&config), &data, &tiny_train_config())
                .unwrap();
        let table = ensemble.embed(&data).unwrap();
        assert_eq!(table.num_stages(), 1);
        let full_cost = cost_profile(&config).unwrap().fusion;
        assert_eq!(table.costs(), &[full_cost]);
    }

    #[test]
    fn cumulative_costs_accumulate_member_costs() {
        let configs = vec![EncoderConfig::with_stages(8, 2), EncoderConfig::with_stages(8, 4)];
        let (ensemble, _) =
            train_sequential_ensemble(&configs, &tiny_data(), &tiny_train_config()).unwrap();
        assert_eq!(
            ensemble.cumulative_costs[1],
            ensemble.member_costs[0] + ensemble.member_costs[1]
        );
    }
}
