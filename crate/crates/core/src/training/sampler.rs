//! PK batch sampling: P distinct identities, K samples each.

use rand::Rng;

use crate::dataset::IdentityDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::training::loss::PkBatch;

/// Prepared sampler over one dataset; reuses the identity index across
/// draws.
pub struct PkSampler<'a> {
    dataset: &'a IdentityDataset,
    groups: Vec<(u32, Vec<usize>)>,
    identities_per_batch: usize,
    samples_per_identity: usize,
}

impl<'a> PkSampler<'a> {
    pub fn new(
        dataset: &'a IdentityDataset,
        identities_per_batch: usize,
        samples_per_identity: usize,
    ) -> Result<Self> {
        if identities_per_batch < 2 || samples_per_identity < 2 {
            return Err(Error::Sampling(
                "PK sampling needs P >= 2 and K >= 2".into(),
            ));
        }
        let groups: Vec<(u32, Vec<usize>)> = dataset.by_identity().into_iter().collect();
        if groups.len() < identities_per_batch {
            return Err(Error::Sampling(format!(
                "need {} identities, dataset has {}",
                identities_per_batch,
                groups.len()
            )));
        }
        Ok(PkSampler {
            dataset,
            groups,
            identities_per_batch,
            samples_per_identity,
        })
    }

    /// Draws one batch: identities uniformly without replacement; samples
    /// without replacement, falling back to replacement when an identity
    /// has fewer than K samples.
    pub fn sample(&self, rng: &mut impl Rng) -> PkBatch {
        let p = self.identities_per_batch;
        let k = self.samples_per_identity;
        let mut order: Vec<usize> = (0..self.groups.len()).collect();
        for i in 0..p {
            let j = rng.gen_range(i..order.len());
            order.swap(i, j);
        }

        let dim = self.dataset.dim();
        let mut features = Matrix::zeros(p * k, dim);
        let mut labels = Vec::with_capacity(p * k);
        for (slot, &gi) in order[..p].iter().enumerate() {
            let (label, indices) = &self.groups[gi];
            let chosen: Vec<usize> = if indices.len() >= k {
                let mut pool = indices.clone();
                for i in 0..k {
                    let j = rng.gen_range(i..pool.len());
                    pool.swap(i, j);
                }
                pool[..k].to_vec()
            } else {
                (0..k)
                    .map(|_| indices[rng.gen_range(0..indices.len())])
                    .collect()
            };
            for (offset, &sample_idx) in chosen.iter().enumerate() {
                let row = slot * k + offset;
                features
                    .row_mut(row)
                    .copy_from_slice(&self.dataset.samples()[sample_idx].features);
                labels.push(*label);
            }
        }
        PkBatch::new(features, labels, p, k).expect("sampler produces valid PK layout")
    }
}

/// One-shot draw matching the prepared sampler.
pub fn sample_pk_batch(
    dataset: &IdentityDataset,
    identities_per_batch: usize,
    samples_per_identity: usize,
    rng: &mut impl Rng,
) -> Result<PkBatch> {
    Ok(PkSampler::new(dataset, identities_per_batch, samples_per_identity)?.sample(rng))
}
