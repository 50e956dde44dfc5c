//! Labeled identity data: synthetic generation and train/query/gallery splits.
//!
//! The generator produces two kinds of identities. "Easy" identities are
//! separated by a linear offset of magnitude `coarse_margin` drawn from a
//! fixed low-dimensional subspace of the first half of the coordinates.
//! "Hard" identities carry a smaller `fine_margin` signal, drawn from a
//! fixed subspace of a latent space that is pushed through a fixed smooth
//! warp ([`WARP_DEPTH`] rotation-plus-tanh steps) before landing in the
//! last half of the coordinates, so their class structure is curved
//! rather than linear. The signal subspaces, the warp, and the bases are
//! shared across identities, which is what lets an embedding trained on
//! one identity set transfer to unseen identities.
//!
//! Within-class variation is Gaussian with std `noise_sigma` everywhere,
//! with two wrinkles: the easy block carries a stronger nuisance
//! component ([`NUISANCE_GAIN`] times larger) in its non-signal
//! directions, removable by a linear projection onto the signal
//! subspace, and hard samples draw their block's variation in the
//! pre-warp latent space, so their scatter is curved along with the
//! signal.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vec, random_orthogonal, Matrix};

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: u32,
    pub camera: Option<u32>,
}

/// A set of labeled feature vectors of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityDataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl IdentityDataset {
    pub fn new(samples: Vec<Sample>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dataset dimension must be >= 1"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::shape(format!(
                    "sample {} has {} features, expected {}",
                    i,
                    s.features.len(),
                    dim
                )));
            }
        }
        Ok(IdentityDataset { samples, dim })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Sample indices grouped by identity, identities in ascending order.
    pub fn by_identity(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            map.entry(s.label).or_default().push(i);
        }
        map
    }

    pub fn identities(&self) -> Vec<u32> {
        self.by_identity().into_keys().collect()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn cameras(&self) -> Vec<Option<u32>> {
        self.samples.iter().map(|s| s.camera).collect()
    }

    pub fn features_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.samples.len(), self.dim);
        for (i, s) in self.samples.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&s.features);
        }
        m
    }
}

/// Parameters of the synthetic identity generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_identities: usize,
    pub samples_per_identity: usize,
    pub input_dim: usize,
    /// Fraction of identities given the linearly separable coarse signal.
    pub easy_fraction: f64,
    pub coarse_margin: f64,
    pub fine_margin: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_identities: 64,
            samples_per_identity: 8,
            input_dim: 32,
            easy_fraction: 0.5,
            coarse_margin: 8.0,
            fine_margin: 4.0,
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_identities < 2 {
            return Err(Error::config("num_identities must be >= 2"));
        }
        if self.samples_per_identity < 2 {
            return Err(Error::config("samples_per_identity must be >= 2"));
        }
        if self.input_dim < 2 {
            return Err(Error::config("input_dim must be >= 2"));
        }
        if !(0.0..=1.0).contains(&self.easy_fraction) {
            return Err(Error::config("easy_fraction must be in [0, 1]"));
        }
        if !(self.coarse_margin > 0.0) {
            return Err(Error::config("coarse_margin must be > 0"));
        }
        if !(self.fine_margin > 0.0) {
            return Err(Error::config("fine_margin must be > 0"));
        }
        if self.fine_margin >= self.coarse_margin {
            return Err(Error::config("fine_margin must be < coarse_margin"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma must be >= 0"));
        }
        Ok(())
    }
}

fn unit_gaussian(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v = gaussian_vec(dim, rng);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Nuisance-to-noise amplitude ratio in the easy block's non-signal
/// directions.
pub const NUISANCE_GAIN: f64 = 2.5;

/// Number of rotation-plus-tanh steps in the hard-identity warp.
pub const WARP_DEPTH: usize = 2;

/// Gain applied inside each tanh warp step.
pub const WARP_GAIN: f64 = 1.4;

/// The warp input is prescaled to this per-coordinate standard
/// deviation so the tanh steps stay in their informative band.
pub const WARP_INPUT_STD: f64 = 0.8;

/// Number of shared signal directions per identity kind.
fn signal_dim(half_dim: usize) -> usize {
    (half_dim / 4).max(2).min(half_dim)
}

/// Generates a synthetic identity dataset. Pure function of the config.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<IdentityDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let coarse_dim = config.input_dim / 2;
    let warp_dim = config.input_dim - coarse_dim;
    let rotations: Vec<_> = (0..WARP_DEPTH)
        .map(|_| random_orthogonal(warp_dim, &mut rng))
        .collect();
    let easy_k = signal_dim(coarse_dim);
    let hard_k = signal_dim(warp_dim);
    // Orthonormal bases of each block; the first k columns span the
    // shared signal subspace, the rest carry the nuisance variation.
    let easy_basis = random_orthogonal(coarse_dim, &mut rng);
    let hard_basis = random_orthogonal(warp_dim, &mut rng);

    let num_easy = (config.easy_fraction * config.num_identities as f64).round() as usize;
    let num_easy = num_easy.min(config.num_identities);

    let embed = |basis: &crate::linalg::Matrix, coeffs: &[f64]| -> Vec<f64> {
        (0..basis.rows())
            .map(|r| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| c * basis.row(r)[j])
                    .sum()
            })
            .collect()
    };

    // Identity centers as coefficient vectors over their block basis.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(config.num_identities);
    for id in 0..config.num_identities {
        let (k, margin) = if id < num_easy {
            (easy_k, config.coarse_margin)
        } else {
            (hard_k, config.fine_margin)
        };
        let mut c = unit_gaussian(k, &mut rng);
        for x in c.iter_mut() {
            *x *= margin;
        }
        centers.push(c);
    }

    let sigma = config.noise_sigma;
    // Per-sample block content in basis coordinates: the identity center
    // plus sigma noise in the signal directions, plus nuisance variation
    // scaled by `gain` in the remaining directions.
    let block_coeffs =
        |center: &[f64], dim: usize, gain: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut coeffs = Vec::with_capacity(dim);
            for j in 0..dim {
                let g: f64 = rng.sample(StandardNormal);
                if j < center.len() {
                    coeffs.push(center[j] + sigma * g);
                } else {
                    coeffs.push(gain * sigma * g);
                }
            }
            coeffs
        };

    // Fixed prescale keeping the warp's tanh steps out of saturation.
    let latent_var = (config.fine_margin * config.fine_margin
        + warp_dim as f64 * sigma * sigma)
        / warp_dim as f64;
    let prescale = WARP_INPUT_STD / latent_var.sqrt().max(1e-9);

    let mut samples = Vec::with_capacity(config.num_identities * config.samples_per_identity);
    for id in 0..config.num_identities {
        for _ in 0..config.samples_per_identity {
            let mut features = vec![0.0; config.input_dim];
            if id < num_easy {
                let coeffs =
                    block_coeffs(&centers[id], coarse_dim, NUISANCE_GAIN, &mut rng);
                let block = embed(&easy_basis, &coeffs);
                features[..coarse_dim].copy_from_slice(&block);
                for x in features[coarse_dim..].iter_mut() {
                    let noise: f64 = rng.sample(StandardNormal);
                    *x = sigma * noise;
                }
            } else {
                for x in features[..coarse_dim].iter_mut() {
                    let noise: f64 = rng.sample(StandardNormal);
                    *x = sigma * noise;
                }
                let coeffs = block_coeffs(&centers[id], warp_dim, 1.0, &mut rng);
                let mut latent = embed(&hard_basis, &coeffs);
                for x in latent.iter_mut() {
                    *x *= prescale;
                }
                for rotation in &rotations {
                    latent = rotation.matvec(&latent);
                    for x in latent.iter_mut() {
                        *x = (WARP_GAIN * *x).tanh();
                    }
                }
                features[coarse_dim..].copy_from_slice(&latent);
            }
            samples.push(Sample {
                features,
                label: id as u32,
                camera: None,
            });
        }
    }

    IdentityDataset::new(samples, config.input_dim)
}

/// A train/query/gallery partition of a dataset.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: IdentityDataset,
    pub query: IdentityDataset,
    pub gallery: IdentityDataset,
}

/// Splits by identity: train identities are disjoint from test identities,
/// then each test identity contributes `query_per_identity` queries and
/// leaves the rest in the gallery. Every query identity therefore appears
/// in the gallery (closed set).
pub fn split_dataset(
    ds: &IdentityDataset,
    train_frac: f64,
    query_per_identity: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Split(format!(
            "train_frac must be in (0, 1), got {train_frac}"
        )));
    }
    if query_per_identity == 0 {
        return Err(Error::Split("query_per_identity must be >= 1".into()));
    }
    let groups = ds.by_identity();
    let ids: Vec<u32> = groups.keys().copied().collect();
    if ids.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 identities to split, got {}",
            ids.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = ids.clone();
    shuffle(&mut shuffled, &mut rng);
    let n_train = (train_frac * ids.len() as f64).round() as usize;
    let n_train = n_train.clamp(1, ids.len() - 1);
    let mut train_ids: Vec<u32> = shuffled[..n_train].to_vec();
    let mut test_ids: Vec<u32> = shuffled[n_train..].to_vec();
    train_ids.sort_unstable();
    test_ids.sort_unstable();

    let mut train = Vec::new();
    for &id in &train_ids {
        let idxs = &groups[&id];
        if idxs.len() < 2 {
            return Err(Error::Split(format!(
                "train identity {} has {} sample(s); need at least 2",
                id,
                idxs.len()
            )));
        }
        for &i in idxs {
            train.push(ds.samples()[i].clone());
        }
    }

    let mut query = Vec::new();
    let mut gallery = Vec::new();
    for &id in &test_ids {
        let idxs = &groups[&id];
        if idxs.len() < query_per_identity + 1 {
            return Err(Error::Split(format!(
                "identity {} has {} sample(s); need at least {} for {} query(ies) plus gallery",
                id,
                idxs.len(),
                query_per_identity + 1,
                query_per_identity
            )));
        }
        let mut order = idxs.clone();
        shuffle(&mut order, &mut rng);
        for (pos, &i) in order.iter().enumerate() {
            if pos < query_per_identity {
                query.push(ds.samples()[i].clone());
            } else {
                gallery.push(ds.samples()[i].clone());
            }
        }
    }

    Ok(DatasetSplit {
        train: IdentityDataset::new(train, ds.dim())?,
        query: IdentityDataset::new(query, ds.dim())?,
        gallery: IdentityDataset::new(gallery, ds.dim())?,
    })
}

fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
