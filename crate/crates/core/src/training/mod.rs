//! Deeply-supervised triplet training: batch-hard soft-margin loss with
//! analytic gradients, PK sampling, and Adam updates with a staged
//! learning-rate decay.

mod loss;
mod sampler;

pub use loss::{
    batch_hard_triplet_loss, loss_gradient, pairwise_distances, stage_losses, total_loss, PkBatch,
};
pub use sampler::{sample_pk_batch, PkSampler};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::IdentityDataset;
use crate::encoder::{init_params, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};

/// Optimizer and batch settings for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// P: identities per batch.
    pub identities_per_batch: usize,
    /// K: samples per identity.
    pub samples_per_identity: usize,
    /// t1: total iterations.
    pub total_iterations: u64,
    /// t0: iteration where the learning-rate decay and the beta1 drop start.
    pub decay_start: u64,
    pub base_lr: f64,
    pub beta1_initial: f64,
    pub beta1_after_decay: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub deep_supervision: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            identities_per_batch: 18,
            samples_per_identity: 4,
            total_iterations: 6000,
            decay_start: 3000,
            base_lr: 3e-4,
            beta1_initial: 0.9,
            beta1_after_decay: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            deep_supervision: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Default config rescaled to a different iteration count, with the
    /// decay starting halfway through.
    pub fn with_iterations(total_iterations: u64) -> Self {
        TrainConfig {
            total_iterations,
            decay_start: (total_iterations / 2).max(1),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.identities_per_batch < 2 {
            return Err(Error::config("identities_per_batch must be >= 2"));
        }
        if self.samples_per_identity < 2 {
            return Err(Error::config("samples_per_identity must be >= 2"));
        }
        if self.decay_start == 0 || self.decay_start > self.total_iterations {
            return Err(Error::config(
                "decay_start must satisfy 0 < t0 <= total_iterations",
            ));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::config("base_lr must be > 0"));
        }
        Ok(())
    }
}

/// Learning rate at iteration `t`: constant until `decay_start`, then an
/// exponential ramp that lands on `0.001 * base_lr` at the final
/// iteration. Iterations past the end clamp to the final value.
pub fn lr_schedule(t: u64, config: &TrainConfig) -> f64 {
    let t = t.min(config.total_iterations);
    if t <= config.decay_start {
        return config.base_lr;
    }
    let span = (config.total_iterations - config.decay_start) as f64;
    let progress = (t - config.decay_start) as f64 / span;
    config.base_lr * 0.001f64.powf(progress)
}

/// One record of the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPoint {
    pub iteration: u64,
    pub loss: f64,
    pub lr: f64,
}

/// Trains an encoder from scratch and returns the final parameters plus
/// the per-iteration loss trace. Deterministic given the config seed.
pub fn train(
    dataset: &IdentityDataset,
    encoder_config: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(EncoderParams, Vec<LossPoint>)> {
    config.validate()?;
    encoder_config.validate()?;
    if dataset.dim() != encoder_config.input_dim {
        return Err(Error::shape(format!(
            "dataset dimension {} does not match encoder input {}",
            dataset.dim(),
            encoder_config.input_dim
        )));
    }
    let sampler = PkSampler::new(
        dataset,
        config.identities_per_batch,
        config.samples_per_identity,
    )?;

    let mut params = init_params(encoder_config, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let n = params.param_count();
    let mut first_moment = vec![0.0f64; n];
    let mut second_moment = vec![0.0f64; n];
    let mut trace = Vec::with_capacity(config.total_iterations as usize);

    for t in 1..=config.total_iterations {
        let batch = sampler.sample(&mut rng);
        let (loss, grads) = loss_gradient(&params, &batch, config.deep_supervision)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: t });
        }
        let lr = lr_schedule(t, config);
        let beta1 = beta1_at(config, t);
        let beta2 = config.beta2;
        let bias1 = 1.0 - beta1.powi(t.min(i32::MAX as u64) as i32);
        let bias2 = 1.0 - beta2.powi(t.min(i32::MAX as u64) as i32);
        let flat_grads = grads.flatten();
        let mut idx = 0usize;
        params.for_each_mut(|p| {
            let g = flat_grads[idx];
            first_moment[idx] = beta1 * first_moment[idx] + (1.0 - beta1) * g;
            second_moment[idx] = beta2 * second_moment[idx] + (1.0 - beta2) * g * g;
            let m_hat = first_moment[idx] / bias1;
            let v_hat = second_moment[idx] / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
            idx += 1;
        });
        trace.push(LossPoint {
            iteration: t,
            loss,
            lr,
        });
    }
    Ok((params, trace))
}

fn beta1_at(config: &TrainConfig, t: u64) -> f64 {
    if t <= config.decay_start {
        config.beta1_initial
    } else {
        config.beta1_after_decay
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticConfig};

    #[test]
    fn schedule_boundaries_are_exact() {
        let config = TrainConfig::default();
        let a0 = config.base_lr;
        assert_eq!(lr_schedule(0, &config), a0);
        assert_eq!(lr_schedule(config.decay_start, &config), a0);
        let end = lr_schedule(config.total_iterations, &config);
        assert!((end - 0.001 * a0).abs() <= 1e-15 * (0.001 * a0));
        let mid = lr_schedule((config.decay_start + config.total_iterations) / 2, &config);
        let expected = a0 * 0.001f64.powf(0.5);
        assert!((mid - expected).abs() <= 1e-15 * expected);
    }

    #[test]
    fn schedule_clamps_past_the_end() {
        let config = TrainConfig::default();
        assert_eq!(
            lr_schedule(config.total_iterations + 500, &config),
            lr_schedule(config.total_iterations, &config)
        );
    }

    #[test]
    fn training_is_deterministic() {
        let ds = generate_synthetic(&SyntheticConfig {
            num_identities: 6,
            samples_per_identity: 4,
            input_dim: 8,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let encoder = crate::encoder::EncoderConfig::with_stages(8, 2);
        let config = TrainConfig {
            identities_per_batch: 3,
            samples_per_identity: 2,
            total_iterations: 30,
            decay_start: 15,
            seed: 5,
            ..TrainConfig::default()
        };
        let (a, trace_a) = train(&ds, &encoder, &config).unwrap();
        let (b, trace_b) = train(&ds, &encoder, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(trace_a, trace_b);
        assert_eq!(trace_a.len(), 30);
    }

    #[test]
    fn invalid_decay_start_is_rejected() {
        let config = TrainConfig {
            decay_start: 0,
            ..TrainConfig::default()
        };
        assert!(config.validate().is_err());
        let config = TrainConfig {
            decay_start: 7000,
            ..TrainConfig::default()
        };
        assert!(config.validate().is_err());
    }
}
