use anyhow::Result;
use clap::Args;
use std::path::PathBuf;

use dare_core::encoder::save_params;
use dare_core::table::load_dataset;
use dare_core::training::{train, TrainConfig};

use crate::{fmt, write_csv, EncoderArgs, SplitArgs};

#[derive(Args, Debug)]
pub struct TrainCmdArgs {
    /// Input dataset file; training uses its train split.
    #[arg(long)]
    pub data: PathBuf,
    /// Output checkpoint file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-iteration loss trace CSV.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,

    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub split: SplitArgs,

    /// P: identities per batch.
    #[arg(long, default_value_t = 18)]
    pub p: usize,
    /// K: samples per identity per batch.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 6000)]
    pub iterations: u64,
    /// Iteration where LR decay and the beta1 drop begin; defaults to
    /// half the total.
    #[arg(long)]
    pub decay_start: Option<u64>,
    #[arg(long, default_value_t = 3e-4)]
    pub base_lr: f64,
    /// Train with the fusion loss only (ablation).
    #[arg(long)]
    pub no_deep_supervision: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: TrainCmdArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let split = args.split.split(&ds, args.seed)?;
    let encoder_config = args.encoder.build(ds.dim())?;
    let config = TrainConfig {
        identities_per_batch: args.p,
        samples_per_identity: args.k,
        total_iterations: args.iterations,
        decay_start: args.decay_start.unwrap_or((args.iterations / 2).max(1)),
        base_lr: args.base_lr,
        deep_supervision: !args.no_deep_supervision,
        seed: args.seed,
        ..TrainConfig::default()
    };
    eprintln!(
        "train: stages {} widths {:?} head_hidden {} embed {} | P {} K {} iters {} decay_start {} lr {} deep_supervision {} seed {}",
        encoder_config.num_stages,
        encoder_config.backbone_widths,
        encoder_config.head_hidden_width,
        encoder_config.embedding_dim,
        config.identities_per_batch,
        config.samples_per_identity,
        config.total_iterations,
        config.decay_start,
        config.base_lr,
        config.deep_supervision,
        config.seed
    );
    let (params, trace) = train(&split.train, &encoder_config, &config)?;
    save_params(&params, &args.out)?;
    eprintln!(
        "trained on {} samples ({} identities); wrote {}",
        split.train.len(),
        split.train.identities().len(),
        args.out.display()
    );
    if let Some(path) = &args.loss_csv {
        let rows: Vec<Vec<String>> = trace
            .iter()
            .map(|p| vec![p.iteration.to_string(), fmt(p.loss), fmt(p.lr)])
            .collect();
        write_csv(path, "iteration,loss,lr", &rows)?;
        eprintln!("wrote loss trace to {}", path.display());
    }
    Ok(())
}
