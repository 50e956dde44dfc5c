use anyhow::Result;
use clap::Args;
use std::path::PathBuf;

use dare_core::dataset::{generate_synthetic, SyntheticConfig};
use dare_core::table::save_dataset;

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 64)]
    pub ids: usize,
    #[arg(long, default_value_t = 8)]
    pub samples_per_id: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub easy_fraction: f64,
    #[arg(long, default_value_t = 8.0)]
    pub coarse_margin: f64,
    #[arg(long, default_value_t = 4.0)]
    pub fine_margin: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: GenDataArgs) -> Result<()> {
    let config = SyntheticConfig {
        num_identities: args.ids,
        samples_per_identity: args.samples_per_id,
        input_dim: args.dim,
        easy_fraction: args.easy_fraction,
        coarse_margin: args.coarse_margin,
        fine_margin: args.fine_margin,
        noise_sigma: args.noise_sigma,
        seed: args.seed,
    };
    eprintln!(
        "gen-data: ids {} samples_per_id {} dim {} easy_fraction {} coarse {} fine {} sigma {} seed {}",
        config.num_identities,
        config.samples_per_identity,
        config.input_dim,
        config.easy_fraction,
        config.coarse_margin,
        config.fine_margin,
        config.noise_sigma,
        config.seed
    );
    let ds = generate_synthetic(&config)?;
    save_dataset(&ds, &args.out)?;
    eprintln!("wrote {} samples to {}", ds.len(), args.out.display());
    Ok(())
}
