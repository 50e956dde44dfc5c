use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use std::path::PathBuf;

use dare_core::budget::{anytime_sweep, train_sequential_ensemble};
use dare_core::encoder::EncoderConfig;
use dare_core::retrieval::MatchFilter;
use dare_core::table::load_dataset;
use dare_core::training::TrainConfig;

use crate::commands::{block_label, TableSource};
use crate::{fmt, parse_f64_list, write_csv, EncoderArgs, SplitArgs};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    SequentialEnsemble,
}

#[derive(Args, Debug)]
pub struct AnytimeArgs {
    #[command(flatten)]
    pub source: TableSource,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    /// Output CSV with budget,cmc1,map,stage rows.
    #[arg(long)]
    pub out: PathBuf,
    /// Explicit comma-separated budget grid (Mul-Adds).
    #[arg(long)]
    pub budgets: Option<String>,
    /// Evenly spaced budget count when --budgets is absent; exact exit
    /// costs are always included.
    #[arg(long, default_value_t = 48)]
    pub budget_steps: usize,
    /// Sweep a baseline instead of the staged encoder.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Ensemble training length per member (baseline only).
    #[arg(long, default_value_t = 6000)]
    pub iterations: u64,
    #[arg(long)]
    pub exclude_same_camera: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn budget_grid(args: &AnytimeArgs, exit_costs: &[f64]) -> Result<Vec<f64>> {
    if let Some(list) = &args.budgets {
        return parse_f64_list(list);
    }
    if args.budget_steps < 2 {
        bail!("--budget-steps must be at least 2");
    }
    let lo = exit_costs[0] * 0.8;
    let hi = exit_costs.last().unwrap() * 1.1;
    let mut grid: Vec<f64> = (0..args.budget_steps)
        .map(|i| lo + (hi - lo) * i as f64 / (args.budget_steps - 1) as f64)
        .collect();
    grid.extend_from_slice(exit_costs);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    Ok(grid)
}

pub fn run(args: AnytimeArgs) -> Result<()> {
    let filter = MatchFilter {
        exclude_same_camera: args.exclude_same_camera,
    };
    let (queries, gallery, fusion_last) = match args.baseline {
        None => {
            let (q, g) = args.source.resolve(&args.split, args.seed)?;
            (q, g, true)
        }
        Some(Baseline::SequentialEnsemble) => {
            let Some(data) = &args.source.data else {
                bail!("--baseline sequential-ensemble requires --data");
            };
            let ds = load_dataset(data)?;
            let parts = args.split.split(&ds, args.seed)?;
            let member_configs: Vec<EncoderConfig> = (2..=args.encoder.stages.max(2))
                .map(|s| {
                    let mut c = EncoderConfig::with_stages(ds.dim(), s);
                    c.head_hidden_width = args.encoder.head_hidden;
                    c.embedding_dim = args.encoder.embedding_dim;
                    c
                })
                .collect();
            let train_config = TrainConfig {
                deep_supervision: false,
                seed: args.seed,
                ..TrainConfig::with_iterations(args.iterations)
            };
            eprintln!(
                "anytime baseline: sequential ensemble of {} members, {} iterations each, seed {}",
                member_configs.len(),
                args.iterations,
                args.seed
            );
            let (ensemble, _) =
                train_sequential_ensemble(&member_configs, &parts.train, &train_config)?;
            let q = ensemble.embed(&parts.query)?;
            let g = ensemble.embed(&parts.gallery)?;
            (q, g, false)
        }
    };

    let grid = budget_grid(&args, gallery.costs())?;
    eprintln!(
        "anytime: {} budgets over exits {:?} (seed {})",
        grid.len(),
        gallery.costs(),
        args.seed
    );
    let rows = anytime_sweep(&queries, &gallery, &grid, filter)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let stage = match r.exit {
                None => "none".to_string(),
                Some(b) if fusion_last => block_label(b, gallery.num_stages()),
                Some(b) => (b + 1).to_string(),
            };
            vec![fmt(r.budget), fmt(r.cmc1), fmt(r.map), stage]
        })
        .collect();
    write_csv(&args.out, "budget,cmc1,map,stage", &csv_rows)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}
