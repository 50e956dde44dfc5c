//! Command-line front end: reproducible generation, training, evaluation,
//! and budget experiments with CSV artifacts.
//!
//! Every command is deterministic given `--seed`, echoes its resolved
//! configuration to stderr, and writes line-oriented artifacts whose
//! float formatting round-trips exactly. Worker threads are capped by
//! the `DARE_THREADS` environment variable (0 = auto).

mod commands;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "dare", version, about = "Staged-embedding identity retrieval under compute budgets")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic identity dataset file.
    GenData(commands::gen_data::GenDataArgs),
    /// Train an encoder on the train split of a dataset.
    Train(commands::train::TrainCmdArgs),
    /// Embed a dataset with a trained checkpoint into a table file.
    Embed(commands::embed::EmbedArgs),
    /// Per-stage and fused CMC/mAP report.
    Eval(commands::eval::EvalArgs),
    /// Accuracy-vs-budget sweep under the anytime protocol.
    Anytime(commands::anytime::AnytimeArgs),
    /// Budgeted-stream sweep across exit policies and routing strategies.
    Stream(commands::stream::StreamArgs),
    /// Solve the exit parameter for a per-query budget.
    SolveBudget(commands::solve_budget::SolveBudgetArgs),
}

/// Shared dataset-split flags.
#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Fraction of identities assigned to the train split.
    #[arg(long, default_value_t = 0.5)]
    pub train_frac: f64,
    /// Queries held out per test identity.
    #[arg(long, default_value_t = 4)]
    pub query_per_id: usize,
    /// Seed for the identity split; defaults to --seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

impl SplitArgs {
    pub fn split(
        &self,
        ds: &dare_core::dataset::IdentityDataset,
        seed: u64,
    ) -> dare_core::Result<dare_core::dataset::DatasetSplit> {
        dare_core::dataset::split_dataset(
            ds,
            self.train_frac,
            self.query_per_id,
            self.split_seed.unwrap_or(seed),
        )
    }

    fn echo(&self, seed: u64) -> String {
        format!(
            "train_frac {} query_per_id {} split_seed {}",
            self.train_frac,
            self.query_per_id,
            self.split_seed.unwrap_or(seed)
        )
    }
}

/// Shared encoder-shape flags.
#[derive(Args, Debug, Clone)]
pub struct EncoderArgs {
    #[arg(long, default_value_t = 4)]
    pub stages: usize,
    /// Comma-separated backbone widths; default ramps from half the
    /// input width to the full width.
    #[arg(long)]
    pub widths: Option<String>,
    #[arg(long, default_value_t = 64)]
    pub head_hidden: usize,
    #[arg(long, default_value_t = 16)]
    pub embedding_dim: usize,
}

impl EncoderArgs {
    pub fn build(&self, input_dim: usize) -> Result<dare_core::encoder::EncoderConfig> {
        let mut config = dare_core::encoder::EncoderConfig::with_stages(input_dim, self.stages);
        config.head_hidden_width = self.head_hidden;
        config.embedding_dim = self.embedding_dim;
        if let Some(widths) = &self.widths {
            config.backbone_widths = parse_usize_list(widths)?;
            config.num_stages = config.backbone_widths.len();
        }
        config.validate()?;
        Ok(config)
    }
}

pub(crate) fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| anyhow::anyhow!("invalid integer '{t}'"))
        })
        .collect()
}

pub(crate) fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| anyhow::anyhow!("invalid number '{t}'"))
        })
        .collect()
}

/// Writes a CSV artifact: header row then records, LF line endings.
pub(crate) fn write_csv(path: &PathBuf, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Runs the CLI on explicit arguments; the binary passes `std::env::args`.
pub fn run<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    match cli.command {
        Command::GenData(args) => commands::gen_data::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Embed(args) => commands::embed::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Anytime(args) => commands::anytime::run(args),
        Command::Stream(args) => commands::stream::run(args),
        Command::SolveBudget(args) => commands::solve_budget::run(args),
    }
}
