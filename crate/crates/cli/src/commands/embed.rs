use anyhow::Result;
use clap::{Args, ValueEnum};
use std::path::PathBuf;

use dare_core::budget::embed_dataset;
use dare_core::encoder::load_params;
use dare_core::table::{load_dataset, save_embedding_table};

use crate::SplitArgs;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbedSplit {
    All,
    Train,
    Query,
    Gallery,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output embedding-table file; blocks are stages 1..S then fusion.
    #[arg(long)]
    pub out: PathBuf,
    /// Which part of the dataset to embed.
    #[arg(long, value_enum, default_value_t = EmbedSplit::All)]
    pub split: EmbedSplit,
    #[command(flatten)]
    pub split_args: SplitArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: EmbedArgs) -> Result<()> {
    let params = load_params(&args.checkpoint)?;
    let ds = load_dataset(&args.data)?;
    let subset = match args.split {
        EmbedSplit::All => ds,
        other => {
            let parts = args.split_args.split(&ds, args.seed)?;
            match other {
                EmbedSplit::Train => parts.train,
                EmbedSplit::Query => parts.query,
                EmbedSplit::Gallery => parts.gallery,
                EmbedSplit::All => unreachable!(),
            }
        }
    };
    eprintln!(
        "embed: {} samples at {} stages plus fusion (split {:?}, seed {})",
        subset.len(),
        params.config.num_stages,
        args.split,
        args.seed
    );
    let table = embed_dataset(&params, &subset)?;
    save_embedding_table(&table, &args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}
