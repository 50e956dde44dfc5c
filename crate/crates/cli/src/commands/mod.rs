pub mod anytime;
pub mod embed;
pub mod eval;
pub mod gen_data;
pub mod solve_budget;
pub mod stream;
pub mod train;

use anyhow::{bail, Result};
use clap::Args;
use std::path::PathBuf;

use dare_core::budget::embed_dataset;
use dare_core::encoder::load_params;
use dare_core::table::{load_dataset, load_embedding_table, EmbeddingTable};

use crate::SplitArgs;

/// Query/gallery embedding tables for the budget and eval commands,
/// either computed from a checkpoint plus a dataset's test split, or
/// loaded from table files produced by `embed` (where the last block is
/// the fused embedding).
#[derive(Args, Debug, Clone)]
pub struct TableSource {
    /// Trained checkpoint; requires --data.
    #[arg(long, requires = "data", conflicts_with_all = ["query_table", "gallery_table"])]
    pub checkpoint: Option<PathBuf>,
    /// Dataset file; its test split supplies queries and gallery.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Precomputed query table; requires --gallery-table.
    #[arg(long, requires = "gallery_table")]
    pub query_table: Option<PathBuf>,
    /// Precomputed gallery table.
    #[arg(long)]
    pub gallery_table: Option<PathBuf>,
}

impl TableSource {
    /// Resolves to (query table, gallery table) with stage blocks plus a
    /// final fusion block.
    pub fn resolve(&self, split: &SplitArgs, seed: u64) -> Result<(EmbeddingTable, EmbeddingTable)> {
        match (&self.checkpoint, &self.data, &self.query_table, &self.gallery_table) {
            (Some(ckpt), Some(data), None, None) => {
                let params = load_params(ckpt)?;
                let ds = load_dataset(data)?;
                let parts = split.split(&ds, seed)?;
                eprintln!("split: {}", split.echo(seed));
                let query = embed_dataset(&params, &parts.query)?;
                let gallery = embed_dataset(&params, &parts.gallery)?;
                Ok((query, gallery))
            }
            (None, None, Some(qt), Some(gt)) => {
                Ok((load_embedding_table(qt)?, load_embedding_table(gt)?))
            }
            _ => bail!("provide either --checkpoint with --data, or --query-table with --gallery-table"),
        }
    }
}

/// Stage label for a table block: blocks before the last are numbered
/// stages, the last block is the fused embedding.
pub fn block_label(block: usize, total_blocks: usize) -> String {
    if block + 1 == total_blocks {
        "fusion".to_string()
    } else {
        (block + 1).to_string()
    }
}
