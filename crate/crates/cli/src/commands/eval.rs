use anyhow::Result;
use clap::Args;
use std::path::PathBuf;

use dare_core::retrieval::{evaluate, rank_all, MatchFilter};

use crate::commands::{block_label, TableSource};
use crate::{fmt, write_csv, SplitArgs};

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: TableSource,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Output CSV with metric,stage,value rows.
    #[arg(long)]
    pub out: PathBuf,
    /// Drop gallery items sharing both identity and camera with the query.
    #[arg(long)]
    pub exclude_same_camera: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let (queries, gallery) = args.source.resolve(&args.split, args.seed)?;
    let filter = MatchFilter {
        exclude_same_camera: args.exclude_same_camera,
    };
    eprintln!(
        "eval: {} queries vs {} gallery rows over {} blocks (exclude_same_camera {}, seed {})",
        queries.num_rows(),
        gallery.num_rows(),
        queries.num_stages(),
        args.exclude_same_camera,
        args.seed
    );
    let mut rows = Vec::new();
    let blocks = queries.num_stages();
    let mut block_metrics = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let results = rank_all(
            queries.stage(b),
            queries.labels(),
            queries.cameras(),
            gallery.stage(b),
            gallery.labels(),
            gallery.cameras(),
            filter,
        )?;
        let (cmc1, map) = evaluate(&results)?;
        if cmc1.excluded_queries > 0 {
            eprintln!(
                "block {}: {} query(ies) had no gallery match and were excluded",
                block_label(b, blocks),
                cmc1.excluded_queries
            );
        }
        block_metrics.push((cmc1.value, map.value));
    }
    for (b, (cmc1, _)) in block_metrics.iter().enumerate() {
        rows.push(vec!["cmc1".into(), block_label(b, blocks), fmt(*cmc1)]);
    }
    for (b, (_, map)) in block_metrics.iter().enumerate() {
        rows.push(vec!["map".into(), block_label(b, blocks), fmt(*map)]);
    }
    write_csv(&args.out, "metric,stage,value", &rows)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}
