use anyhow::{bail, Result};
use clap::Args;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

use dare_core::budget::{
    route_and_identify_stream, stream_exit_table, ExitPolicy, RoutingStrategy, StreamState,
};
use dare_core::retrieval::MatchFilter;

use crate::commands::TableSource;
use crate::{fmt, parse_f64_list, write_csv, SplitArgs};

#[derive(Args, Debug)]
pub struct StreamArgs {
    #[command(flatten)]
    pub source: TableSource,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Routing strategy: random, distance, or margin.
    #[arg(long)]
    pub strategy: String,
    /// Output CSV, one row per operating point.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated exit-parameter grid.
    #[arg(long)]
    pub a_grid: Option<String>,
    /// Comma-separated per-query budget grid; solved to exit parameters.
    #[arg(long)]
    pub budget_grid: Option<String>,
    /// Stream length; the query split is shuffled and resampled with
    /// replacement to this length (0 = one shuffled pass, no resampling).
    #[arg(long, default_value_t = 0)]
    pub stream_len: usize,
    /// Scores recorded per stage before quantile routing takes over.
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    /// Pretend gallery identities are unknown at routing time.
    #[arg(long)]
    pub assume_unlabeled_gallery: bool,
    #[arg(long)]
    pub exclude_same_camera: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: StreamArgs) -> Result<()> {
    let strategy: RoutingStrategy = args.strategy.parse::<RoutingStrategy>()?;
    let (query_full, gallery_full) = args.source.resolve(&args.split, args.seed)?;
    let queries = stream_exit_table(&query_full)?;
    let gallery = stream_exit_table(&gallery_full)?;
    let filter = MatchFilter {
        exclude_same_camera: args.exclude_same_camera,
    };

    // Assemble the arrival order: shuffled, optionally bootstrap-resampled.
    let mut order_rng = ChaCha8Rng::seed_from_u64(args.seed);
    order_rng.set_stream(2);
    let order: Vec<usize> = if args.stream_len == 0 {
        let mut idx: Vec<usize> = (0..queries.num_rows()).collect();
        idx.shuffle(&mut order_rng);
        idx
    } else {
        (0..args.stream_len)
            .map(|_| order_rng.gen_range(0..queries.num_rows()))
            .collect()
    };
    let stream = queries.select_rows(&order)?;

    // Operating points: (a, target budget per query).
    let costs = stream.costs().to_vec();
    let points: Vec<(f64, f64)> = match (&args.a_grid, &args.budget_grid) {
        (Some(_), Some(_)) => bail!("provide --a-grid or --budget-grid, not both"),
        (Some(list), None) => parse_f64_list(list)?
            .into_iter()
            .map(|a| {
                let policy = ExitPolicy::from_parameter(a, &costs)?;
                Ok((a, policy.expected_cost()))
            })
            .collect::<Result<_>>()?,
        (None, Some(list)) => parse_f64_list(list)?
            .into_iter()
            .map(|budget| {
                let policy = ExitPolicy::from_budget(budget, &costs)?;
                Ok((policy.parameter(), budget))
            })
            .collect::<Result<_>>()?,
        (None, None) => bail!("provide an operating grid via --a-grid or --budget-grid"),
    };

    let routing_labels = if args.assume_unlabeled_gallery {
        None
    } else {
        Some(gallery.labels().to_vec())
    };
    eprintln!(
        "stream: {} queries, strategy {}, {} operating point(s), warmup {}, exits {:?}, seed {}",
        stream.num_rows(),
        strategy.name(),
        points.len(),
        args.warmup,
        costs,
        args.seed
    );

    let exits = stream.num_stages();
    let mut rows = Vec::with_capacity(points.len());
    for (i, &(a, target_budget)) in points.iter().enumerate() {
        let policy = ExitPolicy::from_parameter(a, &costs)?;
        let mut state = StreamState::new(exits, args.warmup, args.seed.wrapping_add(i as u64));
        let outcome = route_and_identify_stream(
            &stream,
            &gallery,
            &policy,
            strategy,
            &mut state,
            routing_labels.as_deref(),
            filter,
        )?;
        let mut row = vec![
            fmt(a),
            fmt(target_budget),
            fmt(outcome.mean_cost),
            fmt(outcome.cmc1.value),
            fmt(outcome.map.value),
        ];
        row.extend(outcome.exit_fractions.iter().map(|f| fmt(*f)));
        rows.push(row);
    }

    let frac_cols: Vec<String> = (1..=exits).map(|s| format!("exit_frac_{s}")).collect();
    let header = format!("a,target_budget,realized_cost,cmc1,map,{}", frac_cols.join(","));
    write_csv(&args.out, &header, &rows)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}
