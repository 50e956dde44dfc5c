use anyhow::Result;
use clap::Args;

use dare_core::budget::{exit_distribution, expected_cost, solve_a_for_budget};

use crate::parse_f64_list;

#[derive(Args, Debug)]
pub struct SolveBudgetArgs {
    /// Comma-separated per-stage exit costs, strictly increasing.
    #[arg(long)]
    pub costs: String,
    /// Per-query budget to hit in expectation.
    #[arg(long)]
    pub budget: f64,
}

pub fn run(args: SolveBudgetArgs) -> Result<()> {
    let costs = parse_f64_list(&args.costs)?;
    eprintln!("solve-budget: costs {:?} budget {}", costs, args.budget);
    let a = solve_a_for_budget(args.budget, &costs)?;
    if a.is_infinite() {
        println!("a = inf");
        eprintln!("budget covers the deepest exit; every query traverses fully");
        return Ok(());
    }
    let p = exit_distribution(a, costs.len())?;
    println!("a = {a}");
    eprintln!(
        "expected cost {} | exit distribution {:?}",
        expected_cost(&p, &costs),
        p
    );
    Ok(())
}
