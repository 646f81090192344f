use anyhow::Result;
use clap::Args;
use serde_json::json;

use anchor_uq::benchmarks::suite;

#[derive(Args)]
pub struct BenchArgs {
    /// Emit the listing as JSON instead of a table
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: BenchArgs) -> Result<()> {
    let functions = suite();
    if args.json {
        let entries: Vec<_> = functions
            .iter()
            .map(|f| {
                json!({
                    "name": f.name,
                    "dim": f.dim,
                    "bounds": f.bounds,
                    "known_best": f.known_best.as_ref().map(|b| b.value),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&entries)?);
    } else {
        println!("{:<18} {:>3}  {:<22} {:>14}", "name", "dim", "bounds", "known best");
        for f in &functions {
            let (lo, hi) = f.bounds[0];
            let bounds = if f.bounds.iter().all(|b| *b == (lo, hi)) {
                format!("[{lo}, {hi}]^{}", f.dim)
            } else {
                "per-dimension".to_string()
            };
            let best = f
                .known_best
                .as_ref()
                .map(|b| format!("{:.6}", b.value))
                .unwrap_or_else(|| "unknown".to_string());
            println!("{:<18} {:>3}  {:<22} {:>14}", f.name, f.dim, bounds, best);
        }
    }
    Ok(())
}
