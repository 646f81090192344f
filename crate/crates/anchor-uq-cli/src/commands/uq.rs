use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde_json::json;

use anchor_uq::anchoring::{predict_anchor_ensemble, predict_delta_uq, UncertaintyEstimate};
use anchor_uq::baselines::gp::gp_fit_fixed;
use anchor_uq::baselines::{predict_deep_ensemble, predict_mc_dropout};
use anchor_uq::checkpoint::{load, Checkpointed};
use anchor_uq::data::{normalize_to_unit, Matrix};

use crate::io::{fmt_f64, read_numeric_csv, write_csv};
use crate::manifest::RunManifest;
use crate::settings::{env_seed, resolve, Settings};

#[derive(Args)]
pub struct UqArgs {
    /// Checkpoint directory written by `fit`
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output predictions CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluate on an even 1-D grid of this many points over the training bounds
    #[arg(long, conflicts_with = "queries")]
    pub grid: Option<usize>,
    /// Evaluate on the rows of this CSV (header row, input columns only)
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Anchors used at inference (delta_uq checkpoints)
    #[arg(long, default_value_t = 10)]
    pub anchors: usize,
    /// Seed for the anchor draw / dropout streams
    #[arg(long)]
    pub anchor_seed: Option<u64>,
    /// Stochastic forward passes (mc_dropout checkpoints)
    #[arg(long, default_value_t = 50)]
    pub passes: usize,
    /// Flat key=value config file (flags take precedence)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn bounds_of(model: &Checkpointed) -> &[(f64, f64)] {
    match model {
        Checkpointed::DeltaUq(m) => &m.bounds,
        Checkpointed::AnchorEnsemble(e) => &e.bounds,
        Checkpointed::DeepEnsemble(e) => &e.bounds,
        Checkpointed::McDropout(m) => &m.bounds,
        Checkpointed::Gp(g) => &g.bounds,
    }
}

pub fn run(args: UqArgs) -> Result<()> {
    let settings = Settings::load(args.config.as_deref())?;
    let anchor_seed = resolve(args.anchor_seed, settings.get("anchor_seed")?, env_seed()?);

    let model = load(&args.checkpoint)?;
    let bounds = bounds_of(&model).to_vec();
    let d = bounds.len();

    let queries = match (&args.queries, args.grid) {
        (Some(path), _) => {
            let csv = read_numeric_csv(path)?;
            let q = Matrix::from_rows(&csv.rows)?;
            if q.cols != d {
                bail!("query file has {} columns, checkpoint expects {d}", q.cols);
            }
            q
        }
        (None, Some(n)) => {
            if d != 1 {
                bail!("--grid only supports 1-D checkpoints; pass --queries for {d}-D inputs");
            }
            if n < 2 {
                bail!("--grid needs at least 2 points");
            }
            let (lo, hi) = bounds[0];
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64])
                .collect();
            Matrix::from_rows(&rows)?
        }
        (None, None) => bail!("one of --grid or --queries is required"),
    };

    let config = json!({
        "checkpoint": args.checkpoint,
        "grid": args.grid,
        "queries": args.queries,
        "anchors": args.anchors,
        "anchor_seed": anchor_seed,
        "passes": args.passes,
    });
    let manifest_path = manifest_path_for(&args.out);
    RunManifest::new("uq", config, vec![anchor_seed], vec![args.out.clone()])
        .write(&manifest_path)?;

    let estimates: Vec<UncertaintyEstimate> = match &model {
        Checkpointed::DeltaUq(m) => {
            if args.anchors == 0 {
                bail!("--anchors must be at least 1");
            }
            let anchors = m.sample_anchors(args.anchors, anchor_seed);
            predict_delta_uq(m, &queries, &anchors)?
        }
        Checkpointed::AnchorEnsemble(e) => predict_anchor_ensemble(e, &queries)?,
        Checkpointed::DeepEnsemble(e) => predict_deep_ensemble(e, &queries)?,
        Checkpointed::McDropout(m) => predict_mc_dropout(m, &queries, args.passes, anchor_seed)?,
        Checkpointed::Gp(g) => {
            let gp = gp_fit_fixed(&g.x, &g.y, g.hypers)?;
            let norm = normalize_to_unit(&queries, &g.bounds);
            gp.predict(&norm)?
        }
    };

    let m_out = estimates[0].mean.len();
    let mut headers: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    headers.extend((0..m_out).map(|j| format!("mu{j}")));
    headers.extend((0..m_out).map(|j| format!("sigma{j}")));
    let rows: Vec<Vec<String>> = queries
        .iter_rows()
        .zip(&estimates)
        .map(|(x, est)| {
            let mut row: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
            row.extend(est.mean.iter().map(|&v| fmt_f64(v)));
            match &est.std {
                // A single anchor/member carries no spread estimate.
                None => row.extend(std::iter::repeat_n("NA".to_string(), m_out)),
                Some(sigma) => row.extend(sigma.iter().map(|&v| fmt_f64(v))),
            }
            row
        })
        .collect();
    write_csv(&args.out, &headers, &rows)?;
    println!("{} predictions written to {}", rows.len(), args.out.display());
    Ok(())
}

pub fn manifest_path_for(out: &std::path::Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}
