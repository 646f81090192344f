use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::{json, Map, Value};

use anchor_uq::metrics::{auroc, aupr_in, aupr_out, brier, dtacc, ece, nll_detailed};

use crate::commands::uq::manifest_path_for;
use crate::manifest::RunManifest;
use crate::settings::{resolve, Settings};

#[derive(Args)]
pub struct MetricsArgs {
    /// Outlier-score CSV with columns `score,label` (label: 0 = inlier, 1 = outlier)
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Probability CSV with columns `p0..p{C-1},label` (label: true class index)
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Output JSON report
    #[arg(long)]
    pub out: PathBuf,
    /// Confidence bins for ECE
    #[arg(long)]
    pub bins: Option<usize>,
    /// Flat key=value config file (flags take precedence)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: MetricsArgs) -> Result<()> {
    let settings = Settings::load(args.config.as_deref())?;
    let bins = resolve(args.bins, settings.get("bins")?, 15);
    if args.scores.is_none() && args.probs.is_none() {
        bail!("at least one of --scores or --probs is required");
    }

    let config = json!({
        "scores": args.scores,
        "probs": args.probs,
        "bins": bins,
    });
    RunManifest::new("metrics", config, vec![], vec![args.out.clone()])
        .write(&manifest_path_for(&args.out))?;

    let mut report = Map::new();

    if let Some(path) = &args.scores {
        let csv = crate::io::read_numeric_csv(path)?;
        if csv.headers.len() != 2 {
            bail!("{}: expected exactly 2 columns (score,label)", path.display());
        }
        let scores: Vec<f64> = csv.rows.iter().map(|r| r[0]).collect();
        let labels: Vec<bool> = csv
            .rows
            .iter()
            .map(|r| match r[1] {
                v if v == 0.0 => Ok(false),
                v if v == 1.0 => Ok(true),
                v => bail!("{}: label {v} is neither 0 nor 1", path.display()),
            })
            .collect::<Result<_>>()?;
        let err = |e: anchor_uq::Error| anyhow::anyhow!("{e}");
        report.insert("auroc".into(), json!(auroc(&scores, &labels).map_err(err)?));
        report.insert("dtacc".into(), json!(dtacc(&scores, &labels).map_err(err)?));
        report.insert(
            "aupr_in".into(),
            json!(aupr_in(&scores, &labels).map_err(err)?),
        );
        report.insert(
            "aupr_out".into(),
            json!(aupr_out(&scores, &labels).map_err(err)?),
        );
    }

    if let Some(path) = &args.probs {
        let csv = crate::io::read_numeric_csv(path)?;
        if csv.headers.len() < 3 {
            bail!(
                "{}: expected at least 3 columns (p0,p1,...,label)",
                path.display()
            );
        }
        let c = csv.headers.len() - 1;
        let probs: Vec<Vec<f64>> = csv.rows.iter().map(|r| r[..c].to_vec()).collect();
        let labels: Vec<usize> = csv
            .rows
            .iter()
            .map(|r| {
                let raw = r[c];
                if raw.fract() != 0.0 || raw < 0.0 {
                    bail!("{}: label {raw} is not a class index", path.display());
                }
                Ok(raw as usize)
            })
            .collect::<Result<_>>()?;
        let err = |e: anchor_uq::Error| anyhow::anyhow!("{e}");
        report.insert("ece".into(), json!(ece(&probs, &labels, bins).map_err(err)?));
        let (nll_value, clamped) = nll_detailed(&probs, &labels).map_err(err)?;
        report.insert("nll".into(), json!(nll_value));
        report.insert("nll_clamped_samples".into(), json!(clamped));
        report.insert("brier".into(), json!(brier(&probs, &labels).map_err(err)?));
    }

    let report = Value::Object(report);
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&args.out, &text)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!("{text}");
    Ok(())
}
