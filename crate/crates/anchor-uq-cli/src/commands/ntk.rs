use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;

use anchor_uq::ntk::{kernel_spectrum, ntk_slice_on_grid, rbf_slice_on_grid};

use crate::io::{fmt_f64, parse_f64_list, write_csv};
use crate::manifest::RunManifest;
use crate::settings::{resolve, Settings};

#[derive(Args)]
pub struct NtkArgs {
    /// Comma-separated input-domain shifts, e.g. 0,0.3,0.6
    #[arg(long)]
    pub shifts: String,
    /// Output directory, one spectrum CSV per shift
    #[arg(long)]
    pub out: PathBuf,
    /// Grid resolution (power of two)
    #[arg(long)]
    pub grid: Option<usize>,
    /// Also emit spectra of a shift-invariant RBF control with this lengthscale
    #[arg(long)]
    pub rbf_lengthscale: Option<f64>,
    /// Flat key=value config file (flags take precedence)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: NtkArgs) -> Result<()> {
    let settings = Settings::load(args.config.as_deref())?;
    let grid = resolve(args.grid, settings.get("grid")?, 256);
    if !grid.is_power_of_two() {
        bail!("--grid must be a power of two for the FFT, got {grid}");
    }
    let shifts = parse_f64_list(&args.shifts)?;
    if shifts.is_empty() {
        bail!("--shifts must list at least one value");
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let config = json!({
        "shifts": shifts,
        "grid": grid,
        "rbf_lengthscale": args.rbf_lengthscale,
    });
    RunManifest::new("ntk", config, vec![], vec![args.out.clone()])
        .write(&args.out.join("run_manifest.json"))?;

    for &shift in &shifts {
        let slice = ntk_slice_on_grid(grid, shift).map_err(|e| anyhow::anyhow!("{e}"))?;
        let spectrum = kernel_spectrum(&slice, shift).map_err(|e| anyhow::anyhow!("{e}"))?;
        let rows: Vec<Vec<String>> = spectrum
            .magnitudes
            .iter()
            .zip(&spectrum.frequencies)
            .map(|(&p, &f)| vec![fmt_f64(f), fmt_f64(p)])
            .collect();
        let path = args.out.join(format!("ntk_spectrum_shift_{shift}.csv"));
        write_csv(&path, &["frequency".to_string(), "magnitude".to_string()], &rows)?;

        if let Some(ls) = args.rbf_lengthscale {
            let slice = rbf_slice_on_grid(grid, shift, ls);
            let spectrum = kernel_spectrum(&slice, shift).map_err(|e| anyhow::anyhow!("{e}"))?;
            let rows: Vec<Vec<String>> = spectrum
                .magnitudes
                .iter()
                .zip(&spectrum.frequencies)
                .map(|(&p, &f)| vec![fmt_f64(f), fmt_f64(p)])
                .collect();
            let path = args.out.join(format!("rbf_spectrum_shift_{shift}.csv"));
            write_csv(&path, &["frequency".to_string(), "magnitude".to_string()], &rows)?;
        }
    }
    println!(
        "{} spectra written to {}",
        shifts.len() * if args.rbf_lengthscale.is_some() { 2 } else { 1 },
        args.out.display()
    );
    Ok(())
}
