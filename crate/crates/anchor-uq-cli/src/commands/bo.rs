use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use anchor_uq::benchmarks::{BlackboxFunction, FunctionId};
use anchor_uq::nn::PeLadder;
use anchor_uq::seqopt::{
    auc_score, median, run_bo, trial_seeds, BoConfig, BoTrace, ProposeConfig, SurrogateConfig,
    SurrogateKind,
};

use crate::io::{fmt_f64, parse_u64_list, parse_usize_list, write_csv, write_json_pretty};
use crate::manifest::RunManifest;
use crate::settings::{env_seed, resolve, Settings};

#[derive(Args)]
pub struct BoArgs {
    /// Benchmark function name (see `bench`)
    #[arg(long)]
    pub function: String,
    /// Dimension for the scalable functions (ackley, griewank, levy)
    #[arg(long)]
    pub dim: Option<usize>,
    /// Comma-separated surrogates: delta_uq,anchor_ensemble,deep_ensemble,mc_dropout,gp
    #[arg(long, default_value = "delta_uq,gp")]
    pub surrogate: String,
    /// Output directory for traces and the summary
    #[arg(long)]
    pub out: PathBuf,
    /// Continue a previous run in --out; the configuration must match
    #[arg(long)]
    pub resume: bool,
    /// Worker threads for independent sweep cells
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Flat key=value config file (flags take precedence)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub init: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Comma-separated run seeds, one optimization trace per seed
    #[arg(long)]
    pub seeds: Option<String>,
    /// Independent repeats per seed; each repeat gets a derived run seed
    #[arg(long)]
    pub trials: Option<usize>,
    /// Candidate pool size per proposal
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub refine_steps: Option<usize>,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Uniform probe size for the AUC normalization range
    #[arg(long)]
    pub probe: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Minibatch size for the network surrogates
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden layer widths for the network surrogates, e.g. 64,64
    #[arg(long)]
    pub hidden: Option<String>,
    /// Sinusoidal positional-embedding frequencies for the network surrogates
    #[arg(long)]
    pub pe_frequencies: Option<usize>,
    /// Dropout rate for the MC-dropout surrogate
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Train-time Gaussian anchor corruption for the anchored surrogate (0 = off)
    #[arg(long)]
    pub anchor_noise: Option<f64>,
    /// Positional-embedding frequency ladder: octave (2^k pi) or linear ((k+1) pi)
    #[arg(long)]
    pub pe_ladder: Option<String>,
}

#[derive(Debug, Serialize)]
struct SurrogateSummary {
    surrogate: String,
    aucs: Vec<f64>,
    best_values: Vec<f64>,
    mean_auc: f64,
    median_auc: f64,
    std_auc: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    function: String,
    dim: usize,
    f_range: (f64, f64),
    surrogates: Vec<SurrogateSummary>,
    failed_cells: Vec<String>,
}

/// Natural dimension when --dim is omitted.
fn default_dim(id: FunctionId) -> usize {
    match id {
        FunctionId::MultiOptima => 1,
        FunctionId::Hartmann3 => 3,
        FunctionId::Hartmann6 => 6,
        _ => 2,
    }
}

fn trace_path(dir: &Path, surrogate: SurrogateKind, seed: u64) -> PathBuf {
    dir.join(format!("trace_{}_seed{}.csv", surrogate.name(), seed))
}

fn write_trace(path: &Path, trace: &BoTrace) -> Result<()> {
    let d = trace.steps.first().map(|s| s.x.len()).unwrap_or(0);
    let mut headers = vec!["step".to_string(), "proposed".to_string()];
    headers.extend((0..d).map(|j| format!("x{j}")));
    headers.push("y".to_string());
    headers.push("best_so_far".to_string());
    let rows: Vec<Vec<String>> = trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = vec![i.to_string(), (s.proposed as u8).to_string()];
            row.extend(s.x.iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(s.y));
            row.push(fmt_f64(s.best_so_far));
            row
        })
        .collect();
    write_csv(path, &headers, &rows)
}

/// Reads back a completed trace's post-init best-so-far series, or None if
/// the file is absent or truncated (the cell then reruns).
fn read_trace_best(path: &Path, expected_rows: usize) -> Option<(Vec<f64>, f64)> {
    let csv = crate::io::read_numeric_csv(path).ok()?;
    if csv.rows.len() != expected_rows {
        return None;
    }
    let proposed_col = csv.headers.iter().position(|h| h == "proposed")?;
    let best_col = csv.headers.iter().position(|h| h == "best_so_far")?;
    let post: Vec<f64> = csv
        .rows
        .iter()
        .filter(|r| r[proposed_col] != 0.0)
        .map(|r| r[best_col])
        .collect();
    let overall = csv.rows.last()?[best_col];
    Some((post, overall))
}

pub fn run(args: BoArgs) -> Result<()> {
    let settings = Settings::load(args.config.as_deref())?;
    let init = resolve(args.init, settings.get("init")?, 5);
    let steps = resolve(args.steps, settings.get("steps")?, 25);
    let pool = resolve(args.pool, settings.get("pool")?, 2000);
    let restarts = resolve(args.restarts, settings.get("restarts")?, 15);
    let refine_steps = resolve(args.refine_steps, settings.get("refine_steps")?, 50);
    let xi = resolve(args.xi, settings.get("xi")?, 0.01);
    let probe = resolve(args.probe, settings.get("probe")?, 100_000);
    let epochs = resolve(args.epochs, settings.get("epochs")?, 600);
    let learning_rate = resolve(args.learning_rate, settings.get("learning_rate")?, 1e-3);
    let batch_size = resolve(args.batch_size, settings.get("batch_size")?, 32);
    let hidden_raw = args
        .hidden
        .or_else(|| settings.get_string("hidden"))
        .unwrap_or_else(|| "64,64".to_string());
    let hidden = parse_usize_list(&hidden_raw)?;
    let pe_frequencies = resolve(args.pe_frequencies, settings.get("pe_frequencies")?, 1);
    let dropout = resolve(args.dropout, settings.get("dropout")?, 0.2);
    let anchor_noise = resolve(args.anchor_noise, settings.get("anchor_noise")?, 0.0);
    let pe_ladder_raw = args
        .pe_ladder
        .or_else(|| settings.get_string("pe_ladder"))
        .unwrap_or_else(|| "octave".to_string());
    let pe_ladder = match pe_ladder_raw.as_str() {
        "octave" => PeLadder::Octave,
        "linear" => PeLadder::Linear,
        other => bail!("unknown --pe-ladder '{other}' (expected octave or linear)"),
    };
    let seeds_raw = args
        .seeds
        .or_else(|| settings.get_string("seeds"))
        .unwrap_or_else(|| env_seed().map(|s| s.to_string()).unwrap_or_default());
    let seeds = parse_u64_list(&seeds_raw)?;
    if seeds.is_empty() {
        bail!("--seeds must list at least one seed");
    }
    let trials = resolve(args.trials, settings.get("trials")?, 1);
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    let run_seeds = trial_seeds(&seeds, trials);

    let id = FunctionId::parse(&args.function).map_err(|e| anyhow::anyhow!("{e}"))?;
    let dim = args.dim.unwrap_or_else(|| default_dim(id));
    let f = BlackboxFunction::new(id, dim).map_err(|e| anyhow::anyhow!("{e}"))?;

    let surrogates: Vec<SurrogateKind> = args
        .surrogate
        .split(',')
        .map(|s| SurrogateKind::parse(s.trim()).map_err(|e| anyhow::anyhow!("{e}")))
        .collect::<Result<_>>()?;
    if surrogates.is_empty() {
        bail!("--surrogate must list at least one method");
    }

    let config = json!({
        "function": f.name,
        "dim": dim,
        "surrogates": surrogates.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "init": init,
        "steps": steps,
        "pool": pool,
        "restarts": restarts,
        "refine_steps": refine_steps,
        "xi": xi,
        "probe": probe,
        "epochs": epochs,
        "learning_rate": learning_rate,
        "batch_size": batch_size,
        "hidden": hidden,
        "pe_frequencies": pe_frequencies,
        "pe_ladder": pe_ladder_raw,
        "dropout": dropout,
        "anchor_noise": anchor_noise,
        "trials": trials,
    });
    let manifest = RunManifest::new("bo", config, seeds.clone(), vec![args.out.clone()]);
    let manifest_path = args.out.join("run_manifest.json");
    if manifest_path.exists() {
        let existing = RunManifest::read(&manifest_path)?;
        if !args.resume {
            bail!(
                "{} already holds a run; pass --resume to continue it",
                args.out.display()
            );
        }
        existing.check_compatible(&manifest)?;
    } else {
        if args.resume {
            bail!("--resume given but {} has no manifest", manifest_path.display());
        }
        std::fs::create_dir_all(&args.out)
            .with_context(|| format!("cannot create {}", args.out.display()))?;
        manifest.write(&manifest_path)?;
    }

    let f_range = f
        .f_range(probe, 0xf0a2)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    // One cell per (surrogate, seed); each writes its own trace file, so
    // cells are independent and safe to run on separate workers.
    struct Cell {
        surrogate: SurrogateKind,
        seed: u64,
    }
    let cells: Vec<Cell> = surrogates
        .iter()
        .flat_map(|&s| {
            run_seeds
                .iter()
                .map(move |&seed| Cell { surrogate: s, seed })
        })
        .collect();
    let expected_rows = init + steps;

    enum Outcome {
        Done { auc: f64, best: f64 },
        Failed(String),
    }
    let outcomes: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..cells.len()).map(|_| None).collect());

    let run_cell = |idx: usize, cell: &Cell| {
        let path = trace_path(&args.out, cell.surrogate, cell.seed);
        let result = (|| -> Result<Outcome> {
            if let Some((post, best)) = read_trace_best(&path, expected_rows) {
                let auc = auc_score(&post, f_range).map_err(|e| anyhow::anyhow!("{e}"))?;
                return Ok(Outcome::Done { auc, best });
            }
            let mut surrogate = SurrogateConfig::desk_scale(cell.surrogate);
            surrogate.hidden_layers = hidden.clone();
            surrogate.epochs = epochs;
            surrogate.learning_rate = learning_rate;
            surrogate.batch_size = batch_size;
            surrogate.pe_frequencies = pe_frequencies;
            surrogate.pe_ladder = pe_ladder;
            surrogate.dropout_rate = dropout;
            surrogate.anchor_noise_std = (anchor_noise > 0.0).then_some(anchor_noise);
            let cfg = BoConfig {
                surrogate,
                n_init: init,
                n_steps: steps,
                propose: ProposeConfig {
                    pool_size: pool,
                    n_restarts: restarts,
                    refine_steps,
                    xi,
                },
                seed: cell.seed,
            };
            let trace = run_bo(&f, &cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
            write_trace(&path, &trace)?;
            let auc =
                auc_score(&trace.post_init_best(), f_range).map_err(|e| anyhow::anyhow!("{e}"))?;
            Ok(Outcome::Done {
                auc,
                best: trace.best(),
            })
        })();
        let outcome = result.unwrap_or_else(|e| {
            Outcome::Failed(format!("{}_seed{}: {e}", cell.surrogate.name(), cell.seed))
        });
        outcomes.lock().unwrap()[idx] = Some(outcome);
    };

    let jobs = args.jobs.max(1).min(cells.len());
    if jobs <= 1 {
        for (idx, cell) in cells.iter().enumerate() {
            run_cell(idx, cell);
        }
    } else {
        std::thread::scope(|scope| {
            for worker in 0..jobs {
                let run_cell = &run_cell;
                let cells = &cells;
                scope.spawn(move || {
                    for (idx, cell) in cells.iter().enumerate() {
                        if idx % jobs == worker {
                            run_cell(idx, cell);
                        }
                    }
                });
            }
        });
    }

    let outcomes = outcomes.into_inner().unwrap();
    let mut failed_cells = Vec::new();
    let mut summaries = Vec::new();
    for (si, surrogate) in surrogates.iter().enumerate() {
        let mut aucs = Vec::new();
        let mut best_values = Vec::new();
        for (ci, outcome) in outcomes.iter().enumerate() {
            if ci / run_seeds.len() != si {
                continue;
            }
            match outcome.as_ref().expect("all cells ran") {
                Outcome::Done { auc, best } => {
                    aucs.push(*auc);
                    best_values.push(*best);
                }
                Outcome::Failed(msg) => failed_cells.push(msg.clone()),
            }
        }
        let n = aucs.len() as f64;
        let mean_auc = if aucs.is_empty() {
            f64::NAN
        } else {
            aucs.iter().sum::<f64>() / n
        };
        let std_auc = if aucs.len() > 1 {
            (aucs.iter().map(|a| (a - mean_auc).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let median_auc = if aucs.is_empty() {
            f64::NAN
        } else {
            median(&aucs)
        };
        summaries.push(SurrogateSummary {
            surrogate: surrogate.name().to_string(),
            aucs,
            best_values,
            mean_auc,
            median_auc,
            std_auc,
        });
    }

    let summary = Summary {
        function: f.name.clone(),
        dim,
        f_range,
        surrogates: summaries,
        failed_cells: failed_cells.clone(),
    };
    write_json_pretty(&args.out.join("summary.json"), &summary)?;

    for s in &summary.surrogates {
        println!(
            "{}: mean AUC {:.4} +/- {:.4} (median {:.4}) over {} runs",
            s.surrogate,
            s.mean_auc,
            s.std_auc,
            s.median_auc,
            s.aucs.len()
        );
    }
    if !failed_cells.is_empty() {
        bail!("{} cell(s) failed: {}", failed_cells.len(), failed_cells.join("; "));
    }
    Ok(())
}
