use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;

use anchor_uq::anchoring::{sample_rows, train_anchor_ensemble, train_delta_uq};
use anchor_uq::baselines::gp::{gp_fit, GpHyperGrid};
use anchor_uq::baselines::{train_deep_ensemble, train_dropout_model};
use anchor_uq::checkpoint::{save, Checkpointed, GpCheckpoint};
use anchor_uq::data::{normalize_to_unit, Dataset};
use anchor_uq::nn::{Loss, MlpConfig, TrainConfig};

use crate::io::{parse_usize_list, read_numeric_csv, split_dataset};
use crate::manifest::RunManifest;
use crate::settings::{env_seed, resolve, Settings};

#[derive(Args)]
pub struct FitArgs {
    /// Training CSV with a header row; the last --targets columns are targets
    #[arg(long)]
    pub data: PathBuf,
    /// Number of trailing target columns
    #[arg(long, default_value_t = 1)]
    pub targets: usize,
    /// delta_uq | anchor_ensemble | deep_ensemble | mc_dropout | gp
    #[arg(long)]
    pub method: String,
    /// Output checkpoint directory
    #[arg(long)]
    pub out: PathBuf,
    /// Flat key=value config file (flags take precedence)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden layer widths, e.g. 64,64
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub pe_frequencies: Option<usize>,
    /// Dropout rate (mc_dropout only)
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    /// Member count for the ensemble methods
    #[arg(long)]
    pub members: Option<usize>,
}

pub fn run(args: FitArgs) -> Result<()> {
    let settings = Settings::load(args.config.as_deref())?;
    let seed = resolve(args.seed, settings.get("seed")?, env_seed()?);
    let epochs = resolve(args.epochs, settings.get("epochs")?, 200);
    let learning_rate = resolve(args.learning_rate, settings.get("learning_rate")?, 1e-3);
    let batch_size = resolve(args.batch_size, settings.get("batch_size")?, 32);
    let hidden_raw = args
        .hidden
        .or_else(|| settings.get_string("hidden"))
        .unwrap_or_else(|| "64,64".to_string());
    let hidden = parse_usize_list(&hidden_raw)?;
    let pe_frequencies = resolve(args.pe_frequencies, settings.get("pe_frequencies")?, 0);
    let dropout_rate = resolve(args.dropout_rate, settings.get("dropout_rate")?, 0.1);
    let members = resolve(args.members, settings.get("members")?, 5);

    let csv = read_numeric_csv(&args.data)?;
    let (inputs, targets) = split_dataset(&csv, args.targets)?;
    let dataset = Dataset::with_inferred_bounds(inputs, targets)?;
    let d = dataset.dim();
    let m = dataset.targets.cols;

    let train = TrainConfig {
        learning_rate,
        epochs,
        batch_size,
        loss: Loss::Mse,
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let config = json!({
        "data": args.data,
        "targets": args.targets,
        "method": args.method,
        "epochs": epochs,
        "learning_rate": learning_rate,
        "batch_size": batch_size,
        "hidden": hidden,
        "pe_frequencies": pe_frequencies,
        "dropout_rate": dropout_rate,
        "members": members,
    });
    RunManifest::new("fit", config, vec![seed], vec![args.out.clone()])
        .write(&args.out.join("run_manifest.json"))?;

    let model = match args.method.as_str() {
        "delta_uq" => {
            let mut cfg = MlpConfig::new(2 * d, hidden, m, seed);
            cfg.pe_frequencies = pe_frequencies;
            Checkpointed::DeltaUq(train_delta_uq(&dataset, &cfg, &train)?)
        }
        "anchor_ensemble" => {
            let mut cfg = MlpConfig::new(d, hidden, m, seed);
            cfg.pe_frequencies = pe_frequencies;
            let anchors = sample_rows(&dataset.inputs, members, seed ^ 0x0a11_c0de);
            Checkpointed::AnchorEnsemble(train_anchor_ensemble(&dataset, &cfg, &train, &anchors)?)
        }
        "deep_ensemble" => {
            let mut cfg = MlpConfig::new(d, hidden, m, seed);
            cfg.pe_frequencies = pe_frequencies;
            Checkpointed::DeepEnsemble(train_deep_ensemble(&dataset, &cfg, &train, members)?)
        }
        "mc_dropout" => {
            let mut cfg = MlpConfig::new(d, hidden, m, seed);
            cfg.pe_frequencies = pe_frequencies;
            cfg.dropout_rate = dropout_rate;
            Checkpointed::McDropout(train_dropout_model(&dataset, &cfg, &train)?)
        }
        "gp" => {
            if m != 1 {
                bail!("gp supports a single target column, got {m}");
            }
            let norm = normalize_to_unit(&dataset.inputs, &dataset.bounds);
            let y: Vec<f64> = dataset.targets.iter_rows().map(|r| r[0]).collect();
            let gp = gp_fit(&norm, &y, &GpHyperGrid::default())?;
            Checkpointed::Gp(GpCheckpoint {
                x: norm,
                y,
                hypers: gp.hypers,
                bounds: dataset.bounds.clone(),
            })
        }
        other => bail!("unknown --method '{other}' (expected delta_uq | anchor_ensemble | deep_ensemble | mc_dropout | gp)"),
    };

    save(&model, &args.out)?;
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}
