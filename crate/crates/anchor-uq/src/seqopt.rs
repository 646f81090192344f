//! Sequential model-based optimization with expected improvement.
//!
//! Maximization throughout: the acquisition looks for points likely to
//! exceed the incumbent best observation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::anchoring::{
    predict_delta_uq, train_delta_uq_with, AnchoredModel, DeltaUqTrainOptions,
};
use crate::baselines::gp::{gp_fit, GpHyperGrid, GpSurrogate};
use crate::baselines::{
    predict_deep_ensemble, predict_mc_dropout, train_deep_ensemble, train_dropout_model,
    DeepEnsemble, DropoutModel, MC_DROPOUT_PASSES,
};
use crate::benchmarks::BlackboxFunction;
use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::nn::{Loss, MlpConfig, PeLadder, TrainConfig};

/// Expected improvement for a Gaussian belief N(mu, sigma^2) over incumbent
/// `best` with exploration margin `xi`. Exactly zero when sigma is zero.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64, xi: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let improve = mu - best - xi;
    let z = improve / sigma;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    improve * normal.cdf(z) + sigma * normal.pdf(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    DeltaUq,
    AnchorEnsemble,
    DeepEnsemble,
    McDropout,
    Gp,
}

impl SurrogateKind {
    pub fn parse(name: &str) -> Result<SurrogateKind> {
        use SurrogateKind::*;
        Ok(match name.to_ascii_lowercase().as_str() {
            "delta_uq" | "deltauq" | "anchored" => DeltaUq,
            "anchor_ensemble" => AnchorEnsemble,
            "deep_ensemble" | "ensemble" => DeepEnsemble,
            "mc_dropout" | "dropout" => McDropout,
            "gp" => Gp,
            other => return Err(Error::Config(format!("unknown surrogate '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurrogateKind::DeltaUq => "delta_uq",
            SurrogateKind::AnchorEnsemble => "anchor_ensemble",
            SurrogateKind::DeepEnsemble => "deep_ensemble",
            SurrogateKind::McDropout => "mc_dropout",
            SurrogateKind::Gp => "gp",
        }
    }
}

/// Network/GP settings for surrogate refits. Defaults are desk-scale; raise
/// `hidden` / `epochs` for full-scale runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub kind: SurrogateKind,
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub pe_frequencies: usize,
    /// Frequency ladder of the positional embedding.
    #[serde(default)]
    pub pe_ladder: PeLadder,
    /// Dropout rate; only used for the MC-dropout surrogate.
    pub dropout_rate: f64,
    pub n_members: usize,
    pub mc_passes: usize,
    /// Anchors at inference: `min(max_anchors, n_observations)`.
    pub max_anchors: usize,
    /// Train-time Gaussian anchor corruption for the anchored surrogate.
    pub anchor_noise_std: Option<f64>,
}

impl SurrogateConfig {
    pub fn desk_scale(kind: SurrogateKind) -> SurrogateConfig {
        SurrogateConfig {
            kind,
            hidden_layers: vec![64, 64],
            epochs: 600,
            learning_rate: 1e-3,
            batch_size: 32,
            pe_frequencies: 1,
            pe_ladder: PeLadder::default(),
            dropout_rate: 0.2,
            n_members: 5,
            mc_passes: MC_DROPOUT_PASSES,
            max_anchors: 20,
            anchor_noise_std: None,
        }
    }
}

/// A surrogate refit on the current observations; predicts in standardized
/// target units (the BO driver standardizes `y` before fitting).
enum Fitted {
    DeltaUq { model: AnchoredModel, anchors: Matrix },
    DeepEnsemble(DeepEnsemble),
    McDropout { model: DropoutModel, passes: usize, seed: u64 },
    Gp { gp: GpSurrogate, bounds: Vec<(f64, f64)> },
}

impl Fitted {
    fn predict(&self, queries: &Matrix) -> Result<Vec<(f64, f64)>> {
        let ests = match self {
            Fitted::DeltaUq { model, anchors } => predict_delta_uq(model, queries, anchors)?,
            Fitted::DeepEnsemble(e) => predict_deep_ensemble(e, queries)?,
            Fitted::McDropout { model, passes, seed } => {
                predict_mc_dropout(model, queries, *passes, *seed)?
            }
            Fitted::Gp { gp, bounds } => {
                // The GP was fit in normalized [-1, 1] inputs.
                let norm = crate::data::normalize_to_unit(queries, bounds);
                gp.predict(&norm)?
            }
        };
        Ok(ests
            .into_iter()
            .map(|e| {
                let sigma = e.std.as_ref().map(|s| s[0]).unwrap_or(0.0);
                (e.mean[0], sigma)
            })
            .collect())
    }
}

fn fit_surrogate(
    xs: &[Vec<f64>],
    ys_std: &[f64],
    bounds: &[(f64, f64)],
    cfg: &SurrogateConfig,
    seed: u64,
) -> Result<Fitted> {
    let d = bounds.len();
    let inputs = Matrix::from_rows(xs)?;
    let targets = Matrix::from_rows(&ys_std.iter().map(|&y| vec![y]).collect::<Vec<_>>())?;
    let train = TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        loss: Loss::Mse,
    };
    match cfg.kind {
        SurrogateKind::Gp => {
            // GP works in normalized [-1, 1] inputs like the nets.
            let norm = crate::data::normalize_to_unit(&inputs, bounds);
            Ok(Fitted::Gp {
                gp: gp_fit(&norm, ys_std, &GpHyperGrid::default())?,
                bounds: bounds.to_vec(),
            })
        }
        SurrogateKind::DeltaUq | SurrogateKind::AnchorEnsemble => {
            let dataset = Dataset::new(inputs, targets, bounds.to_vec())?;
            let mut mlp = MlpConfig::new(2 * d, cfg.hidden_layers.clone(), 1, seed);
            mlp.pe_frequencies = cfg.pe_frequencies;
            mlp.pe_ladder = cfg.pe_ladder;
            let options = DeltaUqTrainOptions {
                anchor_noise_std: cfg.anchor_noise_std,
            };
            let model = train_delta_uq_with(&dataset, &mlp, &train, &options)?;
            let k = cfg.max_anchors.min(xs.len()).max(1);
            let anchors = model.sample_anchors(k, seed ^ 0xa5a5_5a5a);
            Ok(Fitted::DeltaUq { model, anchors })
        }
        SurrogateKind::DeepEnsemble => {
            let dataset = Dataset::new(inputs, targets, bounds.to_vec())?;
            let mut mlp = MlpConfig::new(d, cfg.hidden_layers.clone(), 1, seed);
            mlp.pe_frequencies = cfg.pe_frequencies;
            mlp.pe_ladder = cfg.pe_ladder;
            Ok(Fitted::DeepEnsemble(train_deep_ensemble(
                &dataset,
                &mlp,
                &train,
                cfg.n_members.max(2),
            )?))
        }
        SurrogateKind::McDropout => {
            let dataset = Dataset::new(inputs, targets, bounds.to_vec())?;
            let mut mlp = MlpConfig::new(d, cfg.hidden_layers.clone(), 1, seed);
            mlp.pe_frequencies = cfg.pe_frequencies;
            mlp.pe_ladder = cfg.pe_ladder;
            mlp.dropout_rate = cfg.dropout_rate;
            let model = train_dropout_model(&dataset, &mlp, &train)?;
            Ok(Fitted::McDropout {
                model,
                passes: cfg.mc_passes.max(2),
                seed: seed ^ 0x5a5a_a5a5,
            })
        }
    }
}

/// Candidate-selection settings: uniform pool scored by EI, the top
/// `n_restarts` refined by coordinate-wise pattern search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposeConfig {
    pub pool_size: usize,
    pub n_restarts: usize,
    pub refine_steps: usize,
    pub xi: f64,
}

impl Default for ProposeConfig {
    fn default() -> Self {
        ProposeConfig {
            pool_size: 2000,
            n_restarts: 15,
            refine_steps: 50,
            xi: 0.01,
        }
    }
}

fn ei_at(fitted: &Fitted, x: &[f64], best: f64, xi: f64) -> Result<f64> {
    let m = Matrix::from_rows(&[x.to_vec()])?;
    let (mu, sigma) = fitted.predict(&m)?[0];
    Ok(expected_improvement(mu, sigma, best, xi))
}

/// Picks the next query: scores a seeded uniform pool, refines the top
/// candidates with a shrinking coordinate pattern search, and returns the
/// refined point with the highest acquisition value. Ties resolve to the
/// candidate that appeared earliest in the pool.
fn propose(
    fitted: &Fitted,
    bounds: &[(f64, f64)],
    best_std: f64,
    cfg: &ProposeConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Matrix::zeros(cfg.pool_size, d);
    for i in 0..cfg.pool_size {
        let row = pool.row_mut(i);
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            row[j] = rng.gen_range(lo..hi);
        }
    }
    let preds = fitted.predict(&pool)?;
    let mut scored: Vec<(usize, f64)> = preds
        .iter()
        .enumerate()
        .map(|(i, &(mu, sigma))| (i, expected_improvement(mu, sigma, best_std, cfg.xi)))
        .collect();
    // Highest EI first; equal EI keeps the lower pool index.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut champion: Option<(Vec<f64>, f64, usize)> = None;
    for &(idx, pool_ei) in scored.iter().take(cfg.n_restarts.max(1)) {
        let mut x = pool.row(idx).to_vec();
        let mut fx = pool_ei;
        let mut steps: Vec<f64> = bounds.iter().map(|&(lo, hi)| 0.1 * (hi - lo)).collect();
        for _ in 0..cfg.refine_steps {
            let mut improved = false;
            for j in 0..d {
                for dir in [1.0, -1.0] {
                    let mut cand = x.clone();
                    cand[j] = (cand[j] + dir * steps[j]).clamp(bounds[j].0, bounds[j].1);
                    if cand[j] == x[j] {
                        continue;
                    }
                    let v = ei_at(fitted, &cand, best_std, cfg.xi)?;
                    if v > fx {
                        x = cand;
                        fx = v;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                steps.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
        let better = match &champion {
            None => true,
            Some((_, champ_fx, champ_idx)) => {
                fx > *champ_fx || (fx == *champ_fx && idx < *champ_idx)
            }
        };
        if better {
            champion = Some((x, fx, idx));
        }
    }
    Ok(champion.expect("nonempty restart set").0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoConfig {
    pub surrogate: SurrogateConfig,
    pub n_init: usize,
    pub n_steps: usize,
    pub propose: ProposeConfig,
    pub seed: u64,
}

impl BoConfig {
    pub fn desk_scale(kind: SurrogateKind, n_init: usize, n_steps: usize, seed: u64) -> BoConfig {
        BoConfig {
            surrogate: SurrogateConfig::desk_scale(kind),
            n_init,
            n_steps,
            propose: ProposeConfig::default(),
            seed,
        }
    }
}

/// One evaluated query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoStep {
    pub x: Vec<f64>,
    pub y: f64,
    pub best_so_far: f64,
    /// False for the random initial design.
    pub proposed: bool,
}

/// Full optimization trace for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoTrace {
    pub function: String,
    pub surrogate: String,
    pub seed: u64,
    pub steps: Vec<BoStep>,
}

impl BoTrace {
    pub fn best(&self) -> f64 {
        self.steps
            .last()
            .map(|s| s.best_so_far)
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Best-so-far values at each post-init step.
    pub fn post_init_best(&self) -> Vec<f64> {
        self.steps
            .iter()
            .filter(|s| s.proposed)
            .map(|s| s.best_so_far)
            .collect()
    }
}

/// Runs one BO loop: seeded uniform initial design, then `n_steps` rounds of
/// refit-from-scratch + EI proposal. Targets are standardized before every
/// refit so acquisition operates on unit-scale beliefs.
pub fn run_bo(f: &BlackboxFunction, cfg: &BoConfig) -> Result<BoTrace> {
    if cfg.n_init < 2 {
        return Err(Error::Config("need at least 2 initial points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut steps = Vec::new();
    let mut best = f64::NEG_INFINITY;

    for _ in 0..cfg.n_init {
        let x: Vec<f64> = f
            .bounds
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..hi))
            .collect();
        let y = f.eval(&x)?;
        best = best.max(y);
        xs.push(x.clone());
        ys.push(y);
        steps.push(BoStep {
            x,
            y,
            best_so_far: best,
            proposed: false,
        });
    }

    for t in 0..cfg.n_steps {
        let (mean, sd) = standardization(&ys);
        let ys_std: Vec<f64> = ys.iter().map(|y| (y - mean) / sd).collect();
        let best_std = (best - mean) / sd;
        let round_seed = cfg.seed.wrapping_add(1 + t as u64);
        let fitted = fit_surrogate(&xs, &ys_std, &f.bounds, &cfg.surrogate, round_seed)?;
        let x = propose(
            &fitted,
            &f.bounds,
            best_std,
            &cfg.propose,
            round_seed ^ 0x00c0_ffee,
        )?;
        let y = f.eval(&x)?;
        best = best.max(y);
        xs.push(x.clone());
        ys.push(y);
        steps.push(BoStep {
            x,
            y,
            best_so_far: best,
            proposed: true,
        });
    }

    Ok(BoTrace {
        function: f.name.clone(),
        surrogate: cfg.surrogate.kind.name().to_string(),
        seed: cfg.seed,
        steps,
    })
}

fn standardization(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

/// Trapezoid average of normalized best-so-far values over the post-init
/// steps; 1.0 means the optimum was held from the first proposal.
pub fn auc_score(post_init_best: &[f64], f_range: (f64, f64)) -> Result<f64> {
    if post_init_best.is_empty() {
        return Err(Error::Config("no post-init steps to score".into()));
    }
    let (worst, best) = f_range;
    let span = best - worst;
    if span <= 0.0 {
        return Err(Error::Config("degenerate normalization range".into()));
    }
    let norm: Vec<f64> = post_init_best
        .iter()
        .map(|&v| ((v - worst) / span).clamp(0.0, 1.0))
        .collect();
    if norm.len() == 1 {
        return Ok(norm[0]);
    }
    let n = norm.len();
    let sum: f64 = norm.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
    Ok(sum / (n - 1) as f64)
}

/// AUC mean, median and sample standard deviation across repeated seeded runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub function: String,
    pub surrogate: String,
    pub aucs: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

/// Expands a seeds × trials grid into one run seed per cell. Trial 0 keeps
/// the base seed unchanged, so a single-trial sweep matches a plain seed list.
pub fn trial_seeds(seeds: &[u64], trials_per_seed: usize) -> Vec<u64> {
    seeds
        .iter()
        .flat_map(|&s| {
            (0..trials_per_seed as u64).map(move |t| s ^ t.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        })
        .collect()
}

/// Median of a nonempty slice (average of the two middle values for even n).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Repeats `run_bo` over `seeds`, scoring each trace with the shared
/// normalization range from `f.f_range`.
pub fn run_sweep(
    f: &BlackboxFunction,
    base: &BoConfig,
    seeds: &[u64],
    probe_n: usize,
) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::Config("no seeds".into()));
    }
    let range = f.f_range(probe_n, 0xf0a2)?;
    let mut aucs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let trace = run_bo(f, &cfg)?;
        aucs.push(auc_score(&trace.post_init_best(), range)?);
    }
    let n = aucs.len() as f64;
    let mean = aucs.iter().sum::<f64>() / n;
    let std = if aucs.len() > 1 {
        (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SweepResult {
        function: f.name.clone(),
        surrogate: base.surrogate.kind.name().to_string(),
        median: median(&aucs),
        aucs,
        mean,
        std,
    })
}
