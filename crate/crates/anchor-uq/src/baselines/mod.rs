//! Comparator uncertainty estimators: deep ensembles, MC dropout, and a
//! Gaussian-process surrogate.

pub mod gp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchoring::UncertaintyEstimate;
use crate::data::{normalize_to_unit, Dataset, Matrix};
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpConfig, Mode, TrainConfig};

/// Test-time forward passes used for MC dropout unless overridden.
pub const MC_DROPOUT_PASSES: usize = 50;

/// Independently trained members with distinct initialization seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeepEnsemble {
    pub members: Vec<Mlp>,
    pub bounds: Vec<(f64, f64)>,
}

/// Dropout network plus the bounds used to normalize its inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropoutModel {
    pub mlp: Mlp,
    pub bounds: Vec<(f64, f64)>,
}

/// Trains `n_members` networks on the unshifted data; member `k` uses seed
/// `base_seed + k` where `base_seed` comes from `mlp_config.seed`.
pub fn train_deep_ensemble(
    dataset: &Dataset,
    mlp_config: &MlpConfig,
    train: &TrainConfig,
    n_members: usize,
) -> Result<DeepEnsemble> {
    if n_members < 2 {
        return Err(Error::Config("deep ensemble needs at least 2 members".into()));
    }
    if mlp_config.input_dim != dataset.dim() {
        return Err(Error::Config(format!(
            "ensemble input_dim {} vs dataset width {}",
            mlp_config.input_dim,
            dataset.dim()
        )));
    }
    let x = normalize_to_unit(&dataset.inputs, &dataset.bounds);
    let mut members = Vec::with_capacity(n_members);
    for k in 0..n_members {
        let mut cfg = mlp_config.clone();
        cfg.seed = mlp_config.seed.wrapping_add(k as u64);
        let mut member = Mlp::init(cfg)?;
        member.fit(&x, &dataset.targets, train)?;
        members.push(member);
    }
    Ok(DeepEnsemble {
        members,
        bounds: dataset.bounds.clone(),
    })
}

pub fn predict_deep_ensemble(
    ensemble: &DeepEnsemble,
    queries: &Matrix,
) -> Result<Vec<UncertaintyEstimate>> {
    if ensemble.members.is_empty() {
        return Err(Error::Config("ensemble has no members".into()));
    }
    let q = normalize_to_unit(queries, &ensemble.bounds);
    let preds: Vec<Matrix> = ensemble
        .members
        .iter()
        .map(|m| m.forward(&q, Mode::Eval, None))
        .collect::<Result<_>>()?;
    Ok(estimates_across(&preds, q.rows))
}

/// Trains a single dropout network for MC-dropout inference.
pub fn train_dropout_model(
    dataset: &Dataset,
    mlp_config: &MlpConfig,
    train: &TrainConfig,
) -> Result<DropoutModel> {
    if mlp_config.dropout_rate <= 0.0 {
        return Err(Error::Config(
            "MC dropout requires dropout_rate > 0".into(),
        ));
    }
    let x = normalize_to_unit(&dataset.inputs, &dataset.bounds);
    let mut mlp = Mlp::init(mlp_config.clone())?;
    mlp.fit(&x, &dataset.targets, train)?;
    Ok(DropoutModel {
        mlp,
        bounds: dataset.bounds.clone(),
    })
}

/// Mean/std across `passes` stochastic forward evaluations with dropout
/// active; deterministic given `seed`.
pub fn predict_mc_dropout(
    model: &DropoutModel,
    queries: &Matrix,
    passes: usize,
    seed: u64,
) -> Result<Vec<UncertaintyEstimate>> {
    if model.mlp.config.dropout_rate <= 0.0 {
        return Err(Error::Config(
            "degenerate estimator: dropout_rate is 0, MC dropout has no stochasticity".into(),
        ));
    }
    if passes < 2 {
        return Err(Error::Config("MC dropout needs at least 2 passes".into()));
    }
    let q = normalize_to_unit(queries, &model.bounds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut preds = Vec::with_capacity(passes);
    for _ in 0..passes {
        preds.push(model.mlp.forward(&q, Mode::Train, Some(&mut rng))?);
    }
    Ok(estimates_across(&preds, q.rows))
}

fn estimates_across(preds: &[Matrix], n_queries: usize) -> Vec<UncertaintyEstimate> {
    let k = preds.len();
    let m = preds[0].cols;
    let mut out = Vec::with_capacity(n_queries);
    for i in 0..n_queries {
        let mut mean = vec![0.0; m];
        for p in preds {
            for (acc, &v) in mean.iter_mut().zip(p.row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= k as f64);
        let std = (k >= 2).then(|| {
            let mut var = vec![0.0; m];
            for p in preds {
                for ((acc, &v), &mu) in var.iter_mut().zip(p.row(i)).zip(mean.iter()) {
                    let d = v - mu;
                    *acc += d * d;
                }
            }
            var.into_iter()
                .map(|v| (v / (k as f64 - 1.0)).sqrt())
                .collect()
        });
        out.push(UncertaintyEstimate {
            mean,
            std,
            count: k,
        });
    }
    out
}
