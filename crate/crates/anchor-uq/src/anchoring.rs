//! Anchored training and inference: the input transform `x -> [c, x - c]`,
//! the single-model estimator trained on it, and the multi-model anchor
//! ensemble where each member sees the whole dataset shifted by one constant.
//!
//! Inputs are normalized to a bounds-derived `[-1, 1]` box before anchoring;
//! anchors are always drawn from the training inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{normalize_to_unit, Dataset, Matrix};
use crate::error::{Error, Result};
use crate::nn::{shuffle, Mlp, MlpConfig, Mode, TrainConfig};

/// Per-query mean and standard-deviation vectors.
///
/// `std` is the unbiased (K-1 denominator) sample deviation across anchors or
/// members; it is `None` when fewer than two predictions were available.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyEstimate {
    pub mean: Vec<f64>,
    pub std: Option<Vec<f64>>,
    pub count: usize,
}

/// Optional knobs for anchored training.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DeltaUqTrainOptions {
    /// Gaussian noise applied to anchors during training (off by default).
    pub anchor_noise_std: Option<f64>,
}

/// Single network trained on `[c, x - c]` tuples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchoredModel {
    pub base: Mlp,
    pub bounds: Vec<(f64, f64)>,
    /// Training inputs in raw units; the anchor pool for inference.
    pub anchor_pool: Matrix,
    pub train_losses: Vec<f64>,
}

/// Models sharing one initialization, each trained on the dataset shifted by
/// its own constant anchor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorEnsemble {
    /// `(anchor in raw units, trained member)` pairs.
    pub members: Vec<(Vec<f64>, Mlp)>,
    pub bounds: Vec<(f64, f64)>,
}

/// Builds the anchored batch `[c_i, x_i - c_i]` where the anchors are a seeded
/// permutation of the batch rows. Row halves always reconstruct: `c + Δ = x`.
pub fn anchored_batch(inputs: &Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    let n = inputs.rows;
    let d = inputs.cols;
    let mut perm: Vec<usize> = (0..n).collect();
    shuffle(&mut perm, rng);
    let mut out = Matrix::zeros(n, 2 * d);
    for i in 0..n {
        let anchor = inputs.row(perm[i]);
        let x = inputs.row(i);
        let row = out.row_mut(i);
        for j in 0..d {
            row[j] = anchor[j];
            row[d + j] = x[j] - anchor[j];
        }
    }
    out
}

/// Trains the single-model anchored estimator.
///
/// Every epoch re-draws the anchor assignment so each sample is paired with
/// one random anchor per iteration, never a fixed pairing; the loss is always
/// applied to the single-anchor prediction.
pub fn train_delta_uq(
    dataset: &Dataset,
    mlp_config: &MlpConfig,
    train: &TrainConfig,
) -> Result<AnchoredModel> {
    train_delta_uq_with(dataset, mlp_config, train, &DeltaUqTrainOptions::default())
}

pub fn train_delta_uq_with(
    dataset: &Dataset,
    mlp_config: &MlpConfig,
    train: &TrainConfig,
    options: &DeltaUqTrainOptions,
) -> Result<AnchoredModel> {
    let d = dataset.dim();
    if mlp_config.input_dim != 2 * d {
        return Err(Error::Config(format!(
            "anchored model needs input_dim = 2 * {} = {}, got {}",
            d,
            2 * d,
            mlp_config.input_dim
        )));
    }
    train.validate()?;
    let mut model = Mlp::init(mlp_config.clone())?;
    let x = normalize_to_unit(&dataset.inputs, &dataset.bounds);
    let y = &dataset.targets;
    let n = x.rows;
    let batch_size = train.batch_size.min(n);

    let seed = mlp_config.seed;
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut anchor_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c909);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517c_c1b7_2722_0a95);
    let noise = match options.anchor_noise_std {
        Some(s) if s > 0.0 => Some(Normal::new(0.0, s).map_err(|e| Error::Config(e.to_string()))?),
        _ => None,
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(train.epochs);
    for _ in 0..train.epochs {
        shuffle(&mut order, &mut order_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(batch_size) {
            let bx = x.select_rows(chunk);
            let by = y.select_rows(chunk);
            let mut anchored = anchored_batch(&bx, &mut anchor_rng);
            if let Some(dist) = &noise {
                for i in 0..anchored.rows {
                    for j in 0..d {
                        let eps: f64 = dist.sample(&mut anchor_rng);
                        anchored.set(i, j, anchored.get(i, j) + eps);
                    }
                }
            }
            let (loss, grads) =
                model.loss_and_grad(&anchored, &by, train.loss, Mode::Train, Some(&mut dropout_rng))?;
            model.adam_step(&grads, train.learning_rate)?;
            epoch_loss += loss;
            batches += 1.0;
        }
        losses.push(epoch_loss / batches);
    }

    Ok(AnchoredModel {
        base: model,
        bounds: dataset.bounds.clone(),
        anchor_pool: dataset.inputs.clone(),
        train_losses: losses,
    })
}

impl AnchoredModel {
    /// Uniform sample of `k` anchors (raw units) from the training pool,
    /// without replacement; `k` is clamped to the pool size.
    pub fn sample_anchors(&self, k: usize, seed: u64) -> Matrix {
        sample_rows(&self.anchor_pool, k, seed)
    }
}

/// Anchored inference: mean and spread of the predictions across the given
/// anchors (raw units, drawn from the training pool). Eval mode, no dropout.
pub fn predict_delta_uq(
    model: &AnchoredModel,
    queries: &Matrix,
    anchors: &Matrix,
) -> Result<Vec<UncertaintyEstimate>> {
    if anchors.rows == 0 {
        return Err(Error::Config("at least one anchor is required".into()));
    }
    if queries.cols != anchors.cols {
        return Err(Error::Shape(format!(
            "query width {} vs anchor width {}",
            queries.cols, anchors.cols
        )));
    }
    let d = queries.cols;
    let q = normalize_to_unit(queries, &model.bounds);
    let c = normalize_to_unit(anchors, &model.bounds);
    let k = c.rows;

    // One forward pass per anchor over the whole query batch.
    let mut per_anchor: Vec<Matrix> = Vec::with_capacity(k);
    let mut batch = Matrix::zeros(q.rows, 2 * d);
    for ai in 0..k {
        let anchor = c.row(ai).to_vec();
        for i in 0..q.rows {
            let qrow = q.row(i);
            let row = batch.row_mut(i);
            for j in 0..d {
                row[j] = anchor[j];
                row[d + j] = qrow[j] - anchor[j];
            }
        }
        per_anchor.push(model.base.forward(&batch, Mode::Eval, None)?);
    }
    Ok(collect_estimates(&per_anchor, q.rows))
}

/// Trains one member per anchor, all starting from the identical
/// initialization. Member `k` fits `{(x_i - c_k, y_i)}`.
pub fn train_anchor_ensemble(
    dataset: &Dataset,
    mlp_config: &MlpConfig,
    train: &TrainConfig,
    anchors: &Matrix,
) -> Result<AnchorEnsemble> {
    if anchors.rows == 0 {
        return Err(Error::Config("anchor list must be nonempty".into()));
    }
    let d = dataset.dim();
    if mlp_config.input_dim != d {
        return Err(Error::Config(format!(
            "ensemble members take raw-width inputs ({} dims), got input_dim {}",
            d, mlp_config.input_dim
        )));
    }
    let theta0 = Mlp::init(mlp_config.clone())?;
    let x = normalize_to_unit(&dataset.inputs, &dataset.bounds);
    let c_norm = normalize_to_unit(anchors, &dataset.bounds);

    let mut members = Vec::with_capacity(anchors.rows);
    for ai in 0..anchors.rows {
        let c = c_norm.row(ai);
        let mut shifted = x.clone();
        for i in 0..shifted.rows {
            let row = shifted.row_mut(i);
            for j in 0..d {
                row[j] -= c[j];
            }
        }
        let mut member = theta0.clone();
        member.fit(&shifted, &dataset.targets, train)?;
        members.push((anchors.row(ai).to_vec(), member));
    }
    Ok(AnchorEnsemble {
        members,
        bounds: dataset.bounds.clone(),
    })
}

/// Member `k` evaluates `f_{c_k}(x - c_k)`; mean/std across members.
pub fn predict_anchor_ensemble(
    ensemble: &AnchorEnsemble,
    queries: &Matrix,
) -> Result<Vec<UncertaintyEstimate>> {
    if ensemble.members.is_empty() {
        return Err(Error::Config("ensemble has no members".into()));
    }
    let q = normalize_to_unit(queries, &ensemble.bounds);
    let d = q.cols;
    let mut per_member = Vec::with_capacity(ensemble.members.len());
    for (anchor_raw, member) in &ensemble.members {
        let c_mat = Matrix::from_rows(&[anchor_raw.clone()])?;
        let c_norm = normalize_to_unit(&c_mat, &ensemble.bounds);
        let c = c_norm.row(0);
        let mut shifted = q.clone();
        for i in 0..shifted.rows {
            let row = shifted.row_mut(i);
            for j in 0..d {
                row[j] -= c[j];
            }
        }
        per_member.push(member.forward(&shifted, Mode::Eval, None)?);
    }
    Ok(collect_estimates(&per_member, q.rows))
}

/// Unbiased mean/std across the K prediction matrices, per query row.
fn collect_estimates(preds: &[Matrix], n_queries: usize) -> Vec<UncertaintyEstimate> {
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
        for v in mean.iter_mut() {
            *v /= k as f64;
        }
        let std = if k >= 2 {
            let mut var = vec![0.0; m];
            for p in preds {
                for ((acc, &v), &mu) in var.iter_mut().zip(p.row(i)).zip(mean.iter()) {
                    let d = v - mu;
                    *acc += d * d;
                }
            }
            Some(var.into_iter().map(|v| (v / (k as f64 - 1.0)).sqrt()).collect())
        } else {
            None
        };
        out.push(UncertaintyEstimate {
            mean,
            std,
            count: k,
        });
    }
    out
}

/// Uniform sample of `k` rows without replacement (clamped to the row count).
pub fn sample_rows(pool: &Matrix, k: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pool.rows;
    let k = k.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    // Partial Fisher-Yates: the first k entries are the sample.
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    pool.select_rows(&idx[..k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Loss;

    fn toy_dataset(n: usize, f: impl Fn(f64) -> f64) -> Dataset {
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![-1.0 + 2.0 * i as f64 / (n - 1) as f64])
            .collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![f(x[0])]).collect();
        Dataset::new(
            Matrix::from_rows(&xs).unwrap(),
            Matrix::from_rows(&ys).unwrap(),
            vec![(-1.0, 1.0)],
        )
        .unwrap()
    }

    fn train_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 5e-3,
            epochs,
            batch_size: 16,
            loss: Loss::Mse,
        }
    }

    #[test]
    fn anchored_batch_of_one_is_zero_residual() {
        let x = Matrix::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = anchored_batch(&x, &mut rng);
        assert_eq!(out.row(0), &[0.3, -0.7, 0.0, 0.0]);
    }

    #[test]
    fn anchored_rows_reconstruct_exactly() {
        let xs: Vec<Vec<f64>> = (0..17).map(|i| vec![i as f64 * 0.3, -(i as f64)]).collect();
        let x = Matrix::from_rows(&xs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = anchored_batch(&x, &mut rng);
        for i in 0..x.rows {
            let row = out.row(i);
            for j in 0..x.cols {
                assert!((row[j] + row[x.cols + j] - x.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transformed_dot_product_identity() {
        // [c, xi - c] . [c, xj - c] = xi.xj - c.(xi + xj - 2c)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let xi: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xj: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs: f64 = (0..3).map(|k| c[k] * c[k] + (xi[k] - c[k]) * (xj[k] - c[k])).sum();
            let dot: f64 = (0..3).map(|k| xi[k] * xj[k]).sum();
            let corr: f64 = (0..3).map(|k| c[k] * (xi[k] + xj[k] - 2.0 * c[k])).sum();
            assert!((lhs - (dot - corr)).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_uq_fits_identity_function() {
        let ds = toy_dataset(64, |x| x);
        let mut cfg = MlpConfig::new(2, vec![32, 32], 1, 21);
        cfg.pe_frequencies = 0;
        let model = train_delta_uq(&ds, &cfg, &train_cfg(400)).unwrap();

        let anchors = model.sample_anchors(10, 77);
        let est = predict_delta_uq(&model, &ds.inputs, &anchors).unwrap();
        let mse: f64 = est
            .iter()
            .zip(ds.targets.iter_rows())
            .map(|(e, t)| (e.mean[0] - t[0]).powi(2))
            .sum::<f64>()
            / est.len() as f64;
        assert!(mse < 1e-2, "train MSE {mse}");
    }

    #[test]
    fn constant_target_predicts_constant() {
        let ds = toy_dataset(32, |_| 3.0);
        let cfg = MlpConfig::new(2, vec![16, 16], 1, 3);
        let model = train_delta_uq(&ds, &cfg, &train_cfg(400)).unwrap();
        let anchors = model.sample_anchors(8, 1);
        let est = predict_delta_uq(&model, &ds.inputs, &anchors).unwrap();
        for e in est {
            assert!((e.mean[0] - 3.0).abs() < 0.1, "mean {}", e.mean[0]);
        }
    }

    #[test]
    fn delta_uq_training_is_deterministic() {
        let ds = toy_dataset(16, |x| x * x);
        let cfg = MlpConfig::new(2, vec![8], 1, 5);
        let a = train_delta_uq(&ds, &cfg, &train_cfg(30)).unwrap();
        let b = train_delta_uq(&ds, &cfg, &train_cfg(30)).unwrap();
        assert_eq!(a.base.layers[0].w.data, b.base.layers[0].w.data);
    }

    #[test]
    fn anchor_independent_model_has_zero_sigma() {
        let ds = toy_dataset(16, |x| x);
        let cfg = MlpConfig::new(2, vec![8], 1, 5);
        let mut model = train_delta_uq(&ds, &cfg, &train_cfg(5)).unwrap();
        // Tie the anchor-block weights to the delta-block weights: every
        // first-layer unit then sees w * (c + delta) = w * x, so the model
        // is a function of x alone and the anchor spread must vanish.
        let d = 1;
        for o in 0..model.base.layers[0].w.rows {
            for j in 0..d {
                let w_delta = model.base.layers[0].w.get(o, d + j);
                model.base.layers[0].w.set(o, j, w_delta);
            }
        }
        let anchors = model.sample_anchors(6, 2);
        let est = predict_delta_uq(&model, &ds.inputs, &anchors).unwrap();
        for e in est {
            assert!(e.std.unwrap()[0] < 1e-12);
        }
    }

    #[test]
    fn two_anchor_sigma_closed_form() {
        // Hand-built linear model on [c, Δ]: f = 2c + Δ. Predictions for a
        // query x under anchors c1, c2 are f_k = c_k + x, so
        // sigma = |f1 - f2| / sqrt(2).
        let ds = toy_dataset(4, |x| x);
        let cfg = MlpConfig::new(2, vec![], 1, 0);
        let mut model = train_delta_uq(&ds, &cfg, &train_cfg(1)).unwrap();
        model.base.layers[0].w = Matrix::from_rows(&[vec![2.0, 1.0]]).unwrap();
        model.base.layers[0].b = vec![0.0];

        let queries = Matrix::from_rows(&[vec![0.5]]).unwrap();
        let anchors = Matrix::from_rows(&[vec![-0.5], vec![0.25]]).unwrap();
        let est = predict_delta_uq(&model, &queries, &anchors).unwrap();
        // Normalized units equal raw units here (bounds are [-1, 1]).
        let f1: f64 = 2.0 * -0.5 + (0.5 - -0.5);
        let f2 = 2.0 * 0.25 + (0.5 - 0.25);
        let mu = 0.5 * (f1 + f2);
        let sd = ((f1 - mu).powi(2) + (f2 - mu).powi(2)).sqrt(); // K-1 = 1
        assert!((est[0].mean[0] - mu).abs() < 1e-12);
        assert!((est[0].std.as_ref().unwrap()[0] - sd).abs() < 1e-12);
        assert!((sd - (f1 - f2).abs() / std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn single_anchor_has_no_sigma() {
        let ds = toy_dataset(8, |x| x);
        let cfg = MlpConfig::new(2, vec![4], 1, 1);
        let model = train_delta_uq(&ds, &cfg, &train_cfg(5)).unwrap();
        let anchors = model.sample_anchors(1, 0);
        let est = predict_delta_uq(&model, &ds.inputs, &anchors).unwrap();
        assert!(est[0].std.is_none());
        assert_eq!(est[0].count, 1);
    }

    #[test]
    fn prediction_invariant_to_anchor_order() {
        let ds = toy_dataset(24, |x| (3.0 * x).sin());
        let cfg = MlpConfig::new(2, vec![16], 1, 13);
        let model = train_delta_uq(&ds, &cfg, &train_cfg(100)).unwrap();
        let anchors = model.sample_anchors(6, 3);
        let mut reversed_rows: Vec<Vec<f64>> = anchors.iter_rows().map(|r| r.to_vec()).collect();
        reversed_rows.reverse();
        let reversed = Matrix::from_rows(&reversed_rows).unwrap();
        let q = Matrix::from_rows(&[vec![0.1], vec![-0.6]]).unwrap();
        let a = predict_delta_uq(&model, &q, &anchors).unwrap();
        let b = predict_delta_uq(&model, &q, &reversed).unwrap();
        for (ea, eb) in a.iter().zip(b.iter()) {
            assert!((ea.mean[0] - eb.mean[0]).abs() < 1e-12);
            assert!(
                (ea.std.as_ref().unwrap()[0] - eb.std.as_ref().unwrap()[0]).abs() < 1e-12
            );
        }
    }

    #[test]
    fn single_member_zero_anchor_equals_plain_mlp() {
        let ds = toy_dataset(24, |x| x * x);
        let cfg = MlpConfig::new(1, vec![16], 1, 17);
        let anchors = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let ens = train_anchor_ensemble(&ds, &cfg, &train_cfg(50), &anchors).unwrap();

        let mut plain = Mlp::init(cfg).unwrap();
        let xn = normalize_to_unit(&ds.inputs, &ds.bounds);
        plain.fit(&xn, &ds.targets, &train_cfg(50)).unwrap();
        // c = 0 in raw units normalizes to 0 here (bounds are symmetric).
        assert_eq!(ens.members[0].1.layers[0].w.data, plain.layers[0].w.data);
    }

    #[test]
    fn duplicate_anchor_members_identical() {
        let ds = toy_dataset(16, |x| x);
        let cfg = MlpConfig::new(1, vec![8], 1, 2);
        let anchors = Matrix::from_rows(&[vec![0.4], vec![0.4]]).unwrap();
        let ens = train_anchor_ensemble(&ds, &cfg, &train_cfg(20), &anchors).unwrap();
        assert_eq!(
            ens.members[0].1.layers[0].w.data,
            ens.members[1].1.layers[0].w.data
        );
        // Identical members give exactly zero spread.
        let est = predict_anchor_ensemble(&ens, &ds.inputs).unwrap();
        assert!(est.iter().all(|e| e.std.as_ref().unwrap()[0] == 0.0));
    }

    #[test]
    fn empty_anchor_list_rejected() {
        let ds = toy_dataset(8, |x| x);
        let cfg = MlpConfig::new(1, vec![4], 1, 0);
        let empty = Matrix::zeros(0, 1);
        assert!(train_anchor_ensemble(&ds, &cfg, &train_cfg(5), &empty).is_err());
    }

    #[test]
    fn anchor_mean_converges_with_k() {
        // Successive mean differences shrink (in the median over a grid) as
        // the anchor count grows over a fixed pool.
        let ds = toy_dataset(40, |x| (2.5 * x).sin());
        let cfg = MlpConfig::new(2, vec![24, 24], 1, 29);
        let model = train_delta_uq(&ds, &cfg, &train_cfg(300)).unwrap();
        let grid: Vec<Vec<f64>> = (0..21).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
        let grid = Matrix::from_rows(&grid).unwrap();

        let mut prev: Option<Vec<f64>> = None;
        let mut diffs = Vec::new();
        for k in [5usize, 10, 20, 40] {
            let anchors = model.sample_anchors(k, 123);
            let est = predict_delta_uq(&model, &grid, &anchors).unwrap();
            let mu: Vec<f64> = est.iter().map(|e| e.mean[0]).collect();
            if let Some(p) = &prev {
                let mut d: Vec<f64> = mu.iter().zip(p.iter()).map(|(a, b)| (a - b).abs()).collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                diffs.push(d[d.len() / 2]);
            }
            prev = Some(mu);
        }
        // Shrinkage is noisy step to step; require the trend and a small
        // absolute scale rather than strict monotonicity.
        assert!(diffs[2] < diffs[0], "diffs {diffs:?}");
        assert!(diffs.iter().all(|d| *d < 0.05), "diffs {diffs:?}");
    }
}
