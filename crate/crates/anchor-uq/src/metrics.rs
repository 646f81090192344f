//! Calibration and outlier-detection metrics.
//!
//! Convention throughout: `scores` are uncertainty scores where *higher*
//! means more likely out-of-distribution, and `labels` mark OOD samples
//! with `true`.

use crate::error::{Error, Result};

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Metric("non-finite score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Metric(
            "need both positive and negative labels".into(),
        ));
    }
    Ok(())
}

/// Area under the ROC curve via the rank-sum identity; ties get midranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scores(scores, labels)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Midranks over tied score groups, 1-based.
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = n as f64 - n_pos;
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Detection accuracy: best balanced accuracy over all score thresholds,
/// classifying `score >= t` as OOD.
pub fn dtacc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scores(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let mut best: f64 = 0.0;
    for &t in &thresholds {
        let mut tp = 0.0;
        let mut tn = 0.0;
        for (&s, &l) in scores.iter().zip(labels) {
            if l && s >= t {
                tp += 1.0;
            } else if !l && s < t {
                tn += 1.0;
            }
        }
        best = best.max(0.5 * (tp / n_pos + tn / n_neg));
    }
    Ok(best)
}

/// Area under the precision-recall curve, computed over the exact PR
/// points at every threshold (step-wise interpolation in recall).
fn aupr(scores: &[f64], positives: &[bool]) -> f64 {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Descending scores: highest score predicted positive first.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let total_pos = positives.iter().filter(|&&l| l).count() as f64;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < n {
        // Consume the full tie group before emitting a PR point.
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if positives[idx] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        let recall = tp / total_pos;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    area
}

/// AUPR treating OOD (`label == true`) as the positive class.
pub fn aupr_out(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scores(scores, labels)?;
    Ok(aupr(scores, labels))
}

/// AUPR treating in-distribution as the positive class (scores negated so
/// in-distribution ranks first).
pub fn aupr_in(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scores(scores, labels)?;
    let neg_scores: Vec<f64> = scores.iter().map(|s| -s).collect();
    let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
    Ok(aupr(&neg_scores, &flipped))
}

fn check_probs(probs: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Shape(format!(
            "{} probability rows vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let m = probs[0].len();
    for (row, &label) in probs.iter().zip(labels) {
        if row.len() != m {
            return Err(Error::Shape("ragged probability rows".into()));
        }
        if label >= m {
            return Err(Error::Metric(format!("label {label} out of range {m}")));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Metric(format!(
                "row is not a probability distribution (sum {sum})"
            )));
        }
    }
    Ok(m)
}

/// Expected calibration error with `bins` equal-width confidence bins over
/// [0, 1], weighting each bin by its sample count.
pub fn ece(probs: &[Vec<f64>], labels: &[usize], bins: usize) -> Result<f64> {
    check_probs(probs, labels)?;
    if bins == 0 {
        return Err(Error::Config("ece needs at least 1 bin".into()));
    }
    let n = probs.len() as f64;
    let mut bin_conf = vec![0.0; bins];
    let mut bin_acc = vec![0.0; bins];
    let mut bin_count = vec![0usize; bins];
    for (row, &label) in probs.iter().zip(labels) {
        let (pred, &conf) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let b = ((conf * bins as f64) as usize).min(bins - 1);
        bin_conf[b] += conf;
        bin_acc[b] += (pred == label) as usize as f64;
        bin_count[b] += 1;
    }
    let mut e = 0.0;
    for b in 0..bins {
        if bin_count[b] == 0 {
            continue;
        }
        let c = bin_count[b] as f64;
        e += (c / n) * (bin_acc[b] / c - bin_conf[b] / c).abs();
    }
    Ok(e)
}

/// Mean negative log-likelihood of the true class; probabilities are
/// clamped at 1e-12 to keep the value finite.
pub fn nll(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    Ok(nll_detailed(probs, labels)?.0)
}

/// NLL plus the number of samples whose true-class probability had to be
/// clamped at 1e-12.
pub fn nll_detailed(probs: &[Vec<f64>], labels: &[usize]) -> Result<(f64, usize)> {
    check_probs(probs, labels)?;
    let mut clamped = 0;
    let mut total = 0.0;
    for (row, &label) in probs.iter().zip(labels) {
        let p = row[label];
        if p < 1e-12 {
            clamped += 1;
        }
        total += -p.max(1e-12).ln();
    }
    Ok((total / probs.len() as f64, clamped))
}

/// Multiclass Brier score: mean squared distance to the one-hot label.
pub fn brier(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_probs(probs, labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(row, &label)| {
            row.iter()
                .enumerate()
                .map(|(j, &p)| {
                    let t = (j == label) as usize as f64;
                    (p - t).powi(2)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Scales each logit row by `1 - s_i` where `s_i` is the per-sample mean of
/// the per-class uncertainties, min-max normalized across the batch into
/// [0, 1). Preserves each row's argmax; rows with higher uncertainty land
/// closer to uniform after softmax. A constant-uncertainty batch degenerates
/// to no tempering.
pub fn temper_logits(logits: &[Vec<f64>], sigma_per_class: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if logits.len() != sigma_per_class.len() {
        return Err(Error::Shape(format!(
            "{} logit rows vs {} uncertainty rows",
            logits.len(),
            sigma_per_class.len()
        )));
    }
    let sigma: Vec<f64> = sigma_per_class
        .iter()
        .map(|row| {
            if row.is_empty() {
                return Err(Error::Shape("empty uncertainty row".into()));
            }
            if row.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::Metric("uncertainties must be finite and >= 0".into()));
            }
            Ok(row.iter().sum::<f64>() / row.len() as f64)
        })
        .collect::<Result<_>>()?;
    let lo = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sigma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let out = logits
        .iter()
        .zip(&sigma)
        .map(|(row, &s)| {
            // Keep the factor strictly positive so the argmax survives even
            // for the most uncertain sample.
            let norm = if span > 0.0 {
                (s - lo) / span * (1.0 - 1e-6)
            } else {
                0.0
            };
            row.iter().map(|&z| z * (1.0 - norm)).collect()
        })
        .collect();
    Ok(out)
}

pub fn softmax_rows(logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
    logits
        .iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&z| (z - m).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn argmax(row: &[f64]) -> usize {
        row.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    }

    /// Brute-force AUROC: fraction of (positive, negative) pairs ranked
    /// correctly, ties at half credit.
    fn auroc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut total = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                total += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / total
    }

    #[test]
    fn auroc_perfect_and_inverted() {
        let labels = [false, false, true, true];
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
    }

    #[test]
    fn auroc_matches_pairwise_oracle_with_ties() {
        let scores = [0.3, 0.7, 0.3, 0.9, 0.1, 0.7, 0.5];
        let labels = [false, true, true, true, false, false, true];
        let fast = auroc(&scores, &labels).unwrap();
        let slow = auroc_oracle(&scores, &labels);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn dtacc_matches_exhaustive_threshold_search() {
        let scores = [0.2, 0.35, 0.35, 0.6, 0.8, 0.1, 0.55];
        let labels = [false, false, true, true, true, false, false];
        let got = dtacc(&scores, &labels).unwrap();
        // Sweep a fine grid of thresholds as an independent check.
        let mut best: f64 = 0.0;
        let n_pos = labels.iter().filter(|&&l| l).count() as f64;
        let n_neg = labels.len() as f64 - n_pos;
        let mut t = 0.0;
        while t <= 1.0 {
            let mut tp = 0.0;
            let mut tn = 0.0;
            for (&s, &l) in scores.iter().zip(&labels) {
                if l && s >= t {
                    tp += 1.0;
                } else if !l && s < t {
                    tn += 1.0;
                }
            }
            best = best.max(0.5 * (tp / n_pos + tn / n_neg));
            t += 1e-3;
        }
        assert!((got - best).abs() < 1e-9, "{got} vs {best}");
    }

    #[test]
    fn aupr_perfect_separation() {
        let labels = [false, false, true, true];
        let scores = [0.1, 0.2, 0.8, 0.9];
        assert!((aupr_out(&scores, &labels).unwrap() - 1.0).abs() < 1e-12);
        assert!((aupr_in(&scores, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aupr_hand_case() {
        // Descending scores: s=0.9 pos, 0.8 neg, 0.7 pos, 0.6 neg.
        // Points: r=.5 p=1; r=.5 p=.5; r=1 p=2/3; r=1 p=.5.
        // Area = .5*1 + 0 + .5*(2/3) + 0 = 5/6.
        let scores = [0.9, 0.8, 0.7, 0.6];
        let labels = [true, false, true, false];
        let got = aupr_out(&scores, &labels).unwrap();
        assert!((got - 5.0 / 6.0).abs() < 1e-12, "{got}");
    }

    #[test]
    fn degenerate_labels_rejected() {
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(dtacc(&[0.1, 0.2], &[false, false]).is_err());
        assert!(auroc(&[0.1], &[true, false]).is_err());
        assert!(auroc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }

    #[test]
    fn ece_hand_computed() {
        // Two samples in bin 14 ([0.933.., 1.0]): conf 0.95 & 0.99,
        // accuracy 0.5 -> |0.5 - 0.97| = 0.47. One sample in bin 9:
        // conf 0.6, correct -> |1 - 0.6| = 0.4.
        let probs = vec![
            vec![0.95, 0.05],
            vec![0.01, 0.99],
            vec![0.6, 0.4],
        ];
        let labels = vec![0, 0, 0];
        let got = ece(&probs, &labels, 15).unwrap();
        let expected = (2.0 / 3.0) * 0.47 + (1.0 / 3.0) * 0.4;
        assert!((got - expected).abs() < 1e-12, "{got}");
    }

    #[test]
    fn ece_zero_for_perfectly_calibrated_bin() {
        // All confidence 0.8, 4 of 5 correct -> |0.8 - 0.8| = 0.
        let probs = vec![vec![0.8, 0.2]; 5];
        let labels = vec![0, 0, 0, 0, 1];
        assert!(ece(&probs, &labels, 15).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nll_and_brier_hand_computed() {
        let probs = vec![vec![0.7, 0.3], vec![0.2, 0.8]];
        let labels = vec![0, 0];
        let expect_nll = -(0.7f64.ln() + 0.2f64.ln()) / 2.0;
        assert!((nll(&probs, &labels).unwrap() - expect_nll).abs() < 1e-12);
        let expect_brier =
            ((0.3f64.powi(2) * 2.0) + (0.8f64.powi(2) * 2.0)) / 2.0;
        assert!((brier(&probs, &labels).unwrap() - expect_brier).abs() < 1e-12);
    }

    #[test]
    fn nll_clamps_zero_probability() {
        let probs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let labels = vec![1, 1];
        let v = nll(&probs, &labels).unwrap();
        assert!(v.is_finite());
        assert!((v - (-(1e-12f64.ln()) + 0.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_probability_rows_rejected() {
        assert!(ece(&[vec![0.5, 0.6]], &[0], 15).is_err());
        assert!(nll(&[vec![0.5, 0.5]], &[2]).is_err());
        assert!(brier(&[vec![0.5, 0.5], vec![0.3]], &[0, 0]).is_err());
    }

    #[test]
    fn tempering_pushes_uncertain_rows_toward_uniform() {
        let logits = vec![vec![2.0, -1.0, 0.5], vec![2.0, -1.0, 0.5]];
        let sigma = vec![vec![0.0, 0.0, 0.0], vec![4.0, 5.0, 6.0]];
        let tempered = temper_logits(&logits, &sigma).unwrap();
        let p = softmax_rows(&tempered);
        // Confident row keeps its sharpness; uncertain row flattens.
        assert!(p[0][0] > p[1][0]);
        assert!(p[1].iter().all(|&v| (v - 1.0 / 3.0).abs() < 0.05));
        assert_eq!(argmax(&p[1]), 0);
    }

    #[test]
    fn tempering_constant_sigma_is_identity() {
        let logits = vec![vec![1.0, -2.0], vec![0.3, 0.4]];
        let sigma = vec![vec![2.5, 2.5], vec![3.0, 2.0]]; // both mean 2.5
        let out = temper_logits(&logits, &sigma).unwrap();
        assert_eq!(out, logits);
    }

    #[test]
    fn tempering_two_sample_hand_case() {
        // Mean sigmas (1, 3) min-max to (0, ~1-): first row untouched,
        // second row shrunk by almost the full factor.
        let logits = vec![vec![4.0, 1.0], vec![4.0, 1.0]];
        let sigma = vec![vec![1.0, 1.0], vec![3.0, 3.0]];
        let out = temper_logits(&logits, &sigma).unwrap();
        assert_eq!(out[0], logits[0]);
        let factor = out[1][0] / 4.0;
        assert!((factor - 1e-6).abs() < 1e-9, "factor {factor}");
        assert!(out[1][0] > 0.0);
    }

    #[test]
    fn nll_detailed_counts_clamped() {
        let probs = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        let (_, clamped) = nll_detailed(&probs, &[1, 0]).unwrap();
        assert_eq!(clamped, 1);
    }

    proptest! {
        #[test]
        fn tempering_preserves_argmax(
            rows in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 4), 2..12),
            sigmas in proptest::collection::vec(
                proptest::collection::vec(0.0f64..10.0, 4), 12),
        ) {
            let sigma = &sigmas[..rows.len()];
            // Skip rows whose top-2 logits are nearly tied: scaling can
            // legitimately reorder within float error there.
            let distinct = rows.iter().all(|r| {
                let mut s = r.clone();
                s.sort_by(|a, b| b.partial_cmp(a).unwrap());
                s[0] - s[1] > 1e-6
            });
            prop_assume!(distinct);
            let tempered = temper_logits(&rows, sigma).unwrap();
            for (before, after) in rows.iter().zip(&tempered) {
                prop_assert_eq!(argmax(before), argmax(after));
            }
        }

        #[test]
        fn auroc_invariant_to_monotone_transform(
            raw in proptest::collection::vec(-3.0f64..3.0, 6..24),
        ) {
            let labels: Vec<bool> = raw.iter().enumerate().map(|(i, _)| i % 3 == 0).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = auroc(&raw, &labels).unwrap();
            let warped: Vec<f64> = raw.iter().map(|&s| (s / 2.0).tanh() * 7.0 + 1.0).collect();
            let b = auroc(&warped, &labels).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn auroc_always_matches_pairwise_oracle(
            scores in proptest::collection::vec(0.0f64..1.0, 5..20),
        ) {
            let labels: Vec<bool> = scores.iter().enumerate().map(|(i, _)| i % 2 == 0).collect();
            let fast = auroc(&scores, &labels).unwrap();
            let slow = auroc_oracle(&scores, &labels);
            prop_assert!((fast - slow).abs() < 1e-12);
        }
    }
}
