//! End-to-end property: anchored uncertainty separates far-away outliers
//! from in-distribution samples on a two-moons-style classification task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use anchor_uq::anchoring::{predict_delta_uq, train_delta_uq};
use anchor_uq::data::{Dataset, Matrix};
use anchor_uq::metrics::auroc;
use anchor_uq::nn::{Loss, MlpConfig, TrainConfig};

fn moon_point(rng: &mut ChaCha8Rng, upper: bool) -> Vec<f64> {
    let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let noise = |rng: &mut ChaCha8Rng| rng.gen_range(-0.08..0.08);
    if upper {
        vec![t.cos() + noise(rng), t.sin() + noise(rng)]
    } else {
        vec![1.0 - t.cos() + noise(rng), 0.5 - t.sin() + noise(rng)]
    }
}

#[test]
fn outlier_uncertainty_dominates_in_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n_per_class = 60;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..2 * n_per_class {
        let upper = i % 2 == 0;
        xs.push(moon_point(&mut rng, upper));
        ys.push(if upper { vec![1.0, 0.0] } else { vec![0.0, 1.0] });
    }
    let dataset = Dataset::new(
        Matrix::from_rows(&xs).unwrap(),
        Matrix::from_rows(&ys).unwrap(),
        vec![(-1.5, 2.5), (-1.0, 1.5)],
    )
    .unwrap();

    let cfg = MlpConfig::new(4, vec![48, 48], 2, 7);
    let train = TrainConfig {
        learning_rate: 3e-3,
        epochs: 250,
        batch_size: 32,
        loss: Loss::Mse,
    };
    let model = train_delta_uq(&dataset, &cfg, &train).unwrap();

    // Fresh in-distribution points vs far outliers on a surrounding ring.
    let mut queries = Vec::new();
    let mut labels = Vec::new();
    for i in 0..60 {
        queries.push(moon_point(&mut rng, i % 2 == 0));
        labels.push(false);
    }
    for _ in 0..60 {
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = rng.gen_range(4.0..6.0);
        queries.push(vec![0.5 + r * theta.cos(), 0.25 + r * theta.sin()]);
        labels.push(true);
    }
    let q = Matrix::from_rows(&queries).unwrap();
    let anchors = model.sample_anchors(20, 11);
    let est = predict_delta_uq(&model, &q, &anchors).unwrap();
    // Mean sigma across both class outputs as the uncertainty score.
    let scores: Vec<f64> = est
        .iter()
        .map(|e| {
            let s = e.std.as_ref().unwrap();
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    let a = auroc(&scores, &labels).unwrap();
    assert!(a > 0.8, "outlier-vs-inlier AUROC {a}");
}
