//! Exact Gaussian-process regression with an RBF kernel, hyperparameters
//! selected from a fixed grid by maximizing the log marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::anchoring::UncertaintyEstimate;
use crate::data::Matrix;
use crate::error::{Error, Result};

/// Candidate hyperparameters searched during `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpHyperGrid {
    pub lengthscales: Vec<f64>,
    pub signal_variances: Vec<f64>,
    pub noise_variances: Vec<f64>,
}

impl Default for GpHyperGrid {
    fn default() -> Self {
        GpHyperGrid {
            lengthscales: log_space(1e-2, 1e1, 7),
            signal_variances: log_space(1e-2, 1e1, 5),
            noise_variances: log_space(1e-6, 1e-1, 6),
        }
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Selected RBF hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GpHypers {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

/// Fitted GP with a cached Cholesky factor of `K + noise I`.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub hypers: GpHypers,
    pub log_marginal_likelihood: f64,
    y_mean: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

fn rbf(xi: &[f64], xj: &[f64], lengthscale: f64, signal_variance: f64) -> f64 {
    let mut d2 = 0.0;
    for (a, b) in xi.iter().zip(xj.iter()) {
        let d = a - b;
        d2 += d * d;
    }
    signal_variance * (-0.5 * d2 / (lengthscale * lengthscale)).exp()
}

fn kernel_matrix(x: &Matrix, h: &GpHypers) -> DMatrix<f64> {
    let n = x.rows;
    DMatrix::from_fn(n, n, |i, j| rbf(x.row(i), x.row(j), h.lengthscale, h.signal_variance))
}

/// Cholesky of `K + (noise + jitter) I`, escalating jitter by x10 until it
/// succeeds or exceeds the cap.
fn factorize(k: &DMatrix<f64>, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mut jitter = 0.0;
    loop {
        let mut kn = k.clone();
        for i in 0..n {
            kn[(i, i)] += noise + jitter;
        }
        if let Some(chol) = Cholesky::new(kn) {
            return Ok((chol, jitter));
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX {
            return Err(Error::LinAlg(format!(
                "kernel matrix not positive definite after jitter {JITTER_MAX:e}"
            )));
        }
    }
}

fn fit_fixed(x: &Matrix, y: &[f64], hypers: GpHypers) -> Result<GpSurrogate> {
    let n = x.rows;
    if n < 1 {
        return Err(Error::Config("GP needs at least one training point".into()));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let k = kernel_matrix(x, &hypers);
    let (chol, _) = factorize(&k, hypers.noise_variance)?;
    let resid = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let alpha = chol.solve(&resid);
    let log_det: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * resid.dot(&alpha)
        - 0.5 * log_det
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok(GpSurrogate {
        x: x.clone(),
        y: y.to_vec(),
        hypers,
        log_marginal_likelihood: lml,
        y_mean,
        chol,
        alpha,
    })
}

/// Grid search over the hyper grid, keeping the model with the highest exact
/// log marginal likelihood.
pub fn gp_fit(x: &Matrix, y: &[f64], grid: &GpHyperGrid) -> Result<GpSurrogate> {
    if x.rows != y.len() {
        return Err(Error::Shape(format!("{} inputs vs {} targets", x.rows, y.len())));
    }
    if x.rows < 2 {
        return Err(Error::Config("GP fit needs at least 2 training points".into()));
    }
    let mut best: Option<GpSurrogate> = None;
    for &l in &grid.lengthscales {
        for &s in &grid.signal_variances {
            for &nv in &grid.noise_variances {
                let hypers = GpHypers {
                    lengthscale: l,
                    signal_variance: s,
                    noise_variance: nv,
                };
                match fit_fixed(x, y, hypers) {
                    Ok(gp) => {
                        if best
                            .as_ref()
                            .map_or(true, |b| gp.log_marginal_likelihood > b.log_marginal_likelihood)
                        {
                            best = Some(gp);
                        }
                    }
                    Err(Error::LinAlg(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    best.ok_or_else(|| Error::LinAlg("no hyperparameter setting produced a PD kernel".into()))
}

/// Refits with explicitly chosen hyperparameters (no search).
pub fn gp_fit_fixed(x: &Matrix, y: &[f64], hypers: GpHypers) -> Result<GpSurrogate> {
    fit_fixed(x, y, hypers)
}

impl GpSurrogate {
    /// Posterior mean and standard deviation at each query row.
    pub fn predict(&self, queries: &Matrix) -> Result<Vec<UncertaintyEstimate>> {
        if queries.cols != self.x.cols {
            return Err(Error::Shape(format!(
                "query width {} vs training width {}",
                queries.cols, self.x.cols
            )));
        }
        let n = self.x.rows;
        let mut out = Vec::with_capacity(queries.rows);
        for qi in 0..queries.rows {
            let q = queries.row(qi);
            let kstar = DVector::from_fn(n, |i, _| {
                rbf(self.x.row(i), q, self.hypers.lengthscale, self.hypers.signal_variance)
            });
            let mu = self.y_mean + kstar.dot(&self.alpha);
            let v = self.chol.solve(&kstar);
            let var = (self.hypers.signal_variance - kstar.dot(&v)).max(0.0);
            out.push(UncertaintyEstimate {
                mean: vec![mu],
                std: Some(vec![var.sqrt()]),
                count: n,
            });
        }
        Ok(out)
    }
}
