//! Closed-form and empirical neural-tangent-kernel machinery: the two-layer
//! ReLU dot-product kernel, its behavior under constant domain shifts, the
//! infinite-width prediction rule, finite-width empirical kernels, and
//! Fourier spectra of kernel slices.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::nn::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelGenerator {
    AnalyticNtk,
    ShiftedNtk,
    EmpiricalNtk,
}

/// Symmetric kernel matrix with a tag recording how it was generated.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    pub generator: KernelGenerator,
}

/// Fourier magnitudes of a kernel slice over a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub shift_c: f64,
}

const DOT_SLACK: f64 = 1e-9;

/// Two-layer ReLU NTK as a dot-product kernel on unit-norm inputs:
/// `h(u) = u (pi - acos(u)) / (2 pi)`.
pub fn ntk_dot(u: f64) -> Result<f64> {
    if u.abs() > 1.0 + DOT_SLACK {
        return Err(Error::Numeric(format!("dot product {u} outside [-1, 1]")));
    }
    let u = u.clamp(-1.0, 1.0);
    Ok(u * (std::f64::consts::PI - u.acos()) / (2.0 * std::f64::consts::PI))
}

/// Derivative of [`ntk_dot`] on the open interval `(-1, 1)`.
pub fn ntk_dot_derivative(u: f64) -> f64 {
    let pi = std::f64::consts::PI;
    (pi - u.acos()) / (2.0 * pi) + u / (2.0 * pi * (1.0 - u * u).sqrt())
}

fn unit(x: &[f64]) -> Result<Vec<f64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::Numeric("cannot normalize a (near-)zero vector".into()));
    }
    Ok(x.iter().map(|v| v / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Kernel under a constant domain shift, with the shifted inputs renormalized
/// to unit norm. Returns `(shifted kernel value, gamma)` where gamma is the
/// exact residual `K_unshifted - K_shifted`.
pub fn shifted_ntk(xi: &[f64], xj: &[f64], c: &[f64]) -> Result<(f64, f64)> {
    let ui = unit(xi)?;
    let uj = unit(xj)?;
    let base = ntk_dot(dot(&ui, &uj))?;
    let si: Vec<f64> = ui.iter().zip(c.iter()).map(|(a, b)| a - b).collect();
    let sj: Vec<f64> = uj.iter().zip(c.iter()).map(|(a, b)| a - b).collect();
    let si = unit(&si)?;
    let sj = unit(&sj)?;
    let shifted = ntk_dot(dot(&si, &sj))?;
    Ok((shifted, base - shifted))
}

/// First-order (in `c`) approximation of the gamma residual of
/// [`shifted_ntk`], kept as a diagnostic for the exact value.
pub fn gamma_taylor_first_order(xi: &[f64], xj: &[f64], c: &[f64]) -> Result<f64> {
    let ui = unit(xi)?;
    let uj = unit(xj)?;
    let u = dot(&ui, &uj);
    let s: Vec<f64> = ui.iter().zip(uj.iter()).map(|(a, b)| a + b).collect();
    // With renormalization, u shifts by -(1 - u) * (c . (xi + xj)) to first order.
    Ok(ntk_dot_derivative(u) * (1.0 - u) * dot(c, &s))
}

/// Kernel generators usable with [`infinite_width_predict`].
#[derive(Debug, Clone)]
pub enum Kernel {
    /// Eq.-style analytic NTK; inputs must be unit norm.
    AnalyticNtk,
    /// Analytic NTK on inputs shifted by `c` and renormalized.
    ShiftedNtk { c: Vec<f64> },
    /// Shift-invariant RBF control kernel.
    Rbf { lengthscale: f64 },
}

impl Kernel {
    pub fn eval(&self, xi: &[f64], xj: &[f64]) -> Result<f64> {
        match self {
            Kernel::AnalyticNtk => ntk_dot(dot(xi, xj)),
            Kernel::ShiftedNtk { c } => Ok(shifted_ntk(xi, xj, c)?.0),
            Kernel::Rbf { lengthscale } => {
                let d2: f64 = xi
                    .iter()
                    .zip(xj.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                Ok((-0.5 * d2 / (lengthscale * lengthscale)).exp())
            }
        }
    }

    pub fn matrix(&self, x: &Matrix) -> Result<KernelMatrix> {
        let n = x.rows;
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval(x.row(i), x.row(j))?;
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        let generator = match self {
            Kernel::AnalyticNtk => KernelGenerator::AnalyticNtk,
            Kernel::ShiftedNtk { .. } => KernelGenerator::ShiftedNtk,
            Kernel::Rbf { .. } => KernelGenerator::AnalyticNtk,
        };
        Ok(KernelMatrix { entries, generator })
    }
}

fn solve_psd(k: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = k.nrows();
    let mut jitter = 0.0;
    loop {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(kj) {
            return Ok(chol.solve(rhs));
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
        if jitter > 1e-6 {
            return Err(Error::LinAlg(
                "kernel matrix singular beyond jitter budget".into(),
            ));
        }
    }
}

/// Infinite-width prediction
/// `f(x_t) = f0(x_t) - K_{tX} K_{XX}^{-1} (f0(X) - Y)`.
///
/// At training points this interpolates the labels exactly.
pub fn infinite_width_predict(
    train_x: &Matrix,
    train_y: &[f64],
    test_x: &Matrix,
    f0_train: &[f64],
    f0_test: &[f64],
    kernel: &Kernel,
) -> Result<Vec<f64>> {
    if train_x.rows != train_y.len() || train_x.rows != f0_train.len() {
        return Err(Error::Shape("train_x / train_y / f0 length mismatch".into()));
    }
    if test_x.rows != f0_test.len() {
        return Err(Error::Shape("test_x / f0_test length mismatch".into()));
    }
    let n = train_x.rows;
    let kxx = kernel.matrix(train_x)?.entries;
    let resid = DVector::from_iterator(n, f0_train.iter().zip(train_y.iter()).map(|(a, b)| a - b));
    let alpha = solve_psd(&kxx, &resid)?;
    let mut out = Vec::with_capacity(test_x.rows);
    for t in 0..test_x.rows {
        let mut acc = f0_test[t];
        for i in 0..n {
            acc -= kernel.eval(test_x.row(t), train_x.row(i))? * alpha[i];
        }
        out.push(acc);
    }
    Ok(out)
}

/// Precomputed-kernel variant of [`infinite_width_predict`] for empirical
/// kernels: `k_test_train` holds `K_{x_t X}` rows.
pub fn infinite_width_predict_precomputed(
    k_train: &DMatrix<f64>,
    k_test_train: &DMatrix<f64>,
    train_y: &[f64],
    f0_train: &[f64],
    f0_test: &[f64],
) -> Result<Vec<f64>> {
    let n = k_train.nrows();
    let resid = DVector::from_iterator(n, f0_train.iter().zip(train_y.iter()).map(|(a, b)| a - b));
    let alpha = solve_psd(k_train, &resid)?;
    let mut out = Vec::with_capacity(k_test_train.nrows());
    for t in 0..k_test_train.nrows() {
        let mut acc = f0_test[t];
        for i in 0..n {
            acc -= k_test_train[(t, i)] * alpha[i];
        }
        out.push(acc);
    }
    Ok(out)
}

/// Empirical NTK of a finite scalar-output network at its current weights:
/// entry `(i, j)` is the inner product of the parameter gradients at
/// `x_i` and `x_j`.
pub fn empirical_ntk(model: &Mlp, x: &Matrix) -> Result<KernelMatrix> {
    let grads: Vec<Vec<f64>> = x
        .iter_rows()
        .map(|row| model.output_gradient(row))
        .collect::<Result<_>>()?;
    let n = grads.len();
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(&grads[i], &grads[j]);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        entries,
        generator: KernelGenerator::EmpiricalNtk,
    })
}

/// Empirical kernel of a width-`m` two-layer ReLU network in NTK scaling,
/// with gradients taken in the hidden weights and fixed unit second-layer
/// weights. Converges to [`ntk_dot`] as `m` grows.
pub fn two_layer_relu_kernel(width: usize, seed: u64, x: &Matrix) -> KernelMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = x.cols;
    let n = x.rows;
    let mut entries = DMatrix::zeros(n, n);
    let mut active = vec![0u8; n];
    let mut counts: DMatrix<f64> = DMatrix::zeros(n, n);
    for _ in 0..width {
        let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        for i in 0..n {
            active[i] = (dot(&w, x.row(i)) > 0.0) as u8;
        }
        for i in 0..n {
            if active[i] == 0 {
                continue;
            }
            for j in i..n {
                if active[j] == 1 {
                    counts[(i, j)] += 1.0;
                }
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = counts[(i, j)] / width as f64 * dot(x.row(i), x.row(j));
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    KernelMatrix {
        entries,
        generator: KernelGenerator::EmpiricalNtk,
    }
}

/// Relative Frobenius distance `|A - B|_F / |B|_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = a - b;
    diff.norm() / b.norm()
}

/// Embeds `t` values from `[0, 1]` injectively on the unit circle so that
/// pairwise dot products stay in `[-1, 1]` and the analytic kernel applies.
pub fn embed_unit_circle(ts: &[f64]) -> Matrix {
    let rows: Vec<Vec<f64>> = ts
        .iter()
        .map(|&t| {
            let theta = 0.9 * std::f64::consts::PI * t;
            vec![theta.cos(), theta.sin()]
        })
        .collect();
    Matrix::from_rows(&rows).expect("rectangular by construction")
}

/// NTK slice `k(x, x0)` over a uniform grid on the unit interval, with the
/// whole domain shifted by `shift_c` before the unit-norm convention is
/// applied. `x0` is the grid midpoint.
pub fn ntk_slice_on_grid(n_grid: usize, shift_c: f64) -> Result<Vec<f64>> {
    let pts = embed_unit_circle(
        &(0..n_grid)
            .map(|i| i as f64 / n_grid as f64)
            .collect::<Vec<_>>(),
    );
    let c = vec![shift_c, shift_c];
    let mid = pts.row(n_grid / 2).to_vec();
    (0..n_grid)
        .map(|i| Ok(shifted_ntk(pts.row(i), &mid, &c)?.0))
        .collect()
}

/// RBF control slice over the same grid; the shift cancels exactly.
pub fn rbf_slice_on_grid(n_grid: usize, shift_c: f64, lengthscale: f64) -> Vec<f64> {
    let t0 = (n_grid / 2) as f64 / n_grid as f64 - shift_c;
    (0..n_grid)
        .map(|i| {
            let t = i as f64 / n_grid as f64 - shift_c;
            (-0.5 * (t - t0) * (t - t0) / (lengthscale * lengthscale)).exp()
        })
        .collect()
}

/// Magnitudes of the discrete Fourier transform of a kernel slice.
/// The grid length must be a power of two.
pub fn kernel_spectrum(slice: &[f64], shift_c: f64) -> Result<SpectrumProfile> {
    let n = slice.len();
    if n == 0 || n & (n - 1) != 0 {
        return Err(Error::Config(format!("grid length {n} is not a power of two")));
    }
    let mut buf: Vec<Complex<f64>> = slice.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    Ok(SpectrumProfile {
        frequencies: (0..=half).map(|k| k as f64).collect(),
        magnitudes: buf[..=half].iter().map(|c| c.norm()).collect(),
        shift_c,
    })
}

/// L2 distance between L2-normalized magnitude vectors.
pub fn normalized_spectrum_distance(a: &SpectrumProfile, b: &SpectrumProfile) -> f64 {
    let na = a.magnitudes.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.magnitudes.iter().map(|v| v * v).sum::<f64>().sqrt();
    a.magnitudes
        .iter()
        .zip(b.magnitudes.iter())
        .map(|(x, y)| {
            let d = x / na - y / nb;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}
