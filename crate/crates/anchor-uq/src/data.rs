//! Row-major matrix and dataset containers shared across the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, 0));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "ragged rows: expected {} columns, got {}",
                    cols,
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "flat buffer of {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }
}

/// Paired inputs/targets with per-dimension feature bounds.
///
/// The training inputs double as the anchor pool for the anchoring methods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub bounds: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if inputs.rows == 0 {
            return Err(Error::Config("dataset must contain at least one sample".into()));
        }
        if inputs.rows != targets.rows {
            return Err(Error::Shape(format!(
                "{} input rows vs {} target rows",
                inputs.rows, targets.rows
            )));
        }
        if bounds.len() != inputs.cols {
            return Err(Error::Shape(format!(
                "{} bounds for {} feature columns",
                bounds.len(),
                inputs.cols
            )));
        }
        for &(lo, hi) in &bounds {
            if !(lo < hi) {
                return Err(Error::Config(format!("bounds must satisfy low < high, got ({lo}, {hi})")));
            }
        }
        if inputs.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset inputs contain non-finite values".into()));
        }
        Ok(Dataset {
            inputs,
            targets,
            bounds,
        })
    }

    /// Bounds inferred from the observed column ranges (padded when degenerate).
    pub fn with_inferred_bounds(inputs: Matrix, targets: Matrix) -> Result<Self> {
        let mut bounds = Vec::with_capacity(inputs.cols);
        for j in 0..inputs.cols {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..inputs.rows {
                lo = lo.min(inputs.get(i, j));
                hi = hi.max(inputs.get(i, j));
            }
            if !(lo < hi) {
                lo -= 0.5;
                hi += 0.5;
            }
            bounds.push((lo, hi));
        }
        Dataset::new(inputs, targets, bounds)
    }

    pub fn n(&self) -> usize {
        self.inputs.rows
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols
    }
}

/// Maps rows into `[-1, 1]` per dimension using the given bounds.
pub fn normalize_to_unit(x: &Matrix, bounds: &[(f64, f64)]) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let (lo, hi) = bounds[j];
            *v = 2.0 * (*v - lo) / (hi - lo) - 1.0;
        }
    }
    out
}

/// Inverse of [`normalize_to_unit`].
pub fn denormalize_from_unit(x: &Matrix, bounds: &[(f64, f64)]) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let (lo, hi) = bounds[j];
            *v = lo + (*v + 1.0) * 0.5 * (hi - lo);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rows_rejected() {
        let err = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]);
        assert!(err.is_err());
    }

    #[test]
    fn bad_bounds_rejected() {
        let x = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(Dataset::new(x, y, vec![(1.0, 1.0)]).is_err());
    }

    #[test]
    fn normalize_round_trip() {
        let bounds = vec![(-2.0, 6.0), (0.0, 1.0)];
        let x = Matrix::from_rows(&[vec![-2.0, 0.5], vec![6.0, 1.0]]).unwrap();
        let u = normalize_to_unit(&x, &bounds);
        assert_eq!(u.row(0), &[-1.0, 0.0]);
        assert_eq!(u.row(1), &[1.0, 1.0]);
        let back = denormalize_from_unit(&u, &bounds);
        for (a, b) in back.data.iter().zip(x.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
