//! Dense row-major storage and the weighted ridge solver shared by the
//! surrogate explainers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ridge added when the weighted normal equations are singular.
pub const RIDGE_FLOOR: f64 = 1e-8;

/// Row-major dense matrix. Rows are contiguous so that a row can be handed
/// straight to a model's predict function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty column count would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, indices: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        RowMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Solution of a weighted ridge regression with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct WeightedFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Set when the normal equations needed the [`RIDGE_FLOOR`] fallback.
    pub ill_conditioned: bool,
}

/// Minimizes `sum_i w_i (y_i - b - x_i . beta)^2 + lambda |beta|^2`.
///
/// The design is centered on its weighted mean, so the intercept is never
/// penalized. If the system is singular (or there are not more rows than
/// unknowns) the ridge is raised to at least [`RIDGE_FLOOR`] and the fit is
/// flagged.
pub fn weighted_ridge(
    design: &RowMatrix,
    target: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<WeightedFit> {
    fit_weighted(design, target, weights, lambda, true)
}

/// As [`weighted_ridge`] but through the origin (intercept fixed at 0).
pub fn weighted_ridge_through_origin(
    design: &RowMatrix,
    target: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<WeightedFit> {
    fit_weighted(design, target, weights, lambda, false)
}

fn fit_weighted(
    design: &RowMatrix,
    target: &[f64],
    weights: &[f64],
    lambda: f64,
    intercept: bool,
) -> Result<WeightedFit> {
    let n = design.nrows();
    let p = design.ncols();
    if target.len() != n || weights.len() != n {
        return Err(Error::InvalidInput(format!(
            "design has {n} rows but target/weights have {}/{}",
            target.len(),
            weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty regression design".into()));
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) || !wsum.is_finite() {
        return Err(Error::InvalidInput(
            "regression weights must have a positive finite sum".into(),
        ));
    }

    let mut xbar = vec![0.0; p];
    let mut ybar = 0.0;
    if intercept {
        for i in 0..n {
            let w = weights[i];
            for (m, v) in xbar.iter_mut().zip(design.row(i)) {
                *m += w * v;
            }
            ybar += w * target[i];
        }
        xbar.iter_mut().for_each(|m| *m /= wsum);
        ybar /= wsum;
    }

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut centered = vec![0.0; p];
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        for ((c, v), m) in centered.iter_mut().zip(design.row(i)).zip(&xbar) {
            *c = v - m;
        }
        let dy = target[i] - ybar;
        for a in 0..p {
            let wa = w * centered[a];
            rhs[a] += wa * dy;
            for b in 0..=a {
                gram[(a, b)] += wa * centered[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }

    let unknowns = p + usize::from(intercept);
    let underdetermined = n < unknowns || (intercept && n == unknowns - 1);
    let mut ill_conditioned = n <= p;
    let mut ridge = lambda.max(0.0);
    if underdetermined || n <= p {
        ridge = ridge.max(RIDGE_FLOOR);
    }

    let solve = |ridge: f64| -> Option<DVector<f64>> {
        let mut g = gram.clone();
        for a in 0..p {
            g[(a, a)] += ridge;
        }
        let beta = g.cholesky()?.solve(&rhs);
        beta.iter().all(|v| v.is_finite()).then_some(beta)
    };

    let beta = match solve(ridge) {
        Some(b) => b,
        None => {
            ill_conditioned = true;
            let scale = (0..p).map(|a| gram[(a, a)]).fold(0.0, f64::max);
            let floor = RIDGE_FLOOR * scale.max(1.0);
            solve(ridge.max(floor))
                .or_else(|| {
                    let mut g = gram.clone();
                    for a in 0..p {
                        g[(a, a)] += ridge;
                    }
                    g.svd(true, true).solve(&rhs, 1e-12).ok()
                })
                .ok_or_else(|| Error::InvalidInput("weighted normal equations unsolvable".into()))?
        }
    };

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = ybar - coefficients.iter().zip(&xbar).map(|(b, m)| b * m).sum::<f64>();
    Ok(WeightedFit {
        coefficients,
        intercept,
        ill_conditioned,
    })
}
