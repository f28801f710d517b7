//! RBF-kernel classifier: regularized kernel least squares on +-1 targets,
//! squashed through a sigmoid.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::{ModelParams, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::{RowMatrix, RIDGE_FLOOR};
use crate::rng::{rng_from_seed, substream};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(super) fn score(gamma: f64, centers: &RowMatrix, coefficients: &[f64], bias: f64, x: &[f64]) -> f64 {
    let mut s = bias;
    for (c, a) in centers.rows().zip(coefficients) {
        s += a * (-gamma * sq_dist(c, x)).exp();
    }
    s
}

pub(super) fn fit(x: &RowMatrix, y: &[u8], cfg: &TrainConfig) -> Result<(ModelParams, bool)> {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    if idx.len() > cfg.rbf_max_centers {
        idx.shuffle(&mut rng_from_seed(substream(cfg.seed, "rbf-centers")));
        idx.truncate(cfg.rbf_max_centers);
        idx.sort_unstable();
    }
    let centers = x.select_rows(&idx);
    let targets: Vec<f64> = idx.iter().map(|&i| if y[i] == 1 { 1.0 } else { -1.0 }).collect();
    let bias = crate::stats::mean(&targets);
    let m = idx.len();
    let gram = DMatrix::from_fn(m, m, |i, j| {
        (-cfg.rbf_gamma * sq_dist(centers.row(i), centers.row(j))).exp()
    });
    let rhs = DVector::from_iterator(m, targets.iter().map(|t| t - bias));
    let lambda = cfg.ridge_lambda.max(RIDGE_FLOOR);
    let mut regularized = gram.clone();
    for i in 0..m {
        regularized[(i, i)] += lambda;
    }
    let (alpha, converged) = match regularized.cholesky() {
        Some(ch) => (ch.solve(&rhs), true),
        None => {
            let mut g = gram;
            for i in 0..m {
                g[(i, i)] += 1e-6;
            }
            let ch = g
                .cholesky()
                .ok_or_else(|| Error::Training("kernel system is not positive definite".into()))?;
            (ch.solve(&rhs), false)
        }
    };
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("kernel coefficients are not finite".into()));
    }
    Ok((
        ModelParams::RbfKernel {
            gamma: cfg.rbf_gamma,
            centers,
            coefficients: alpha.iter().copied().collect(),
            bias,
        },
        converged,
    ))
}
