use super::{ModelParams, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::RowMatrix;

/// Regularized hinge objective, labels mapped to -1/+1.
fn objective(w: &[f64], b: f64, x: &RowMatrix, y: &[u8], lambda: f64) -> f64 {
    let hinge: f64 = x
        .rows()
        .zip(y)
        .map(|(row, &label)| {
            let t = if label == 1 { 1.0 } else { -1.0 };
            (1.0 - t * (super::dot(w, row) + b)).max(0.0)
        })
        .sum();
    hinge / y.len() as f64 + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Full-batch subgradient descent with a `lr / sqrt(1 + epoch)` step.
/// Keeps the best iterate, since subgradient steps are not monotone.
pub(super) fn fit(x: &RowMatrix, y: &[u8], cfg: &TrainConfig) -> Result<(ModelParams, bool)> {
    let d = x.ncols();
    let n = y.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (objective(&w, b, x, y, cfg.ridge_lambda), w.clone(), b);
    let mut last_improvement = 0;
    for epoch in 0..cfg.epochs {
        let mut gw: Vec<f64> = w.iter().map(|v| cfg.ridge_lambda * v).collect();
        let mut gb = 0.0;
        for (row, &label) in x.rows().zip(y) {
            let t = if label == 1 { 1.0 } else { -1.0 };
            if t * (super::dot(&w, row) + b) < 1.0 {
                for (g, v) in gw.iter_mut().zip(row) {
                    *g -= t * v / n;
                }
                gb -= t / n;
            }
        }
        let step = cfg.learning_rate / (1.0 + epoch as f64).sqrt();
        for (p, g) in w.iter_mut().zip(&gw) {
            *p -= step * g;
        }
        b -= step * gb;
        let obj = objective(&w, b, x, y, cfg.ridge_lambda);
        if !obj.is_finite() {
            return Err(Error::Training("hinge objective became NaN".into()));
        }
        if obj < best.0 - 1e-9 {
            best = (obj, w.clone(), b);
            last_improvement = epoch;
        }
    }
    // no progress over the final tenth of the budget counts as converged
    let converged = cfg.epochs - last_improvement > cfg.epochs / 10;
    Ok((
        ModelParams::LinearMargin {
            weights: best.1,
            bias: best.2,
        },
        converged,
    ))
}
