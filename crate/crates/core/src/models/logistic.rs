use super::{sigmoid, ModelParams, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::RowMatrix;

const GRAD_TOL: f64 = 1e-4;

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean log-loss plus `lambda / 2 * |w|^2` and its gradient.
/// `params` holds the weights followed by the bias.
pub fn logistic_objective(params: &[f64], x: &RowMatrix, y: &[u8], lambda: f64) -> (f64, Vec<f64>) {
    let d = x.ncols();
    let (w, b) = params.split_at(d);
    let n = y.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &label) in x.rows().zip(y) {
        let z = super::dot(w, row) + b[0];
        let t = f64::from(label);
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, v) in grad.iter_mut().zip(row) {
            *g += r * v;
        }
        grad[d] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    loss += 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    for j in 0..d {
        grad[j] += lambda * w[j];
    }
    (loss, grad)
}

pub(super) fn fit(x: &RowMatrix, y: &[u8], cfg: &TrainConfig) -> Result<(ModelParams, bool)> {
    let d = x.ncols();
    let mut params = vec![0.0; d + 1];
    let mut converged = false;
    for _ in 0..cfg.epochs {
        let (loss, grad) = logistic_objective(&params, x, y, cfg.ridge_lambda);
        if !loss.is_finite() {
            return Err(Error::Training("logistic loss became NaN".into()));
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < GRAD_TOL {
            converged = true;
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
    }
    let bias = params.pop().unwrap_or(0.0);
    Ok((ModelParams::Logistic { weights: params, bias }, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rng_from_seed(11);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<u8> = rows.iter().map(|r| u8::from(r[0] - 0.5 * r[2] > 0.1)).collect();
        let x = RowMatrix::from_rows(&rows).unwrap();
        for _ in 0..10 {
            let p: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            let (_, g) = logistic_objective(&p, &x, &y, 0.01);
            for j in 0..4 {
                let h = 1e-5;
                let mut hi = p.clone();
                let mut lo = p.clone();
                hi[j] += h;
                lo[j] -= h;
                let fd = (logistic_objective(&hi, &x, &y, 0.01).0
                    - logistic_objective(&lo, &x, &y, 0.01).0)
                    / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(1e-8);
                assert!(rel < 1e-4, "param {j}: fd {fd} vs analytic {}", g[j]);
            }
        }
    }
}
