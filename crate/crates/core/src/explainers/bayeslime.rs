use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::lime::LocalData;
use super::{Attribution, ExplainerKind, PerturbationConfig};
use crate::error::{Error, Result};
use crate::linalg::RIDGE_FLOOR;
use crate::models::Blackbox;

/// Inverse-gamma prior shape and rate on the noise variance.
const PRIOR_SHAPE: f64 = 1e-3;
const PRIOR_RATE: f64 = 1e-3;
/// Prior precision on the intercept; effectively flat.
const INTERCEPT_PRECISION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleAttribution {
    pub explainer: ExplainerKind,
    pub seed: u64,
    pub num_samples: usize,
    pub confidence: f64,
    pub intercept: f64,
    pub mean_weights: Vec<f64>,
    pub interval_low: Vec<f64>,
    pub interval_high: Vec<f64>,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl CredibleAttribution {
    pub fn widths(&self) -> Vec<f64> {
        self.interval_high
            .iter()
            .zip(&self.interval_low)
            .map(|(h, l)| h - l)
            .collect()
    }

    /// Posterior mean as a point attribution.
    pub fn to_attribution(&self) -> Attribution {
        Attribution {
            explainer: ExplainerKind::BayesLime,
            seed: self.seed,
            num_samples: self.num_samples,
            intercept: self.intercept,
            weights: self.mean_weights.clone(),
            feature_names: self.feature_names.clone(),
            ill_conditioned: false,
        }
    }
}

/// Conjugate normal-inverse-gamma regression on LIME's kernel-weighted
/// perturbation data. The kernel enters as per-sample precision, so a
/// sample with kernel weight `pi` has noise variance `s^2 / pi`. Slope
/// prior precision is `ridge_lambda` (floored); the intercept prior is flat.
pub fn bayeslime_explain<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    config: &PerturbationConfig,
    confidence: f64,
    seed: u64,
) -> Result<CredibleAttribution> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    let data = LocalData::collect(model, x, config, seed)?;
    let pi = data.absolute_kernel(config.kernel_width);
    let n = data.targets.len();
    let d = x.len();
    let p = d + 1;

    let mut precision = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut yty = 0.0;
    let mut row = vec![0.0; p];
    for i in 0..n {
        row[0] = 1.0;
        row[1..].copy_from_slice(data.offsets.row(i));
        let w = pi[i];
        let y = data.targets[i];
        yty += w * y * y;
        for a in 0..p {
            xty[a] += w * row[a] * y;
            for b in 0..=a {
                precision[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            precision[(b, a)] = precision[(a, b)];
        }
    }
    let slope_precision = config.ridge_lambda.max(RIDGE_FLOOR);
    precision[(0, 0)] += INTERCEPT_PRECISION;
    for a in 1..p {
        precision[(a, a)] += slope_precision;
    }

    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("posterior precision is not positive definite".into()))?;
    let mean = chol.solve(&xty);
    let cov = chol.inverse();

    let shape = PRIOR_SHAPE + n as f64 / 2.0;
    let quad = yty - mean.dot(&xty);
    let rate = PRIOR_RATE + 0.5 * quad.max(0.0);
    let dof = 2.0 * shape;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::InvalidInput(format!("posterior t distribution: {e}")))?;
    let q = t.inverse_cdf(0.5 + confidence / 2.0);

    let mut mean_weights = Vec::with_capacity(d);
    let mut low = Vec::with_capacity(d);
    let mut high = Vec::with_capacity(d);
    for j in 1..p {
        let scale = (rate / shape * cov[(j, j)]).max(0.0).sqrt();
        let m = mean[j];
        mean_weights.push(m);
        low.push(m - q * scale);
        high.push(m + q * scale);
    }
    Ok(CredibleAttribution {
        explainer: ExplainerKind::BayesLime,
        seed,
        num_samples: config.num_samples,
        confidence,
        intercept: mean[0],
        mean_weights,
        interval_low: low,
        interval_high: high,
        feature_names: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sigmoid, FnModel};

    fn linear() -> FnModel<impl Fn(&[f64]) -> f64 + Sync> {
        FnModel::new(3, |z: &[f64]| 0.5 * z[0] - 2.0 * z[1] + 0.1 * z[2])
    }

    #[test]
    fn posterior_contracts_on_linear_target() {
        let x = [0.2, -0.4, 1.0];
        let small = PerturbationConfig::for_dim(3).with_samples(100);
        let large = PerturbationConfig::for_dim(3).with_samples(10_000);
        let a = bayeslime_explain(&linear(), &x, &small, 0.95, 4).unwrap();
        let b = bayeslime_explain(&linear(), &x, &large, 0.95, 4).unwrap();
        for j in 0..3 {
            assert!(b.widths()[j] <= a.widths()[j]);
            assert!(b.widths()[j] < 1e-3);
        }
        for (m, t) in b.mean_weights.iter().zip([0.5, -2.0, 0.1]) {
            assert!((m - t).abs() < 1e-4);
        }
    }

    #[test]
    fn higher_confidence_is_strictly_wider() {
        let model = FnModel::new(2, |z: &[f64]| sigmoid(z[0] * z[1] + z[0]));
        let cfg = PerturbationConfig::for_dim(2).with_samples(300);
        let hi = bayeslime_explain(&model, &[0.3, 0.3], &cfg, 0.95, 8).unwrap();
        let lo = bayeslime_explain(&model, &[0.3, 0.3], &cfg, 0.5, 8).unwrap();
        for j in 0..2 {
            assert!(hi.widths()[j] > lo.widths()[j]);
            assert!(hi.interval_low[j] <= hi.mean_weights[j]);
            assert!(hi.mean_weights[j] <= hi.interval_high[j]);
        }
    }

    #[test]
    fn few_samples_leave_ignored_feature_undetermined() {
        let model = FnModel::new(3, |z: &[f64]| sigmoid(2.0 * z[0] - z[1]));
        let cfg = PerturbationConfig::for_dim(3).with_samples(5);
        for seed in 0..10 {
            let a = bayeslime_explain(&model, &[0.1, 0.2, 0.3], &cfg, 0.95, seed).unwrap();
            assert!(a.interval_low[2] <= 0.0 && 0.0 <= a.interval_high[2], "seed {seed}");
        }
    }

    #[test]
    fn confidence_outside_unit_interval_is_rejected() {
        let cfg = PerturbationConfig::for_dim(3);
        assert!(bayeslime_explain(&linear(), &[0.0; 3], &cfg, 1.0, 0).is_err());
    }
}
