use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_instance, Attribution, ExplainerKind, PerturbationConfig};
use crate::error::Result;
use crate::linalg::{weighted_ridge, RowMatrix};
use crate::models::Blackbox;
use crate::rng::rng_from_seed;

/// `num_samples` rows of `x + eps`, `eps ~ N(0, diag(cov))`.
pub fn sample_perturbations(x: &[f64], config: &PerturbationConfig, seed: u64) -> Result<RowMatrix> {
    config.validate(x.len())?;
    let d = x.len();
    let sd: Vec<f64> = match &config.cov_diagonal {
        Some(cov) => cov.iter().map(|v| v.sqrt()).collect(),
        None => vec![1.0; d],
    };
    let mut rng = rng_from_seed(seed);
    let mut out = RowMatrix::zeros(config.num_samples, d);
    for i in 0..config.num_samples {
        let row = out.row_mut(i);
        for j in 0..d {
            let e: f64 = rng.sample(StandardNormal);
            row[j] = x[j] + sd[j] * e;
        }
    }
    Ok(out)
}

/// Perturbation data shared by LIME and BayesLIME.
pub(crate) struct LocalData {
    /// `z_i - x`, so the surrogate intercept estimates `f(x)`.
    pub offsets: RowMatrix,
    pub targets: Vec<f64>,
    /// Squared distances `|z_i - x|^2`.
    pub sq_dist: Vec<f64>,
}

impl LocalData {
    pub fn collect<M: Blackbox + ?Sized>(
        model: &M,
        x: &[f64],
        config: &PerturbationConfig,
        seed: u64,
    ) -> Result<Self> {
        check_instance(model.input_dim(), x)?;
        let mut offsets = sample_perturbations(x, config, seed)?;
        let n = offsets.nrows();
        let mut targets = Vec::with_capacity(n);
        let mut sq_dist = Vec::with_capacity(n);
        for i in 0..n {
            targets.push(model.predict_proba(offsets.row(i)));
            let row = offsets.row_mut(i);
            let mut s = 0.0;
            for (v, xv) in row.iter_mut().zip(x) {
                *v -= xv;
                s += *v * *v;
            }
            sq_dist.push(s);
        }
        Ok(Self {
            offsets,
            targets,
            sq_dist,
        })
    }

    /// Exponential kernel rescaled to mean 1. The nearest sample is used as
    /// the reference so a narrow width cannot underflow every weight.
    pub fn relative_kernel(&self, width: f64) -> Vec<f64> {
        let min = self.sq_dist.iter().copied().fold(f64::INFINITY, f64::min);
        let s2 = width * width;
        let mut w: Vec<f64> = self.sq_dist.iter().map(|d| (-(d - min) / s2).exp()).collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|v| *v /= mean);
        w
    }

    /// The raw kernel `exp(-d^2 / sigma^2)`, falling back to the relative
    /// form when it underflows everywhere.
    pub fn absolute_kernel(&self, width: f64) -> Vec<f64> {
        let s2 = width * width;
        let w: Vec<f64> = self.sq_dist.iter().map(|d| (-d / s2).exp()).collect();
        if w.iter().any(|v| *v > 1e-280) {
            w
        } else {
            let min = self.sq_dist.iter().copied().fold(f64::INFINITY, f64::min);
            self.sq_dist.iter().map(|d| (-(d - min) / s2).exp()).collect()
        }
    }
}

/// Ridge-regularized kernel-weighted linear surrogate around `x`.
pub fn lime_explain<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    config: &PerturbationConfig,
    seed: u64,
) -> Result<Attribution> {
    let data = LocalData::collect(model, x, config, seed)?;
    let kernel = data.relative_kernel(config.kernel_width);
    let fit = weighted_ridge(&data.offsets, &data.targets, &kernel, config.ridge_lambda)?;
    Ok(Attribution {
        explainer: ExplainerKind::Lime,
        seed,
        num_samples: config.num_samples,
        intercept: fit.intercept,
        weights: fit.coefficients,
        feature_names: Vec::new(),
        ill_conditioned: fit.ill_conditioned,
    })
}
