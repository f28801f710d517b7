//! Boundary-informed sampling: perturbation variances scaled by the
//! tangent attribution at the nearest decision-boundary point.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kernelshap::{coalitions, solve_shapley};
use super::{check_instance, lime_explain, Attribution, Background, ExplainerKind, PerturbationConfig};
use crate::error::{Error, Result};
use crate::geometry::{nearest_dbp, tangent_attribution, DbpResult, GrowingSpheresConfig};
use crate::models::Blackbox;
use crate::rng::{rng_from_seed, substream};

/// Smallest perturbation variance a feature can receive.
pub const COV_FLOOR: f64 = 1e-3;

/// Nearest boundary point and the tangent attribution there. Depends only
/// on the instance, so ensembles compute it once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPrior {
    pub dbp: DbpResult,
    pub w_dbp: Vec<f64>,
}

impl BoundaryPrior {
    pub fn covariance(&self, k: f64) -> Result<Vec<f64>> {
        mvg_covariance(&self.w_dbp, self.dbp.distance, k)
    }
}

pub fn boundary_prior<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    gs: &GrowingSpheresConfig,
    seed: u64,
) -> Result<BoundaryPrior> {
    let dbp = nearest_dbp(model, x, gs, substream(seed, "dbp"))?;
    let cfg = PerturbationConfig::for_dim(x.len());
    let w_dbp = tangent_attribution(model, &dbp, &cfg, substream(seed, "tangent"))?;
    Ok(BoundaryPrior { dbp, w_dbp })
}

/// `max(k |w_j| / l, COV_FLOOR)` per feature.
pub fn mvg_covariance(w_dbp: &[f64], distance: f64, k: f64) -> Result<Vec<f64>> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidConfig(format!("k must be positive, got {k}")));
    }
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "boundary distance must be positive, got {distance}"
        )));
    }
    Ok(w_dbp
        .iter()
        .map(|w| {
            let v = k * w.abs() / distance;
            if v.is_finite() {
                v.max(COV_FLOOR)
            } else {
                COV_FLOOR
            }
        })
        .collect())
}

pub fn mvg_lime_with_prior<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    k: f64,
    prior: &BoundaryPrior,
    base_config: &PerturbationConfig,
    seed: u64,
) -> Result<Attribution> {
    let config = PerturbationConfig {
        cov_diagonal: Some(prior.covariance(k)?),
        ..base_config.clone()
    };
    let mut a = lime_explain(model, x, &config, seed)?;
    a.explainer = ExplainerKind::MvgLime;
    Ok(a)
}

/// LIME with perturbation variances `k |w_DBP| / l` and the same sample
/// budget as plain LIME.
pub fn mvg_lime_explain<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    k: f64,
    base_config: &PerturbationConfig,
    gs: &GrowingSpheresConfig,
    seed: u64,
) -> Result<Attribution> {
    let prior = boundary_prior(model, x, gs, seed)?;
    mvg_lime_with_prior(model, x, k, &prior, base_config, seed)
}

/// KernelSHAP where masked features are filled from `background.size`
/// draws of `N(background.mean, diag(cov))`; a coalition's value is the
/// model averaged over those draws. The draws are shared by all
/// coalitions of one call.
pub fn mvg_kernelshap_with_covariance<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    background: &Background,
    cov: &[f64],
    num_coalitions: usize,
    seed: u64,
) -> Result<Attribution> {
    let d = model.input_dim();
    check_instance(d, x)?;
    Error::check_dim(d, background.mean.len())?;
    Error::check_dim(d, cov.len())?;
    if cov.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidConfig("covariance entries must be positive".into()));
    }
    let coalitions = coalitions(d, num_coalitions, seed)?;

    let mut rng = rng_from_seed(substream(seed, "mvg-background"));
    let draws: Vec<Vec<f64>> = (0..background.size)
        .map(|_| {
            background
                .mean
                .iter()
                .zip(cov)
                .map(|(m, v)| {
                    let e: f64 = rng.sample(StandardNormal);
                    m + v.sqrt() * e
                })
                .collect()
        })
        .collect();

    let value = |mask: &[bool]| {
        let mut z = vec![0.0; d];
        let mut total = 0.0;
        for r in &draws {
            for j in 0..d {
                z[j] = if mask[j] { x[j] } else { r[j] };
            }
            total += model.predict_proba(&z);
        }
        total / draws.len() as f64
    };
    let v_empty = value(&vec![false; d]);
    let v_full = model.predict_proba(x);
    let (intercept, weights, ill) = solve_shapley(d, &coalitions, v_empty, v_full, value)?;
    Ok(Attribution {
        explainer: ExplainerKind::MvgKernelShap,
        seed,
        num_samples: num_coalitions,
        intercept,
        weights,
        feature_names: Vec::new(),
        ill_conditioned: ill,
    })
}

pub fn mvg_kernelshap_explain<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    k: f64,
    background: &Background,
    num_coalitions: usize,
    gs: &GrowingSpheresConfig,
    seed: u64,
) -> Result<Attribution> {
    let prior = boundary_prior(model, x, gs, seed)?;
    let cov = prior.covariance(k)?;
    mvg_kernelshap_with_covariance(model, x, background, &cov, num_coalitions, seed)
}
