use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{check_instance, Attribution, ExplainerKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{weighted_ridge_through_origin, RowMatrix};
use crate::models::Blackbox;
use crate::rng::rng_from_seed;

/// Largest dimension for which every coalition is ever enumerated.
const MAX_ENUMERATION_DIM: usize = 24;

/// Masking reference: masked features take `mean`. `size` is the number of
/// rows the mean summarizes (also the synthetic background size for MVG-KS).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub mean: Vec<f64>,
    pub size: usize,
}

impl Background {
    pub fn new(mean: Vec<f64>, size: usize) -> Result<Self> {
        if mean.is_empty() || size == 0 {
            return Err(Error::InvalidInput("background must be non-empty".into()));
        }
        Ok(Self { mean, size })
    }

    pub fn from_rows(rows: &RowMatrix) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidInput("background must be non-empty".into()));
        }
        let n = rows.nrows() as f64;
        let mut mean = vec![0.0; rows.ncols()];
        for r in rows.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        Self::new(mean, rows.nrows())
    }

    /// Mean of the training rows, capped at 100 rows for the MVG-KS draw.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let n = dataset.split().train.len();
        Self::new(dataset.train_mean(), n.clamp(1, 100))
    }
}

/// Shapley kernel weight of a coalition of size `s` among `d` players.
pub(crate) fn shapley_kernel(d: usize, s: usize) -> f64 {
    let mut binom = 1.0;
    for i in 0..s {
        binom *= (d - i) as f64 / (i + 1) as f64;
    }
    (d - 1) as f64 / (binom * s as f64 * (d - s) as f64)
}

/// The coalitions used in the regression with their weights. Full
/// enumeration uses the Shapley kernel; sampling draws sizes in proportion
/// to the kernel mass per size and weights duplicates by count.
pub(crate) fn coalitions(d: usize, num_coalitions: usize, seed: u64) -> Result<Vec<(Vec<bool>, f64)>> {
    if d < 2 {
        return Err(Error::InvalidInput(
            "KernelSHAP needs at least two features".into(),
        ));
    }
    if num_coalitions < d + 2 {
        return Err(Error::InsufficientCoalitions {
            required: d + 2,
            got: num_coalitions,
        });
    }
    if d <= MAX_ENUMERATION_DIM && num_coalitions >= 1usize << d {
        let mut out = Vec::with_capacity((1usize << d) - 2);
        for bits in 1..(1usize << d) - 1 {
            let mask: Vec<bool> = (0..d).map(|j| bits >> j & 1 == 1).collect();
            let s = bits.count_ones() as usize;
            out.push((mask, shapley_kernel(d, s)));
        }
        return Ok(out);
    }

    let size_mass: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
    let sizes = WeightedIndex::new(&size_mass).expect("positive size weights");
    let mut rng = rng_from_seed(seed);
    let mut counts: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
    for _ in 0..num_coalitions - 2 {
        let s = sizes.sample(&mut rng) + 1;
        let mut mask = vec![false; d];
        for j in index::sample(&mut rng, d, s) {
            mask[j] = true;
        }
        *counts.entry(mask).or_insert(0) += 1;
    }
    Ok(counts.into_iter().map(|(m, c)| (m, c as f64)).collect())
}

/// Solves the kernel-weighted regression with the efficiency constraint
/// `intercept + sum(phi) = v(full)` imposed by eliminating the last
/// feature. Returns `(intercept, phi, ill_conditioned)`.
pub(crate) fn solve_shapley<F>(
    d: usize,
    coalitions: &[(Vec<bool>, f64)],
    v_empty: f64,
    v_full: f64,
    value: F,
) -> Result<(f64, Vec<f64>, bool)>
where
    F: Fn(&[bool]) -> f64,
{
    let total = v_full - v_empty;
    let last = d - 1;
    let mut design = RowMatrix::zeros(coalitions.len(), last);
    let mut target = Vec::with_capacity(coalitions.len());
    let mut weights = Vec::with_capacity(coalitions.len());
    for (i, (mask, w)) in coalitions.iter().enumerate() {
        let z_last = f64::from(u8::from(mask[last]));
        let row = design.row_mut(i);
        for j in 0..last {
            row[j] = f64::from(u8::from(mask[j])) - z_last;
        }
        target.push(value(mask) - v_empty - z_last * total);
        weights.push(*w);
    }
    let fit = weighted_ridge_through_origin(&design, &target, &weights, 0.0)?;
    let mut phi = fit.coefficients;
    let rest: f64 = phi.iter().sum();
    phi.push(total - rest);
    Ok((v_empty, phi, fit.ill_conditioned))
}

/// KernelSHAP with masked features imputed by the background mean.
/// `num_coalitions` counts every model evaluation, including the empty and
/// full coalitions; at `2^D` or more all coalitions are enumerated.
pub fn kernelshap_explain<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    background: &Background,
    num_coalitions: usize,
    seed: u64,
) -> Result<Attribution> {
    let d = model.input_dim();
    check_instance(d, x)?;
    Error::check_dim(d, background.mean.len())?;
    let coalitions = coalitions(d, num_coalitions, seed)?;

    let v_empty = model.predict_proba(&background.mean);
    let v_full = model.predict_proba(x);
    let value = |mask: &[bool]| {
        let mut z = vec![0.0; d];
        for j in 0..d {
            z[j] = if mask[j] { x[j] } else { background.mean[j] };
        }
        model.predict_proba(&z)
    };
    let (intercept, weights, ill) = solve_shapley(d, &coalitions, v_empty, v_full, value)?;
    Ok(Attribution {
        explainer: ExplainerKind::KernelShap,
        seed,
        num_samples: num_coalitions,
        intercept,
        weights,
        feature_names: Vec::new(),
        ill_conditioned: ill,
    })
}
