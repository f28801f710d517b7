//! Attribution ensembles and the metrics that score their disagreement.
//!
//! All rank-based metrics use [`rank_weights`]: features ordered by `|w|`
//! descending, ties to the lower index, rank 1 = most important.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainers::{
    bayeslime_explain, boundary_prior, kernelshap_explain, lime_explain, mvg_kernelshap_with_covariance,
    mvg_lime_with_prior, Attribution, Background, BoundaryPrior, ExplainerKind, PerturbationConfig,
};
use crate::geometry::GrowingSpheresConfig;
use crate::models::Blackbox;
use crate::rng::{derive_seed, rng_from_seed, substream};
use crate::stats::{mean, pearson, quantile_sorted, sample_stdev};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything needed to run one explainer repeatedly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerSpec {
    pub kind: ExplainerKind,
    pub perturbation: PerturbationConfig,
    /// KernelSHAP variants only.
    pub num_coalitions: usize,
    /// KernelSHAP variants only; required for them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background: Option<Background>,
    /// MVG variants only.
    pub k_mvg: f64,
    pub growing_spheres: GrowingSpheresConfig,
    /// BayesLIME only; the posterior mean is used as the attribution.
    pub confidence: f64,
}

impl Default for ExplainerSpec {
    fn default() -> Self {
        Self {
            kind: ExplainerKind::Lime,
            perturbation: PerturbationConfig::default(),
            num_coalitions: 2048,
            background: None,
            k_mvg: 2.0,
            growing_spheres: GrowingSpheresConfig::default(),
            confidence: 0.95,
        }
    }
}

impl ExplainerSpec {
    pub fn new(kind: ExplainerKind, dim: usize) -> Self {
        Self {
            kind,
            perturbation: PerturbationConfig::for_dim(dim),
            ..Self::default()
        }
    }

    pub fn with_background(mut self, background: Background) -> Self {
        self.background = Some(background);
        self
    }

    fn background(&self) -> Result<&Background> {
        self.background.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!("{} needs a background", self.kind))
        })
    }

    fn needs_prior(&self) -> bool {
        matches!(self.kind, ExplainerKind::MvgLime | ExplainerKind::MvgKernelShap)
    }
}

/// The boundary prior used by the MVG variants of an ensemble rooted at
/// `root_seed`.
pub fn ensemble_prior<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    spec: &ExplainerSpec,
    root_seed: u64,
) -> Result<BoundaryPrior> {
    boundary_prior(model, x, &spec.growing_spheres, substream(root_seed, "boundary-prior"))
}

/// One explainer run. `prior` is required by the MVG variants.
pub fn explain_once<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    spec: &ExplainerSpec,
    prior: Option<&BoundaryPrior>,
    seed: u64,
) -> Result<Attribution> {
    let need_prior = || {
        prior.ok_or_else(|| Error::InvalidInput(format!("{} needs a boundary prior", spec.kind)))
    };
    match spec.kind {
        ExplainerKind::Lime => lime_explain(model, x, &spec.perturbation, seed),
        ExplainerKind::KernelShap => {
            kernelshap_explain(model, x, spec.background()?, spec.num_coalitions, seed)
        }
        ExplainerKind::BayesLime => {
            bayeslime_explain(model, x, &spec.perturbation, spec.confidence, seed).map(|c| c.to_attribution())
        }
        ExplainerKind::MvgLime => {
            mvg_lime_with_prior(model, x, spec.k_mvg, need_prior()?, &spec.perturbation, seed)
        }
        ExplainerKind::MvgKernelShap => {
            let cov = need_prior()?.covariance(spec.k_mvg)?;
            mvg_kernelshap_with_covariance(model, x, spec.background()?, &cov, spec.num_coalitions, seed)
        }
        ExplainerKind::Random => Ok(random_attribution(x.len(), seed)),
    }
}

fn random_attribution(d: usize, seed: u64) -> Attribution {
    let mut rng = rng_from_seed(seed);
    Attribution {
        explainer: ExplainerKind::Random,
        seed,
        num_samples: 0,
        intercept: 0.0,
        weights: (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        feature_names: Vec::new(),
        ill_conditioned: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionEnsemble {
    pub explainer: ExplainerKind,
    pub instance: Vec<f64>,
    pub root_seed: u64,
    pub runs: Vec<Attribution>,
}

impl AttributionEnsemble {
    pub fn new(instance: Vec<f64>, root_seed: u64, runs: Vec<Attribution>) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| Error::InvalidInput("ensemble needs at least one run".into()))?;
        let explainer = first.explainer;
        for r in &runs {
            Error::check_dim(instance.len(), r.weights.len())?;
            if r.explainer != explainer {
                return Err(Error::InvalidInput("ensemble mixes explainers".into()));
            }
            if r.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidInput("ensemble has non-finite weights".into()));
            }
        }
        Ok(Self {
            explainer,
            instance,
            root_seed,
            runs,
        })
    }

    /// Runs from bare weight vectors, for metric fixtures.
    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self> {
        let d = weights.first().map_or(0, Vec::len);
        let runs = weights
            .into_iter()
            .enumerate()
            .map(|(i, w)| Attribution {
                explainer: ExplainerKind::Random,
                seed: i as u64,
                num_samples: 0,
                intercept: 0.0,
                weights: w,
                feature_names: Vec::new(),
                ill_conditioned: false,
            })
            .collect();
        Self::new(vec![0.0; d], 0, runs)
    }

    pub fn m(&self) -> usize {
        self.runs.len()
    }

    pub fn dim(&self) -> usize {
        self.instance.len()
    }

    /// Weights of feature `j` across runs.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.runs.iter().map(|r| r.weights[j]).collect()
    }

    /// Mean `|w_j|` per feature.
    pub fn mean_importance(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| mean(&self.column(j).iter().map(|v| v.abs()).collect::<Vec<_>>()))
            .collect()
    }

    fn require_runs(&self, min: usize) -> Result<()> {
        if self.m() < min {
            return Err(Error::Metric(format!(
                "need at least {min} runs, ensemble has {}",
                self.m()
            )));
        }
        Ok(())
    }
}

/// `m` runs with seeds `derive_seed(root_seed, i)`. Runs execute in
/// parallel; the result does not depend on the thread count.
pub fn run_ensemble<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    spec: &ExplainerSpec,
    m: usize,
    root_seed: u64,
) -> Result<AttributionEnsemble> {
    let prior = if spec.needs_prior() {
        Some(ensemble_prior(model, x, spec, root_seed)?)
    } else {
        None
    };
    run_ensemble_with_prior(model, x, spec, prior.as_ref(), m, root_seed)
}

pub fn run_ensemble_with_prior<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    spec: &ExplainerSpec,
    prior: Option<&BoundaryPrior>,
    m: usize,
    root_seed: u64,
) -> Result<AttributionEnsemble> {
    if m < 2 {
        return Err(Error::InvalidConfig("an ensemble needs M >= 2 runs".into()));
    }
    let results: Vec<Result<Attribution>> = (0..m)
        .into_par_iter()
        .map(|i| explain_once(model, x, spec, prior, derive_seed(root_seed, i as u64)))
        .collect();
    let mut runs = Vec::with_capacity(m);
    for (index, r) in results.into_iter().enumerate() {
        runs.push(r.map_err(|e| Error::RunFailed {
            index,
            source: Box::new(e),
        })?);
    }
    AttributionEnsemble::new(x.to_vec(), root_seed, runs)
}

/// `m` runs of i.i.d. uniform `[-1, 1]` weights.
pub fn random_baseline_ensemble(d: usize, m: usize, seed: u64) -> Result<AttributionEnsemble> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidConfig("random baseline needs D, M >= 1".into()));
    }
    let runs = (0..m)
        .map(|i| random_attribution(d, derive_seed(seed, i as u64)))
        .collect();
    AttributionEnsemble::new(vec![0.0; d], seed, runs)
}

/// Rank of each feature (1 = largest `|w|`, ties to the lower index).
pub fn rank_weights(weights: &[f64]) -> Vec<usize> {
    let order = importance_order(weights);
    let mut ranks = vec![0; weights.len()];
    for (pos, &j) in order.iter().enumerate() {
        ranks[j] = pos + 1;
    }
    ranks
}

/// Feature indices from most to least important.
pub fn importance_order(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankMatrix {
    ranks: Vec<Vec<usize>>,
}

impl RankMatrix {
    /// Validates that every row is a permutation of `1..=D`.
    pub fn new(ranks: Vec<Vec<usize>>) -> Result<Self> {
        let d = ranks.first().map_or(0, Vec::len);
        for row in &ranks {
            let mut seen = vec![false; d];
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            for &r in row {
                if r == 0 || r > d || seen[r - 1] {
                    return Err(Error::InvalidInput(format!("row {row:?} is not a permutation of 1..={d}")));
                }
                seen[r - 1] = true;
            }
        }
        Ok(Self { ranks })
    }

    pub fn m(&self) -> usize {
        self.ranks.len()
    }

    pub fn dim(&self) -> usize {
        self.ranks.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.ranks
    }

    fn require_shape(&self) -> Result<()> {
        if self.m() < 2 {
            return Err(Error::Metric("rank metrics need M >= 2".into()));
        }
        if self.dim() < 2 {
            return Err(Error::Metric("rank metrics need D >= 2".into()));
        }
        Ok(())
    }
}

pub fn rank(ensemble: &AttributionEnsemble) -> RankMatrix {
    RankMatrix {
        ranks: ensemble.runs.iter().map(|r| rank_weights(&r.weights)).collect(),
    }
}

/// Per-feature values with their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpread {
    pub per_feature: Vec<f64>,
    pub mean: f64,
}

impl FeatureSpread {
    fn from_vec(per_feature: Vec<f64>) -> Self {
        let mean = mean(&per_feature);
        Self { per_feature, mean }
    }
}

fn check_confidence(confidence: f64) -> Result<()> {
    if confidence > 0.0 && confidence < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("confidence {confidence} outside (0, 1)")))
    }
}

/// Width of the equal-tailed type-7 percentile interval.
fn interval_width(values: &[f64], confidence: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    quantile_sorted(&sorted, 1.0 - alpha / 2.0) - quantile_sorted(&sorted, alpha / 2.0)
}

pub fn ci_width(ensemble: &AttributionEnsemble, confidence: f64) -> Result<FeatureSpread> {
    check_confidence(confidence)?;
    ensemble.require_runs(10)?;
    Ok(FeatureSpread::from_vec(
        (0..ensemble.dim())
            .map(|j| interval_width(&ensemble.column(j), confidence))
            .collect(),
    ))
}

/// Mean CI width of the elementwise median over `b` bootstrap resamples of
/// the runs.
pub fn bootstrap_ci_width(
    ensemble: &AttributionEnsemble,
    b: usize,
    confidence: f64,
    seed: u64,
) -> Result<f64> {
    check_confidence(confidence)?;
    ensemble.require_runs(10)?;
    if b < 10 {
        return Err(Error::Metric(format!("need at least 10 bootstrap resamples, got {b}")));
    }
    let m = ensemble.m();
    let d = ensemble.dim();
    let mut rng = rng_from_seed(seed);
    let mut medians = vec![Vec::with_capacity(b); d];
    let mut col = vec![0.0; m];
    let mut picks = vec![0usize; m];
    for _ in 0..b {
        picks.iter_mut().for_each(|p| *p = rng.random_range(0..m));
        for (j, med) in medians.iter_mut().enumerate() {
            for (c, &p) in col.iter_mut().zip(&picks) {
                *c = ensemble.runs[p].weights[j];
            }
            col.sort_by(f64::total_cmp);
            med.push(quantile_sorted(&col, 0.5));
        }
    }
    Ok(mean(
        &medians.iter().map(|v| interval_width(v, confidence)).collect::<Vec<_>>(),
    ))
}

/// Runs an ensemble and bootstraps it.
pub fn ci_bootstrap<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    spec: &ExplainerSpec,
    m: usize,
    b: usize,
    confidence: f64,
    root_seed: u64,
) -> Result<f64> {
    let ensemble = run_ensemble(model, x, spec, m, root_seed)?;
    bootstrap_ci_width(&ensemble, b, confidence, substream(root_seed, "bootstrap"))
}

pub fn stdev_uncertainty(ensemble: &AttributionEnsemble) -> Result<FeatureSpread> {
    ensemble.require_runs(2)?;
    Ok(FeatureSpread::from_vec(
        (0..ensemble.dim()).map(|j| sample_stdev(&ensemble.column(j))).collect(),
    ))
}

/// `1 - W` with `W = 12 S / (M^2 (D^3 - D))`.
pub fn kendall_w_uncertainty(ranks: &RankMatrix) -> Result<f64> {
    ranks.require_shape()?;
    let m = ranks.m() as f64;
    let d = ranks.dim();
    let mut cr = vec![0.0; d];
    for row in ranks.rows() {
        for (c, &r) in cr.iter_mut().zip(row) {
            *c += r as f64;
        }
    }
    let cr_mean = mean(&cr);
    let s: f64 = cr.iter().map(|c| (c - cr_mean).powi(2)).sum();
    let df = d as f64;
    let w = 12.0 * s / (m * m * (df * df * df - df));
    Ok((1.0 - w).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleissOutcome {
    /// `1 - kappa`, not clamped.
    pub uncertainty: f64,
    /// Set when the value falls outside `[0, 1]` or chance agreement is 1.
    pub flagged: bool,
}

/// Fleiss' kappa with features as subjects, runs as raters and ranks as
/// categories.
pub fn fleiss_kappa_uncertainty(ranks: &RankMatrix) -> Result<FleissOutcome> {
    ranks.require_shape()?;
    let m = ranks.m();
    let d = ranks.dim();
    let mut t = vec![vec![0usize; d]; d];
    for row in ranks.rows() {
        for (i, &r) in row.iter().enumerate() {
            t[i][r - 1] += 1;
        }
    }
    let mf = m as f64;
    let p_bar = t
        .iter()
        .map(|counts| {
            let sq: usize = counts.iter().map(|c| c * c).sum();
            (sq as f64 - mf) / (mf * mf - mf)
        })
        .sum::<f64>()
        / d as f64;
    let p_e: f64 = (0..d)
        .map(|j| {
            let col: usize = t.iter().map(|counts| counts[j]).sum();
            (col as f64 / (mf * d as f64)).powi(2)
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(FleissOutcome {
            uncertainty: 0.0,
            flagged: true,
        });
    }
    let kappa = (p_bar - p_e) / (1.0 - p_e);
    let uncertainty = 1.0 - kappa;
    Ok(FleissOutcome {
        uncertainty,
        flagged: !(0.0..=1.0).contains(&uncertainty),
    })
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::Metric(format!("top-k needs 1 <= k <= {d}, got {k}")));
    }
    Ok(())
}

fn mean_over_pairs(ensemble: &AttributionEnsemble, f: impl Fn(usize, usize) -> f64) -> Result<f64> {
    ensemble.require_runs(2)?;
    let m = ensemble.m();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..m {
        for b in a + 1..m {
            total += f(a, b);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// `1 -` mean pairwise `|topk(a) ∩ topk(b)| / k`.
pub fn topk_feature_agreement_uncertainty(ensemble: &AttributionEnsemble, k: usize) -> Result<f64> {
    check_k(k, ensemble.dim())?;
    let d = ensemble.dim();
    let tops: Vec<Vec<bool>> = ensemble
        .runs
        .iter()
        .map(|r| {
            let mut set = vec![false; d];
            for &j in &importance_order(&r.weights)[..k] {
                set[j] = true;
            }
            set
        })
        .collect();
    let agreement = mean_over_pairs(ensemble, |a, b| {
        tops[a].iter().zip(&tops[b]).filter(|(p, q)| **p && **q).count() as f64 / k as f64
    })?;
    Ok(1.0 - agreement)
}

/// `1 -` mean pairwise fraction of the first `k` rank positions holding
/// the same feature.
pub fn topk_rank_agreement_uncertainty(ensemble: &AttributionEnsemble, k: usize) -> Result<f64> {
    check_k(k, ensemble.dim())?;
    let orders: Vec<Vec<usize>> = ensemble
        .runs
        .iter()
        .map(|r| importance_order(&r.weights)[..k].to_vec())
        .collect();
    let agreement = mean_over_pairs(ensemble, |a, b| {
        orders[a].iter().zip(&orders[b]).filter(|(p, q)| p == q).count() as f64 / k as f64
    })?;
    Ok(1.0 - agreement)
}

/// Pearson r between mean `|w_j|` and the stdev of `w_j` across runs.
pub fn feature_importance_uncertainty_correlation(ensemble: &AttributionEnsemble) -> Result<f64> {
    if ensemble.dim() < 3 {
        return Err(Error::Metric("correlation needs D >= 3".into()));
    }
    let u = stdev_uncertainty(ensemble)?.per_feature;
    pearson(&ensemble.mean_importance(), &u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Ci,
    CiBootstrap,
    Stdev,
    Kendall,
    Fleiss,
    TopkFa,
    TopkRa,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Ci,
        Metric::CiBootstrap,
        Metric::Stdev,
        Metric::Kendall,
        Metric::Fleiss,
        Metric::TopkFa,
        Metric::TopkRa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ci => "ci",
            Metric::CiBootstrap => "ci-bootstrap",
            Metric::Stdev => "stdev",
            Metric::Kendall => "kendall",
            Metric::Fleiss => "fleiss",
            Metric::TopkFa => "topk-fa",
            Metric::TopkRa => "topk-ra",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric `{s}`")))
    }
}

/// Knobs shared by every metric evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSettings {
    pub confidence: f64,
    pub top_k: usize,
    pub bootstrap_resamples: usize,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            confidence: 0.95,
            top_k: 1,
            bootstrap_resamples: 200,
        }
    }
}

pub fn compute_metric(
    ensemble: &AttributionEnsemble,
    metric: Metric,
    settings: &MetricSettings,
    seed: u64,
) -> Result<f64> {
    match metric {
        Metric::Ci => Ok(ci_width(ensemble, settings.confidence)?.mean),
        Metric::CiBootstrap => {
            bootstrap_ci_width(ensemble, settings.bootstrap_resamples, settings.confidence, seed)
        }
        Metric::Stdev => Ok(stdev_uncertainty(ensemble)?.mean),
        Metric::Kendall => kendall_w_uncertainty(&rank(ensemble)),
        Metric::Fleiss => Ok(fleiss_kappa_uncertainty(&rank(ensemble))?.uncertainty),
        Metric::TopkFa => topk_feature_agreement_uncertainty(ensemble, settings.top_k),
        Metric::TopkRa => topk_rank_agreement_uncertainty(ensemble, settings.top_k),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub schema_version: u32,
    pub explainer: ExplainerKind,
    pub m: usize,
    pub confidence: f64,
    pub top_k: usize,
    pub bootstrap_resamples: usize,
    pub per_metric: BTreeMap<Metric, f64>,
    pub per_feature_stdev: Vec<f64>,
    pub per_feature_ci_width: Vec<f64>,
    /// Pearson r of mean importance against stdev; absent when undefined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub importance_uncertainty_r: Option<f64>,
    pub flags: Vec<String>,
}

impl UncertaintyReport {
    /// All seven metrics. Per-feature CI widths need `M >= 10` and are left
    /// empty below that, as are the CI metrics.
    pub fn compute(ensemble: &AttributionEnsemble, settings: &MetricSettings, seed: u64) -> Result<Self> {
        Self::compute_selected(ensemble, &Metric::ALL, settings, seed)
    }

    pub fn compute_selected(
        ensemble: &AttributionEnsemble,
        metrics: &[Metric],
        settings: &MetricSettings,
        seed: u64,
    ) -> Result<Self> {
        let mut flags = Vec::new();
        let mut per_metric = BTreeMap::new();
        for &metric in metrics {
            match metric {
                Metric::Ci | Metric::CiBootstrap if ensemble.m() < 10 => {
                    flags.push(format!("{metric} skipped: needs M >= 10"));
                }
                Metric::Fleiss => {
                    let f = fleiss_kappa_uncertainty(&rank(ensemble))?;
                    if f.flagged {
                        flags.push("fleiss outside [0, 1]".into());
                    }
                    per_metric.insert(metric, f.uncertainty);
                }
                _ => {
                    per_metric.insert(metric, compute_metric(ensemble, metric, settings, seed)?);
                }
            }
        }
        let per_feature_ci_width = if ensemble.m() >= 10 {
            ci_width(ensemble, settings.confidence)?.per_feature
        } else {
            Vec::new()
        };
        let importance_uncertainty_r = feature_importance_uncertainty_correlation(ensemble).ok();
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            explainer: ensemble.explainer,
            m: ensemble.m(),
            confidence: settings.confidence,
            top_k: settings.top_k,
            bootstrap_resamples: settings.bootstrap_resamples,
            per_metric,
            per_feature_stdev: stdev_uncertainty(ensemble)?.per_feature,
            per_feature_ci_width,
            importance_uncertainty_r,
            flags,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::quantile;

    fn ens<R: AsRef<[f64]>>(rows: &[R]) -> AttributionEnsemble {
        AttributionEnsemble::from_weights(rows.iter().map(|r| r.as_ref().to_vec()).collect()).unwrap()
    }

    fn ranks<R: AsRef<[usize]>>(rows: &[R]) -> RankMatrix {
        RankMatrix::new(rows.iter().map(|r| r.as_ref().to_vec()).collect()).unwrap()
    }

    #[test]
    fn ranking_uses_magnitude_and_index_ties() {
        assert_eq!(rank_weights(&[0.5, -0.9, 0.1]), vec![2, 1, 3]);
        assert_eq!(rank_weights(&[0.3, 0.3]), vec![1, 2]);
        assert_eq!(rank_weights(&[0.0; 4]), vec![1, 2, 3, 4]);
    }

    #[test]
    fn stdev_of_two_runs() {
        let s = stdev_uncertainty(&ens(&[&[0.0; 3], &[2.0; 3]])).unwrap();
        for v in &s.per_feature {
            assert!((v - 2f64.sqrt()).abs() < 1e-12);
        }
        assert!((s.mean - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kendall_fixtures() {
        assert_eq!(kendall_w_uncertainty(&ranks(&[&[1, 2, 3], &[3, 2, 1]])).unwrap(), 1.0);
        assert_eq!(kendall_w_uncertainty(&ranks(&[&[2, 1, 3], &[2, 1, 3]])).unwrap(), 0.0);
        assert!(kendall_w_uncertainty(&ranks(&[&[1], &[1]])).is_err());
    }

    #[test]
    fn fleiss_fixtures() {
        let f = fleiss_kappa_uncertainty(&ranks(&[&[1, 2], &[2, 1]])).unwrap();
        assert!((f.uncertainty - 2.0).abs() < 1e-12 && f.flagged);
        let g = fleiss_kappa_uncertainty(&ranks(&[&[1, 2, 3]; 4])).unwrap();
        assert!(g.uncertainty.abs() < 1e-12 && !g.flagged);
    }

    #[test]
    fn topk_fixtures() {
        let same = ens(&[&[3.0, 2.0, 1.0], &[3.0, 2.0, 1.0]]);
        assert_eq!(topk_feature_agreement_uncertainty(&same, 2).unwrap(), 0.0);
        let disjoint = ens(&[&[3.0, 2.0, 0.0, 0.0], &[0.0, 0.0, 3.0, 2.0]]);
        assert_eq!(topk_feature_agreement_uncertainty(&disjoint, 2).unwrap(), 1.0);
        assert_eq!(topk_feature_agreement_uncertainty(&disjoint, 4).unwrap(), 0.0);
        let reversed = ens(&[&[4.0, 3.0, 2.0, 1.0], &[1.0, 2.0, 3.0, 4.0]]);
        assert_eq!(topk_rank_agreement_uncertainty(&reversed, 4).unwrap(), 1.0);
        let mixed = ens(&[&[4.0, 3.0, 2.0, 1.0], &[4.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 4.0, 2.0]]);
        assert_eq!(
            topk_rank_agreement_uncertainty(&mixed, 1).unwrap(),
            topk_feature_agreement_uncertainty(&mixed, 1).unwrap()
        );
    }

    #[test]
    fn ci_width_uses_type7_quantiles() {
        let rows: Vec<Vec<f64>> = (1..=100).map(|v| vec![v as f64, 0.5]).collect();
        let e = AttributionEnsemble::from_weights(rows).unwrap();
        let c = ci_width(&e, 0.95).unwrap();
        let col: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        // type 7: h = (n - 1) p, so 0.975 -> 97.525 and 0.025 -> 3.475
        assert!((c.per_feature[0] - (97.525 - 3.475)).abs() < 1e-9);
        assert!((c.per_feature[0] - (quantile(&col, 0.975) - quantile(&col, 0.025))).abs() < 1e-12);
        assert_eq!(c.per_feature[1], 0.0);
        assert!(ci_width(&e, 0.5).unwrap().mean < c.mean);
    }

    #[test]
    fn ci_needs_ten_runs_and_bootstrap_ten_resamples() {
        let small = ens(&[&[1.0, 2.0]; 9]);
        assert!(ci_width(&small, 0.95).is_err());
        let ten = ens(&[&[1.0, 2.0]; 10]);
        assert_eq!(bootstrap_ci_width(&ten, 10, 0.95, 0).unwrap(), 0.0);
        assert!(bootstrap_ci_width(&ten, 1, 0.95, 0).is_err());
    }

    #[test]
    fn random_baseline_is_discordant() {
        let e = random_baseline_ensemble(8, 100, 1).unwrap();
        assert!(kendall_w_uncertainty(&rank(&e)).unwrap() >= 0.9);
        let s = stdev_uncertainty(&e).unwrap();
        assert!((s.mean - 1.0 / 3f64.sqrt()).abs() < 0.05);
        assert_eq!(topk_feature_agreement_uncertainty(&e, 8).unwrap(), 0.0);
    }

    #[test]
    fn correlation_of_proportional_spread() {
        // runs w(1 - sqrt2) and w(1 + sqrt2): mean |w| = sqrt2 w, stdev = 2 w
        let s2 = 2f64.sqrt();
        let w = [1.0, 2.0, 3.0];
        let e = ens(&[&w.map(|v| v * (1.0 - s2)), &w.map(|v| v * (1.0 + s2))]);
        let r = feature_importance_uncertainty_correlation(&e).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let flat = ens(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]);
        assert!(matches!(
            feature_importance_uncertainty_correlation(&flat),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn report_has_all_metrics() {
        let e = random_baseline_ensemble(5, 20, 3).unwrap();
        let r = UncertaintyReport::compute(&e, &MetricSettings::default(), 0).unwrap();
        assert_eq!(r.per_metric.len(), 7);
        assert_eq!(r.per_feature_ci_width.len(), 5);
    }
}
