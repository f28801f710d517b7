//! Study pipelines: stable-instance prediction, model complexity from
//! boundary-point counts, and the benchmark tables.
//!
//! Instances for these studies are drawn uniformly from the bounding box of
//! the training rows unless the caller supplies them.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explainers::{Background, BoundaryPrior, ExplainerKind, PerturbationConfig};
use crate::geometry::{k_nearest_dbps, GrowingSpheresConfig};
use crate::models::Blackbox;
use crate::rng::{derive_seed, substream};
use crate::stats::{mean, pearson, sample_stdev};
use crate::uncertainty::{
    compute_metric, ensemble_prior, importance_order, kendall_w_uncertainty, rank, random_baseline_ensemble,
    run_ensemble, run_ensemble_with_prior, stdev_uncertainty, AttributionEnsemble, ExplainerSpec, Metric,
    MetricSettings, REPORT_SCHEMA_VERSION,
};

/// Shell (percent beyond `l1`) searched for the second boundary region. It
/// does not depend on the margin, so verdicts are monotone in the margin.
pub const STABILITY_SHELL_PERCENT: f64 = 20.0;

/// `n` instances uniform over the training bounding box.
pub fn sample_instances(dataset: &Dataset, n: usize, seed: u64) -> Vec<Vec<f64>> {
    dataset.bounding_box().sample_many(n, substream(seed, "instances"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub instance: Vec<f64>,
    pub l1: f64,
    /// Absent when only one boundary point lies in the search shell.
    pub l2: Option<f64>,
    pub ratio: Option<f64>,
    pub predicted_stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_uncertainty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_stable: Option<bool>,
}

fn check_margin(margin: f64) -> Result<()> {
    if margin > 0.0 && margin.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("stability margin must be positive, got {margin}")))
    }
}

/// Stable iff the second boundary point is at least `(1 + margin)` times as
/// far as the first, or there is no second one in the shell.
pub fn stable_from_distances(l1: f64, l2: Option<f64>, margin: f64) -> bool {
    match l2 {
        Some(l2) => l2 >= (1.0 + margin) * l1,
        None => true,
    }
}

pub fn stability_predict<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    gs: &GrowingSpheresConfig,
    margin: f64,
    seed: u64,
) -> Result<StabilityVerdict> {
    check_margin(margin)?;
    let set = k_nearest_dbps(model, x, gs, 2, STABILITY_SHELL_PERCENT, seed)?;
    let l1 = set.dbps[0].distance;
    let l2 = set.dbps.get(1).map(|d| d.distance);
    Ok(StabilityVerdict {
        instance: x.to_vec(),
        l1,
        l2,
        ratio: l2.map(|l2| l2 / l1),
        predicted_stable: stable_from_distances(l1, l2, margin),
        measured_uncertainty: None,
        truth_stable: None,
    })
}

/// Fractions of instances by (predicted stable, truly low uncertainty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub stable_low: f64,
    pub stable_high: f64,
    pub unstable_low: f64,
    pub unstable_high: f64,
    pub precision: f64,
    pub recall: f64,
    pub n: usize,
}

impl ConfusionMatrix {
    /// From `(predicted_stable, truth_stable)` pairs. Precision and recall
    /// are 0 when undefined.
    pub fn from_pairs(pairs: &[(bool, bool)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("confusion matrix of no instances".into()));
        }
        let count = |p: bool, t: bool| pairs.iter().filter(|&&q| q == (p, t)).count() as f64;
        let (tp, fp, fn_, tn) = (count(true, true), count(true, false), count(false, true), count(false, false));
        let n = pairs.len() as f64;
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        Ok(Self {
            stable_low: tp / n,
            stable_high: fp / n,
            unstable_low: fn_ / n,
            unstable_high: tn / n,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            n: pairs.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEvaluation {
    pub schema_version: u32,
    pub margin: f64,
    pub threshold: f64,
    pub m: usize,
    pub seed: u64,
    pub skipped: usize,
    pub verdicts: Vec<StabilityVerdict>,
    pub confusion: ConfusionMatrix,
}

impl StabilityEvaluation {
    /// Relabels truth with a new uncertainty threshold.
    pub fn rethreshold(&self, threshold: f64) -> Result<Self> {
        let mut out = self.clone();
        out.threshold = threshold;
        for v in &mut out.verdicts {
            v.truth_stable = v.measured_uncertainty.map(|u| u < threshold);
        }
        out.confusion = confusion_of(&out.verdicts)?;
        Ok(out)
    }

    pub fn uncertainties(&self) -> Vec<f64> {
        self.verdicts.iter().filter_map(|v| v.measured_uncertainty).collect()
    }
}

fn confusion_of(verdicts: &[StabilityVerdict]) -> Result<ConfusionMatrix> {
    let pairs: Vec<(bool, bool)> = verdicts
        .iter()
        .filter_map(|v| v.truth_stable.map(|t| (v.predicted_stable, t)))
        .collect();
    ConfusionMatrix::from_pairs(&pairs)
}

/// Predicts stability and measures Kendall uncertainty over `m` runs for
/// each instance; truth is `uncertainty < threshold`. Instances without a
/// boundary are skipped and counted.
#[allow(clippy::too_many_arguments)]
pub fn stability_evaluate<M: Blackbox + ?Sized>(
    model: &M,
    instances: &[Vec<f64>],
    spec: &ExplainerSpec,
    m: usize,
    threshold: f64,
    gs: &GrowingSpheresConfig,
    margin: f64,
    seed: u64,
) -> Result<StabilityEvaluation> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidConfig("uncertainty threshold must be positive".into()));
    }
    check_margin(margin)?;
    let mut verdicts = Vec::with_capacity(instances.len());
    let mut skipped = 0;
    for (i, x) in instances.iter().enumerate() {
        let inst_seed = derive_seed(seed, i as u64);
        let mut v = match stability_predict(model, x, gs, margin, substream(inst_seed, "stability")) {
            Ok(v) => v,
            Err(Error::BoundaryNotFound { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let ens = run_ensemble(model, x, spec, m, substream(inst_seed, "ensemble"))?;
        let u = kendall_w_uncertainty(&rank(&ens))?;
        v.measured_uncertainty = Some(u);
        v.truth_stable = Some(u < threshold);
        verdicts.push(v);
    }
    let confusion = confusion_of(&verdicts)?;
    Ok(StabilityEvaluation {
        schema_version: REPORT_SCHEMA_VERSION,
        margin,
        threshold,
        m,
        seed,
        skipped,
        verdicts,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lower: f64, upper: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(upper > lower) {
            return Err(Error::InvalidInput("histogram needs bins > 0 and upper > lower".into()));
        }
        let mut counts = vec![0; bins];
        let width = (upper - lower) / bins as f64;
        for &v in values {
            let b = (((v - lower) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Self { lower, upper, counts })
    }

    pub fn bin_width(&self) -> f64 {
        (self.upper - self.lower) / self.counts.len() as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.bin_width()
    }
}

/// Threshold between the two modes of a bimodal sample: Otsu's split of
/// the histogram, then the emptiest bin between the two class modes. The
/// returned value is that bin's upper edge. `None` if every value falls in
/// one bin.
pub fn histogram_valley(values: &[f64], bins: usize) -> Option<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    let h = Histogram::new(values, lo.min(0.0), hi, bins).ok()?;
    let c: Vec<f64> = h.counts.iter().map(|&v| v as f64).collect();
    let total: f64 = c.iter().sum();
    let mids: Vec<f64> = (0..bins).map(|i| i as f64 + 0.5).collect();
    let grand: f64 = c.iter().zip(&mids).map(|(a, b)| a * b).sum();
    let (mut best, mut split) = (-1.0, 0);
    let (mut w0, mut s0) = (0.0, 0.0);
    for t in 0..bins - 1 {
        w0 += c[t];
        s0 += c[t] * mids[t];
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let between = w0 * w1 * (s0 / w0 - (grand - s0) / w1).powi(2);
        if between > best {
            best = between;
            split = t;
        }
    }
    let argmax = |r: std::ops::Range<usize>| r.max_by(|&a, &b| c[a].total_cmp(&c[b]).then(b.cmp(&a)));
    let left = argmax(0..split + 1)?;
    let right = argmax(split + 1..bins)?;
    let valley = (left..=right).min_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)))?;
    Some(h.edge(valley + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub m: f64,
    pub n: usize,
    pub seed: u64,
    pub per_instance_cardinality: Vec<usize>,
    pub average: f64,
    pub skipped: usize,
}

/// Upper bound on boundary points counted around one instance.
pub const MAX_CARDINALITY: usize = 1000;

/// Average number of distinct boundary points within `(1 + m/100) * l1`
/// over the given instances.
pub fn model_complexity_at<M: Blackbox + ?Sized>(
    model: &M,
    instances: &[Vec<f64>],
    m: f64,
    gs: &GrowingSpheresConfig,
    seed: u64,
) -> Result<ComplexityReport> {
    if instances.is_empty() {
        return Err(Error::InvalidConfig("complexity needs at least one instance".into()));
    }
    let mut cards = Vec::with_capacity(instances.len());
    let mut skipped = 0;
    for (i, x) in instances.iter().enumerate() {
        match k_nearest_dbps(model, x, gs, MAX_CARDINALITY, m, derive_seed(seed, i as u64)) {
            Ok(set) => cards.push(set.len()),
            Err(Error::BoundaryNotFound { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let average = if cards.is_empty() {
        0.0
    } else {
        cards.iter().sum::<usize>() as f64 / cards.len() as f64
    };
    Ok(ComplexityReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: None,
        m,
        n: instances.len(),
        seed,
        per_instance_cardinality: cards,
        average,
        skipped,
    })
}

pub fn model_complexity<M: Blackbox + ?Sized>(
    model: &M,
    dataset: &Dataset,
    n: usize,
    m: f64,
    gs: &GrowingSpheresConfig,
    seed: u64,
) -> Result<ComplexityReport> {
    let instances = sample_instances(dataset, n, seed);
    model_complexity_at(model, &instances, m, gs, seed)
}

/// Mean Kendall uncertainty of `spec` over the instances.
pub fn mean_kendall_uncertainty<M: Blackbox + ?Sized>(
    model: &M,
    instances: &[Vec<f64>],
    spec: &ExplainerSpec,
    m: usize,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, x) in instances.iter().enumerate() {
        let ens = run_ensemble(model, x, spec, m, derive_seed(seed, i as u64))?;
        total += kendall_w_uncertainty(&rank(&ens))?;
    }
    Ok(total / instances.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub model: String,
    pub complexity: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub schema_version: u32,
    pub points: Vec<ModelPoint>,
    pub r: f64,
}

/// Pearson r between complexity and mean Kendall uncertainty across
/// models. Needs at least three models.
pub fn correlation_from_points(points: Vec<ModelPoint>) -> Result<CorrelationReport> {
    if points.len() < 3 {
        return Err(Error::InvalidConfig("correlation needs at least three models".into()));
    }
    let c: Vec<f64> = points.iter().map(|p| p.complexity).collect();
    let u: Vec<f64> = points.iter().map(|p| p.uncertainty).collect();
    let r = pearson(&c, &u)?;
    Ok(CorrelationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        points,
        r,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn complexity_uncertainty_correlation(
    models: &[(String, &dyn Blackbox)],
    instances: &[Vec<f64>],
    spec: &ExplainerSpec,
    m_runs: usize,
    m_percent: f64,
    gs: &GrowingSpheresConfig,
    seed: u64,
) -> Result<CorrelationReport> {
    if models.len() < 3 {
        return Err(Error::InvalidConfig("correlation needs at least three models".into()));
    }
    let mut points = Vec::with_capacity(models.len());
    for (name, model) in models {
        let c = model_complexity_at(*model, instances, m_percent, gs, substream(seed, "complexity"))?;
        let u = mean_kendall_uncertainty(*model, instances, spec, m_runs, substream(seed, "uncertainty"))?;
        points.push(ModelPoint {
            model: name.clone(),
            complexity: c.average,
            uncertainty: u,
        });
    }
    correlation_from_points(points)
}

/// Explainer settings shared by the benchmark tables. Kernel width and
/// background follow each dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSettings {
    pub num_samples: usize,
    pub num_coalitions: usize,
    pub k_mvg: f64,
    pub growing_spheres: GrowingSpheresConfig,
    pub metrics: MetricSettings,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            num_samples: 5000,
            num_coalitions: 2048,
            k_mvg: 2.0,
            growing_spheres: GrowingSpheresConfig::default(),
            metrics: MetricSettings::default(),
        }
    }
}

impl BenchmarkSettings {
    pub fn spec(&self, kind: ExplainerKind, dim: usize, background: &Background) -> ExplainerSpec {
        ExplainerSpec {
            kind,
            perturbation: PerturbationConfig::for_dim(dim).with_samples(self.num_samples),
            num_coalitions: self.num_coalitions,
            background: Some(background.clone()),
            k_mvg: self.k_mvg,
            growing_spheres: self.growing_spheres.clone(),
            confidence: self.metrics.confidence,
        }
    }
}

/// One (dataset, model) cell of a benchmark.
pub struct BenchmarkTarget<'a> {
    pub dataset: String,
    pub model: String,
    pub blackbox: &'a dyn Blackbox,
    pub instances: Vec<Vec<f64>>,
    pub background: Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub dataset: String,
    pub model: String,
    pub explainer: ExplainerKind,
    /// Mean over instances.
    pub metrics: BTreeMap<Metric, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub schema_version: u32,
    pub m: usize,
    pub seed: u64,
    pub settings: BenchmarkSettings,
    pub metrics: Vec<Metric>,
    pub rows: Vec<Table1Row>,
}

fn ensemble_for<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    spec: &ExplainerSpec,
    m: usize,
    seed: u64,
) -> Result<AttributionEnsemble> {
    if spec.kind == ExplainerKind::Random {
        random_baseline_ensemble(x.len(), m, seed)
    } else {
        run_ensemble(model, x, spec, m, seed)
    }
}

/// Every explainer on every target, each metric averaged over instances.
pub fn benchmark_table1(
    targets: &[BenchmarkTarget<'_>],
    explainers: &[ExplainerKind],
    metrics: &[Metric],
    m: usize,
    settings: &BenchmarkSettings,
    seed: u64,
) -> Result<Table1Report> {
    let mut rows = Vec::new();
    for target in targets {
        let dim = target.background.mean.len();
        for &kind in explainers {
            let spec = settings.spec(kind, dim, &target.background);
            let per_instance: Vec<Result<Vec<f64>>> = target
                .instances
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let inst_seed = derive_seed(seed, i as u64);
                    let ens = ensemble_for(target.blackbox, x, &spec, m, substream(inst_seed, kind.name()))?;
                    metrics
                        .iter()
                        .map(|&metric| compute_metric(&ens, metric, &settings.metrics, substream(inst_seed, "metric")))
                        .collect()
                })
                .collect();
            let mut sums = vec![0.0; metrics.len()];
            for r in per_instance {
                for (s, v) in sums.iter_mut().zip(r?) {
                    *s += v;
                }
            }
            let n = target.instances.len().max(1) as f64;
            rows.push(Table1Row {
                dataset: target.dataset.clone(),
                model: target.model.clone(),
                explainer: kind,
                metrics: metrics.iter().zip(&sums).map(|(&k, s)| (k, s / n)).collect(),
            });
        }
    }
    Ok(Table1Report {
        schema_version: REPORT_SCHEMA_VERSION,
        m,
        seed,
        settings: settings.clone(),
        metrics: metrics.to_vec(),
        rows,
    })
}

impl Table1Report {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["dataset".to_string(), "model".into(), "explainer".into()];
        header.extend(self.metrics.iter().map(|m| m.name().to_string()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.dataset.clone(), row.model.clone(), row.explainer.name().to_string()];
            rec.extend(self.metrics.iter().map(|m| format_value(row.metrics.get(m).copied())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_value(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

pub const TABLE2_TOP: [usize; 3] = [1, 2, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub explainer: ExplainerKind,
    /// Mean stdev of the top 1, 2 and 5 features (by plain-LIME ranking).
    pub top_stdev: [f64; 3],
    pub kendall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Report {
    pub schema_version: u32,
    pub k_mvg: f64,
    pub m: usize,
    pub n_instances: usize,
    pub seed: u64,
    pub settings: BenchmarkSettings,
    pub rows: Vec<Table2Row>,
}

impl Table2Report {
    pub fn row(&self, kind: ExplainerKind) -> Option<&Table2Row> {
        self.rows.iter().find(|r| r.explainer == kind)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["explainer", "top1_stdev", "top2_stdev", "top5_stdev", "kendall"])?;
        for r in &self.rows {
            w.write_record([
                r.explainer.name().to_string(),
                format!("{}", r.top_stdev[0]),
                format!("{}", r.top_stdev[1]),
                format!("{}", r.top_stdev[2]),
                format!("{}", r.kendall),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean stdev over the first `j` features of `order`.
fn top_stdev(ens: &AttributionEnsemble, order: &[usize], j: usize) -> Result<f64> {
    let sd = stdev_uncertainty(ens)?.per_feature;
    let j = j.min(order.len());
    Ok(order[..j].iter().map(|&f| sd[f]).sum::<f64>() / j as f64)
}

/// Per-instance inputs reused across explainers: the plain-LIME ensemble
/// (which fixes the top-j features) and the boundary prior.
struct Table2Instance {
    order: Vec<usize>,
    lime: AttributionEnsemble,
    prior: Option<BoundaryPrior>,
    seed: u64,
}

fn table2_instances<M: Blackbox + ?Sized>(
    model: &M,
    instances: &[Vec<f64>],
    background: &Background,
    m: usize,
    settings: &BenchmarkSettings,
    with_prior: bool,
    seed: u64,
) -> Result<Vec<Table2Instance>> {
    let dim = background.mean.len();
    let lime_spec = settings.spec(ExplainerKind::Lime, dim, background);
    instances
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let inst_seed = derive_seed(seed, i as u64);
            let lime = run_ensemble(model, x, &lime_spec, m, substream(inst_seed, "runs"))?;
            let order = importance_order(&lime.mean_importance());
            let prior = if with_prior {
                Some(ensemble_prior(model, x, &lime_spec, inst_seed)?)
            } else {
                None
            };
            Ok(Table2Instance {
                order,
                lime,
                prior,
                seed: inst_seed,
            })
        })
        .collect()
}

fn table2_row<M: Blackbox + ?Sized>(
    model: &M,
    insts: &[Table2Instance],
    spec: &ExplainerSpec,
    m: usize,
) -> Result<Table2Row> {
    let per: Vec<Result<[f64; 4]>> = insts
        .par_iter()
        .map(|inst| {
            let ens = if spec.kind == ExplainerKind::Lime {
                inst.lime.clone()
            } else {
                run_ensemble_with_prior(model, &inst.lime.instance, spec, inst.prior.as_ref(), m, substream(inst.seed, "runs"))?
            };
            Ok([
                top_stdev(&ens, &inst.order, TABLE2_TOP[0])?,
                top_stdev(&ens, &inst.order, TABLE2_TOP[1])?,
                top_stdev(&ens, &inst.order, TABLE2_TOP[2])?,
                kendall_w_uncertainty(&rank(&ens))?,
            ])
        })
        .collect();
    let mut sums = [0.0; 4];
    for r in per {
        for (s, v) in sums.iter_mut().zip(r?) {
            *s += v;
        }
    }
    let n = insts.len().max(1) as f64;
    Ok(Table2Row {
        explainer: spec.kind,
        top_stdev: [sums[0] / n, sums[1] / n, sums[2] / n],
        kendall: sums[3] / n,
    })
}

/// LIME, MVG-LIME, KernelSHAP and MVG-KS on the same instances.
pub fn benchmark_table2<M: Blackbox + ?Sized>(
    model: &M,
    instances: &[Vec<f64>],
    background: &Background,
    m: usize,
    settings: &BenchmarkSettings,
    seed: u64,
) -> Result<Table2Report> {
    if instances.is_empty() {
        return Err(Error::InvalidConfig("benchmark needs at least one instance".into()));
    }
    let dim = background.mean.len();
    let insts = table2_instances(model, instances, background, m, settings, true, seed)?;
    let mut rows = Vec::new();
    for kind in [
        ExplainerKind::Lime,
        ExplainerKind::MvgLime,
        ExplainerKind::KernelShap,
        ExplainerKind::MvgKernelShap,
    ] {
        rows.push(table2_row(model, &insts, &settings.spec(kind, dim, background), m)?);
    }
    Ok(Table2Report {
        schema_version: REPORT_SCHEMA_VERSION,
        k_mvg: settings.k_mvg,
        m,
        n_instances: instances.len(),
        seed,
        settings: settings.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCandidate {
    pub k: f64,
    pub top1_stdev: f64,
    pub kendall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTuning {
    pub schema_version: u32,
    pub lime: KCandidate,
    pub candidates: Vec<KCandidate>,
    pub selected: f64,
    /// Kendall tolerance relative to plain LIME used for selection.
    pub kendall_tolerance: f64,
}

impl KTuning {
    pub fn selected_candidate(&self) -> &KCandidate {
        self.candidates
            .iter()
            .find(|c| c.k == self.selected)
            .expect("selected k is a candidate")
    }
}

/// Picks the MVG-LIME `k` with the lowest top-1 stdev among candidates
/// whose Kendall uncertainty is within `kendall_tolerance` (relative) of
/// plain LIME; if none qualifies, the lowest top-1 stdev overall.
#[allow(clippy::too_many_arguments)]
pub fn tune_k_mvg<M: Blackbox + ?Sized>(
    model: &M,
    instances: &[Vec<f64>],
    background: &Background,
    ks: &[f64],
    m: usize,
    settings: &BenchmarkSettings,
    kendall_tolerance: f64,
    seed: u64,
) -> Result<KTuning> {
    if ks.is_empty() || instances.is_empty() {
        return Err(Error::InvalidConfig("k tuning needs candidates and instances".into()));
    }
    let dim = background.mean.len();
    let insts = table2_instances(model, instances, background, m, settings, true, seed)?;
    let lime_row = table2_row(model, &insts, &settings.spec(ExplainerKind::Lime, dim, background), m)?;
    let lime = KCandidate {
        k: 0.0,
        top1_stdev: lime_row.top_stdev[0],
        kendall: lime_row.kendall,
    };
    let mut candidates = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut spec = settings.spec(ExplainerKind::MvgLime, dim, background);
        spec.k_mvg = k;
        let row = table2_row(model, &insts, &spec, m)?;
        candidates.push(KCandidate {
            k,
            top1_stdev: row.top_stdev[0],
            kendall: row.kendall,
        });
    }
    let limit = lime.kendall * (1.0 + kendall_tolerance);
    let best = |it: &mut dyn Iterator<Item = &KCandidate>| {
        it.min_by(|a, b| a.top1_stdev.total_cmp(&b.top1_stdev)).map(|c| c.k)
    };
    let selected = best(&mut candidates.iter().filter(|c| c.kendall <= limit))
        .or_else(|| best(&mut candidates.iter()))
        .expect("non-empty candidates");
    Ok(KTuning {
        schema_version: REPORT_SCHEMA_VERSION,
        lime,
        candidates,
        selected,
        kendall_tolerance,
    })
}

/// Summary of a per-instance scalar: mean and sample stdev.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    (mean(values), if values.len() > 1 { sample_stdev(values) } else { 0.0 })
}
