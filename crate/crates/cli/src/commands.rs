use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use xaiunc_core::analysis::{
    benchmark_table1, benchmark_table2, correlation_from_points, histogram_valley,
    mean_kendall_uncertainty, model_complexity_at, ModelPoint, sample_instances, stability_evaluate, tune_k_mvg, BenchmarkSettings,
    BenchmarkTarget,
};
use xaiunc_core::data::{generate_synthetic, load_csv, read_bundle, standardize, write_bundle};
use xaiunc_core::explainers::{bayeslime_explain, Background};
use xaiunc_core::models::{accuracy, train, Blackbox};
use xaiunc_core::rng::substream;
use xaiunc_core::uncertainty::{
    explain_once, ensemble_prior, random_baseline_ensemble, run_ensemble, MetricSettings,
    REPORT_SCHEMA_VERSION,
};
use xaiunc_core::{
    BlackboxModel, Dataset, Error, ExplainerKind, ExplainerSpec, GrowingSpheresConfig, Metric,
    ModelKind, PerturbationConfig, Result, SyntheticSpec, TrainConfig, UncertaintyReport,
};

use crate::config::resolve;

/// Options every command shares.
pub struct Context {
    pub seed: Option<u64>,
    pub file: Map<String, Value>,
    pub out: Option<PathBuf>,
}

impl Context {
    fn config<C, F>(&self, flags: &F) -> Result<C>
    where
        C: Default + Serialize + for<'de> Deserialize<'de>,
        F: Serialize,
    {
        let mut flags = serde_json::to_value(flags)?;
        if let (Some(seed), Value::Object(map)) = (self.seed, &mut flags) {
            map.insert("seed".into(), seed.into());
        }
        resolve(&self.file, flags)
    }

    /// Writes the report envelope to `--out`, or stdout.
    fn emit<C: Serialize, R: Serialize>(&self, command: &str, config: &C, result: &R) -> Result<()> {
        let envelope = Envelope {
            schema_version: REPORT_SCHEMA_VERSION,
            command,
            config,
            result,
        };
        let text = serde_json::to_string_pretty(&envelope)? + "\n";
        match &self.out {
            Some(path) => fs::write(path, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Envelope<'a, C, R> {
    schema_version: u32,
    command: &'a str,
    config: &'a C,
    result: &'a R,
}

// ---------------------------------------------------------------------------
// Shared pieces

#[derive(Args, Serialize, Debug, Default)]
pub struct DataArgs {
    /// Dataset bundle directory, or a headered CSV (standardized on load)
    #[arg(long)]
    data: Option<String>,
    /// Label column of a CSV
    #[arg(long)]
    label_column: Option<String>,
    /// Train split fraction of a CSV
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(default)]
pub struct DataConfig {
    data: Option<String>,
    label_column: String,
    train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            data: None,
            label_column: "label".into(),
            train_fraction: 0.8,
        }
    }
}

impl DataConfig {
    fn load(&self, seed: u64) -> Result<Dataset> {
        let path = self
            .data
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--data is required".into()))?;
        let path = Path::new(path);
        if path.is_dir() {
            return Ok(read_bundle(path)?.0);
        }
        let raw = load_csv(path, &self.label_column, self.train_fraction, substream(seed, "split"))?;
        Ok(standardize(&raw)?.0)
    }

    fn name(&self) -> String {
        self.data
            .as_deref()
            .and_then(|p| Path::new(p).file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

fn load_model(path: Option<&str>, dataset: &Dataset) -> Result<BlackboxModel> {
    let path = path.ok_or_else(|| Error::InvalidConfig("--model is required".into()))?;
    let text = fs::read_to_string(path)?;
    let mut value: Value = serde_json::from_str(&text)?;
    // Accept both a bare model and the envelope written by `train`.
    if let Some(result) = value.get_mut("result").map(Value::take) {
        value = result;
    }
    let model = BlackboxModel::from_json(&value.to_string())?;
    if model.input_dim() != dataset.n_features() {
        return Err(Error::DimensionMismatch {
            expected: dataset.n_features(),
            got: model.input_dim(),
        });
    }
    Ok(model)
}

fn instance_row(dataset: &Dataset, index: usize) -> Result<Vec<f64>> {
    if index >= dataset.n_rows() {
        return Err(Error::InvalidConfig(format!(
            "instance {index} out of range for {} rows",
            dataset.n_rows()
        )));
    }
    Ok(dataset.row(index).to_vec())
}

#[derive(Args, Serialize, Debug, Default)]
pub struct ExplainerArgs {
    /// Perturbation samples per LIME-family run
    #[arg(long)]
    num_samples: Option<usize>,
    /// LIME kernel width; 0.75 sqrt(D) when absent
    #[arg(long)]
    kernel_width: Option<f64>,
    #[arg(long)]
    ridge_lambda: Option<f64>,
    /// Model evaluations per KernelSHAP-family run
    #[arg(long)]
    num_coalitions: Option<usize>,
    /// MVG covariance scale
    #[arg(long)]
    k_mvg: Option<f64>,
    /// Credible / confidence level
    #[arg(long)]
    confidence: Option<f64>,
    /// Growing Spheres points per layer
    #[arg(long)]
    gs_samples: Option<usize>,
    /// Growing Spheres initial radius
    #[arg(long)]
    gs_eta: Option<f64>,
    #[arg(long)]
    gs_max_layers: Option<usize>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(default)]
pub struct ExplainerOptions {
    num_samples: usize,
    kernel_width: Option<f64>,
    ridge_lambda: f64,
    num_coalitions: usize,
    k_mvg: f64,
    confidence: f64,
    gs_samples: usize,
    gs_eta: f64,
    gs_max_layers: usize,
}

impl Default for ExplainerOptions {
    fn default() -> Self {
        let spec = ExplainerSpec::default();
        let gs = GrowingSpheresConfig::default();
        Self {
            num_samples: spec.perturbation.num_samples,
            kernel_width: None,
            ridge_lambda: spec.perturbation.ridge_lambda,
            num_coalitions: spec.num_coalitions,
            k_mvg: spec.k_mvg,
            confidence: spec.confidence,
            gs_samples: gs.n,
            gs_eta: gs.eta,
            gs_max_layers: gs.max_layers,
        }
    }
}

impl ExplainerOptions {
    fn growing_spheres(&self) -> Result<GrowingSpheresConfig> {
        let gs = GrowingSpheresConfig {
            eta: self.gs_eta,
            n: self.gs_samples,
            max_layers: self.gs_max_layers,
            ..GrowingSpheresConfig::default()
        };
        gs.validate()?;
        Ok(gs)
    }

    fn perturbation(&self, dim: usize) -> Result<PerturbationConfig> {
        let mut p = PerturbationConfig::for_dim(dim).with_samples(self.num_samples);
        if let Some(w) = self.kernel_width {
            p.kernel_width = w;
        }
        p.ridge_lambda = self.ridge_lambda;
        p.validate(dim)?;
        Ok(p)
    }

    fn spec(&self, kind: ExplainerKind, background: &Background) -> Result<ExplainerSpec> {
        let dim = background.mean.len();
        Ok(ExplainerSpec {
            kind,
            perturbation: self.perturbation(dim)?,
            num_coalitions: self.num_coalitions,
            background: Some(background.clone()),
            k_mvg: self.k_mvg,
            growing_spheres: self.growing_spheres()?,
            confidence: self.confidence,
        })
    }

    fn settings(&self, metrics: MetricSettings) -> Result<BenchmarkSettings> {
        Ok(BenchmarkSettings {
            num_samples: self.num_samples,
            num_coalitions: self.num_coalitions,
            k_mvg: self.k_mvg,
            growing_spheres: self.growing_spheres()?,
            metrics,
        })
    }
}

fn check_runs(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("m must be at least 2, got {m}")));
    }
    Ok(())
}

fn check_instances(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("n_instances must be positive".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

#[derive(Args, Serialize, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Standardize features on the train split before writing
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    standardize: bool,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default)]
pub struct GenerateConfig {
    seed: u64,
    dims: usize,
    count: usize,
    train_fraction: f64,
    standardize: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dims: 8,
            count: 768,
            train_fraction: 0.8,
            standardize: false,
        }
    }
}

#[derive(Serialize)]
struct GenerateSummary {
    bundle: String,
    n_rows: usize,
    n_features: usize,
    positive_rate: f64,
}

pub fn generate(ctx: &Context, args: &GenerateArgs) -> Result<()> {
    let cfg: GenerateConfig = ctx.config(args)?;
    let dir = ctx
        .out
        .clone()
        .ok_or_else(|| Error::InvalidConfig("generate needs --out DIR".into()))?;
    let mut spec = SyntheticSpec::with_default_mixture(cfg.dims, cfg.count, cfg.seed);
    spec.train_fraction = cfg.train_fraction;
    let raw = generate_synthetic(&spec)?;
    let (dataset, scale) = if cfg.standardize {
        let (d, s) = standardize(&raw)?;
        (d, Some(s))
    } else {
        (raw, None)
    };
    let provenance = serde_json::json!({ "command": "generate", "config": &cfg });
    write_bundle(&dataset, scale.as_ref(), Some(provenance), &dir)?;
    let summary = GenerateSummary {
        bundle: dir.display().to_string(),
        n_rows: dataset.n_rows(),
        n_features: dataset.n_features(),
        positive_rate: dataset.positive_rate(),
    };
    let text = serde_json::to_string_pretty(&Envelope {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "generate",
        config: &cfg,
        result: &summary,
    })? + "\n";
    std::io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args, Serialize, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// logistic, linear-margin, rbf-kernel or mlp
    #[arg(long)]
    kind: Option<ModelKind>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated MLP hidden widths
    #[arg(long, value_delimiter = ',')]
    hidden_layers: Option<Vec<usize>>,
    #[arg(long)]
    rbf_gamma: Option<f64>,
    #[arg(long)]
    rbf_max_centers: Option<usize>,
    #[arg(long)]
    ridge_lambda: Option<f64>,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default)]
pub struct TrainCmdConfig {
    seed: u64,
    #[serde(flatten)]
    data: DataConfig,
    kind: ModelKind,
    learning_rate: f64,
    epochs: usize,
    hidden_layers: Vec<usize>,
    rbf_gamma: f64,
    rbf_max_centers: usize,
    ridge_lambda: f64,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 0,
            data: DataConfig::default(),
            kind: ModelKind::Logistic,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            hidden_layers: t.hidden_layers,
            rbf_gamma: t.rbf_gamma,
            rbf_max_centers: t.rbf_max_centers,
            ridge_lambda: t.ridge_lambda,
        }
    }
}

pub fn train_cmd(ctx: &Context, args: &TrainArgs) -> Result<()> {
    let cfg: TrainCmdConfig = ctx.config(args)?;
    let dataset = cfg.data.load(cfg.seed)?;
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        hidden_layers: cfg.hidden_layers.clone(),
        rbf_gamma: cfg.rbf_gamma,
        ridge_lambda: cfg.ridge_lambda,
        rbf_max_centers: cfg.rbf_max_centers,
        seed: cfg.seed,
    };
    let model = train(&dataset, &tc, cfg.kind)?;
    let acc = accuracy(&model, &dataset.train_features(), &dataset.train_labels());
    eprintln!("{}: train accuracy {acc:.4}", cfg.kind.name());
    ctx.emit("train", &cfg, &model)
}

// ---------------------------------------------------------------------------
// explain

#[derive(Args, Serialize, Debug)]
pub struct ExplainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Model JSON written by `train`
    #[arg(long)]
    model: Option<String>,
    /// Row index of the instance in the dataset
    #[arg(long)]
    instance: Option<usize>,
    #[arg(long)]
    explainer: Option<ExplainerKind>,
    #[command(flatten)]
    #[serde(flatten)]
    options: ExplainerArgs,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default)]
pub struct ExplainConfig {
    seed: u64,
    #[serde(flatten)]
    data: DataConfig,
    model: Option<String>,
    instance: usize,
    explainer: ExplainerKind,
    #[serde(flatten)]
    options: ExplainerOptions,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            model: None,
            instance: 0,
            explainer: ExplainerKind::Lime,
            options: ExplainerOptions::default(),
        }
    }
}

pub fn explain(ctx: &Context, args: &ExplainArgs) -> Result<()> {
    let cfg: ExplainConfig = ctx.config(args)?;
    let dataset = cfg.data.load(cfg.seed)?;
    let model = load_model(cfg.model.as_deref(), &dataset)?;
    let x = instance_row(&dataset, cfg.instance)?;
    let background = Background::from_dataset(&dataset)?;
    let spec = cfg.options.spec(cfg.explainer, &background)?;
    let names = dataset.feature_names().to_vec();
    if cfg.explainer == ExplainerKind::BayesLime {
        let mut a = bayeslime_explain(&model, &x, &spec.perturbation, spec.confidence, cfg.seed)?;
        a.feature_names = names;
        return ctx.emit("explain", &cfg, &a);
    }
    let prior = match cfg.explainer {
        ExplainerKind::MvgLime | ExplainerKind::MvgKernelShap => {
            Some(ensemble_prior(&model, &x, &spec, cfg.seed)?)
        }
        _ => None,
    };
    let a = explain_once(&model, &x, &spec, prior.as_ref(), cfg.seed)?.with_feature_names(&names);
    ctx.emit("explain", &cfg, &a)
}

// ---------------------------------------------------------------------------
// uncertainty

#[derive(Args, Serialize, Debug)]
pub struct UncertaintyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    instance: Option<usize>,
    #[arg(long)]
    explainer: Option<ExplainerKind>,
    /// Repeated runs
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated metric names; all when absent
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    bootstrap_resamples: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    options: ExplainerArgs,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default)]
pub struct UncertaintyConfig {
    seed: u64,
    #[serde(flatten)]
    data: DataConfig,
    model: Option<String>,
    instance: usize,
    explainer: ExplainerKind,
    m: usize,
    metrics: Vec<Metric>,
    top_k: usize,
    bootstrap_resamples: usize,
    #[serde(flatten)]
    options: ExplainerOptions,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        let ms = MetricSettings::default();
        Self {
            seed: 0,
            data: DataConfig::default(),
            model: None,
            instance: 0,
            explainer: ExplainerKind::Lime,
            m: 30,
            metrics: Metric::ALL.to_vec(),
            top_k: ms.top_k,
            bootstrap_resamples: ms.bootstrap_resamples,
            options: ExplainerOptions::default(),
        }
    }
}

impl UncertaintyConfig {
    fn metric_settings(&self) -> MetricSettings {
        MetricSettings {
            confidence: self.options.confidence,
            top_k: self.top_k,
            bootstrap_resamples: self.bootstrap_resamples,
        }
    }
}

pub fn uncertainty(ctx: &Context, args: &UncertaintyArgs) -> Result<()> {
    let cfg: UncertaintyConfig = ctx.config(args)?;
    check_runs(cfg.m)?;
    let dataset = cfg.data.load(cfg.seed)?;
    let model = load_model(cfg.model.as_deref(), &dataset)?;
    let x = instance_row(&dataset, cfg.instance)?;
    let background = Background::from_dataset(&dataset)?;
    let spec = cfg.options.spec(cfg.explainer, &background)?;
    let ensemble_seed = substream(cfg.seed, "ensemble");
    let ensemble = if cfg.explainer == ExplainerKind::Random {
        random_baseline_ensemble(x.len(), cfg.m, ensemble_seed)?
    } else {
        run_ensemble(&model, &x, &spec, cfg.m, ensemble_seed)?
    };
    let report = UncertaintyReport::compute_selected(
        &ensemble,
        &cfg.metrics,
        &cfg.metric_settings(),
        substream(cfg.seed, "metrics"),
    )?;
    ctx.emit("uncertainty", &cfg, &report)
}

// ---------------------------------------------------------------------------
// benchmark

#[derive(Args, Serialize, Debug)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: Option<String>,
    /// 1: explainers x metrics; 2: plain versus MVG sampling
    #[arg(long)]
    table: Option<u8>,
    /// Comma-separated explainers for table 1
    #[arg(long, value_delimiter = ',')]
    explainers: Option<Vec<ExplainerKind>>,
    /// Comma-separated metrics for table 1
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n_instances: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    bootstrap_resamples: Option<usize>,
    /// Comma-separated k_mvg candidates to tune over for table 2
    #[arg(long, value_delimiter = ',')]
    tune_k: Option<Vec<f64>>,
    /// Allowed relative Kendall increase over LIME when tuning k_mvg
    #[arg(long)]
    kendall_tolerance: Option<f64>,
    /// Also write the table as CSV here
    #[arg(long)]
    csv: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    options: ExplainerArgs,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default)]
pub struct BenchmarkConfig {
    seed: u64,
    #[serde(flatten)]
    data: DataConfig,
    model: Option<String>,
    table: u8,
    explainers: Vec<ExplainerKind>,
    metrics: Vec<Metric>,
    m: usize,
    n_instances: usize,
    top_k: usize,
    bootstrap_resamples: usize,
    tune_k: Vec<f64>,
    kendall_tolerance: f64,
    csv: Option<String>,
    #[serde(flatten)]
    options: ExplainerOptions,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let ms = MetricSettings::default();
        Self {
            seed: 0,
            data: DataConfig::default(),
            model: None,
            table: 1,
            explainers: ExplainerKind::ALL.to_vec(),
            metrics: Metric::ALL.to_vec(),
            m: 30,
            n_instances: 30,
            top_k: ms.top_k,
            bootstrap_resamples: ms.bootstrap_resamples,
            tune_k: Vec::new(),
            kendall_tolerance: 0.05,
            csv: None,
            options: ExplainerOptions::default(),
        }
    }
}

#[derive(Serialize)]
struct Table2Result {
    #[serde(skip_serializing_if = "Option::is_none")]
    tuning: Option<xaiunc_core::analysis::KTuning>,
    table: xaiunc_core::analysis::Table2Report,
}

pub fn benchmark(ctx: &Context, args: &BenchmarkArgs) -> Result<()> {
    let cfg: BenchmarkConfig = ctx.config(args)?;
    check_runs(cfg.m)?;
    check_instances(cfg.n_instances)?;
    let dataset = cfg.data.load(cfg.seed)?;
    let model = load_model(cfg.model.as_deref(), &dataset)?;
    let background = Background::from_dataset(&dataset)?;
    let instances = sample_instances(&dataset, cfg.n_instances, cfg.seed);
    let mut settings = cfg.options.settings(MetricSettings {
        confidence: cfg.options.confidence,
        top_k: cfg.top_k,
        bootstrap_resamples: cfg.bootstrap_resamples,
    })?;
    let csv_path = cfg.csv.as_deref().map(Path::new);
    match cfg.table {
        1 => {
            if cfg.explainers.is_empty() || cfg.metrics.is_empty() {
                return Err(Error::InvalidConfig("table 1 needs explainers and metrics".into()));
            }
            let target = BenchmarkTarget {
                dataset: cfg.data.name(),
                model: model.kind().name().into(),
                blackbox: &model,
                instances,
                background,
            };
            let report = benchmark_table1(
                &[target],
                &cfg.explainers,
                &cfg.metrics,
                cfg.m,
                &settings,
                substream(cfg.seed, "benchmark"),
            )?;
            if let Some(p) = csv_path {
                report.write_csv(fs::File::create(p)?)?;
            }
            ctx.emit("benchmark", &cfg, &report)
        }
        2 => {
            let tuning = if cfg.tune_k.is_empty() {
                None
            } else {
                let t = tune_k_mvg(
                    &model,
                    &instances,
                    &background,
                    &cfg.tune_k,
                    cfg.m,
                    &settings,
                    cfg.kendall_tolerance,
                    substream(cfg.seed, "benchmark"),
                )?;
                settings.k_mvg = t.selected;
                Some(t)
            };
            let table = benchmark_table2(
                &model,
                &instances,
                &background,
                cfg.m,
                &settings,
                substream(cfg.seed, "benchmark"),
            )?;
            if let Some(p) = csv_path {
                table.write_csv(fs::File::create(p)?)?;
            }
            ctx.emit("benchmark", &cfg, &Table2Result { tuning, table })
        }
        t => Err(Error::InvalidConfig(format!("table must be 1 or 2, got {t}"))),
    }
}

// ---------------------------------------------------------------------------
// stability

#[derive(Args, Serialize, Debug)]
pub struct StabilityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    explainer: Option<ExplainerKind>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n_instances: Option<usize>,
    /// Kendall uncertainty below which an instance counts as stable
    #[arg(long)]
    threshold: Option<f64>,
    /// Replace the threshold by the histogram valley over this many bins
    #[arg(long)]
    valley_bins: Option<usize>,
    /// Stable when l2 >= (1 + margin) l1
    #[arg(long)]
    margin: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    options: ExplainerArgs,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default)]
pub struct StabilityConfig {
    seed: u64,
    #[serde(flatten)]
    data: DataConfig,
    model: Option<String>,
    explainer: ExplainerKind,
    m: usize,
    n_instances: usize,
    threshold: f64,
    valley_bins: Option<usize>,
    margin: f64,
    #[serde(flatten)]
    options: ExplainerOptions,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            model: None,
            explainer: ExplainerKind::Lime,
            m: 30,
            n_instances: 200,
            threshold: 0.02,
            valley_bins: None,
            margin: 0.05,
            options: ExplainerOptions::default(),
        }
    }
}

pub fn stability(ctx: &Context, args: &StabilityArgs) -> Result<()> {
    let cfg: StabilityConfig = ctx.config(args)?;
    check_runs(cfg.m)?;
    check_instances(cfg.n_instances)?;
    let dataset = cfg.data.load(cfg.seed)?;
    let model = load_model(cfg.model.as_deref(), &dataset)?;
    let background = Background::from_dataset(&dataset)?;
    let spec = cfg.options.spec(cfg.explainer, &background)?;
    let instances = sample_instances(&dataset, cfg.n_instances, cfg.seed);
    let mut eval = stability_evaluate(
        &model,
        &instances,
        &spec,
        cfg.m,
        cfg.threshold,
        &spec.growing_spheres,
        cfg.margin,
        substream(cfg.seed, "stability"),
    )?;
    if let Some(bins) = cfg.valley_bins {
        let valley = histogram_valley(&eval.uncertainties(), bins).ok_or_else(|| {
            Error::InvalidInput("uncertainty histogram has no valley".into())
        })?;
        eval = eval.rethreshold(valley)?;
    }
    ctx.emit("stability", &cfg, &eval)
}

// ---------------------------------------------------------------------------
// complexity

#[derive(Args, Serialize, Debug)]
pub struct ComplexityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Model JSON; repeat or comma-separate three or more to also correlate
    /// complexity with Kendall uncertainty
    #[arg(long = "model", value_delimiter = ',')]
    #[serde(rename = "models")]
    model: Option<Vec<String>>,
    #[arg(long)]
    n_instances: Option<usize>,
    /// Shell width in percent of l1
    #[arg(long)]
    m_percent: Option<f64>,
    /// Runs per instance for the correlation
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    explainer: Option<ExplainerKind>,
    #[command(flatten)]
    #[serde(flatten)]
    options: ExplainerArgs,
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(default)]
pub struct ComplexityConfig {
    seed: u64,
    #[serde(flatten)]
    data: DataConfig,
    models: Vec<String>,
    n_instances: usize,
    m_percent: f64,
    m: usize,
    explainer: ExplainerKind,
    #[serde(flatten)]
    options: ExplainerOptions,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            models: Vec::new(),
            n_instances: 50,
            m_percent: 5.0,
            m: 20,
            explainer: ExplainerKind::Lime,
            options: ExplainerOptions::default(),
        }
    }
}

#[derive(Serialize)]
struct ComplexityResult {
    reports: Vec<xaiunc_core::analysis::ComplexityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    correlation: Option<CorrelationOut>,
}

/// `r` is null when every model has the same complexity or uncertainty.
#[derive(Serialize)]
struct CorrelationOut {
    points: Vec<ModelPoint>,
    r: Option<f64>,
}

pub fn complexity(ctx: &Context, args: &ComplexityArgs) -> Result<()> {
    let cfg: ComplexityConfig = ctx.config(args)?;
    check_instances(cfg.n_instances)?;
    if cfg.models.is_empty() {
        return Err(Error::InvalidConfig("--model is required".into()));
    }
    let dataset = cfg.data.load(cfg.seed)?;
    let models = cfg
        .models
        .iter()
        .map(|p| load_model(Some(p), &dataset))
        .collect::<Result<Vec<_>>>()?;
    let gs = cfg.options.growing_spheres()?;
    let instances = sample_instances(&dataset, cfg.n_instances, cfg.seed);
    let mut reports = Vec::with_capacity(models.len());
    for (path, model) in cfg.models.iter().zip(&models) {
        let mut r = model_complexity_at(model, &instances, cfg.m_percent, &gs, substream(cfg.seed, "complexity"))?;
        r.model = Some(path.clone());
        reports.push(r);
    }
    let correlation = if models.len() >= 3 {
        check_runs(cfg.m)?;
        let background = Background::from_dataset(&dataset)?;
        let spec = cfg.options.spec(cfg.explainer, &background)?;
        let points = cfg
            .models
            .iter()
            .zip(&models)
            .zip(&reports)
            .map(|((path, model), r)| {
                let u = mean_kendall_uncertainty(model, &instances, &spec, cfg.m, substream(cfg.seed, "uncertainty"))?;
                Ok(ModelPoint {
                    model: path.clone(),
                    complexity: r.average,
                    uncertainty: u,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Some(match correlation_from_points(points.clone()) {
            Ok(c) => CorrelationOut { points: c.points, r: Some(c.r) },
            Err(Error::UndefinedCorrelation(_)) => CorrelationOut { points, r: None },
            Err(e) => return Err(e),
        })
    } else {
        None
    };
    ctx.emit("complexity", &cfg, &ComplexityResult { reports, correlation })
}
