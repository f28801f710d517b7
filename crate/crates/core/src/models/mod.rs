//! Blackbox binary classifiers.
//!
//! Everything downstream (explainers, boundary search, analysis) only sees
//! the [`Blackbox`] trait: a probability for class 1 given a feature vector.
//! [`BlackboxModel`] is the trained, serializable family used by the CLI.

mod kernel;
mod logistic;
mod margin;
mod mlp;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::RowMatrix;

pub use logistic::logistic_objective;
pub use mlp::DenseLayer;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// A classifier that can only be queried.
pub trait Blackbox: Sync {
    fn input_dim(&self) -> usize;

    /// Probability of class 1. `x.len()` must equal [`Blackbox::input_dim`];
    /// callers validate dimensions once at their entry point.
    fn predict_proba(&self, x: &[f64]) -> f64;

    /// Ties at exactly 0.5 go to class 1.
    fn decision_label(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) >= 0.5)
    }
}

impl<T: Blackbox + ?Sized> Blackbox for &T {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn predict_proba(&self, x: &[f64]) -> f64 {
        (**self).predict_proba(x)
    }
    fn decision_label(&self, x: &[f64]) -> u8 {
        (**self).decision_label(x)
    }
}

/// Wraps a closure as a [`Blackbox`]. Handy for analytic test models.
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Blackbox for FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn predict_proba(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logistic,
    LinearMargin,
    RbfKernel,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Logistic,
        ModelKind::LinearMargin,
        ModelKind::RbfKernel,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::LinearMargin => "linear-margin",
            ModelKind::RbfKernel => "rbf-kernel",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Hidden widths, MLP only.
    pub hidden_layers: Vec<usize>,
    /// RBF kernel only.
    pub rbf_gamma: f64,
    pub ridge_lambda: f64,
    /// Cap on kernel centers; the training rows are subsampled beyond it.
    pub rbf_max_centers: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            hidden_layers: vec![16],
            rbf_gamma: 0.5,
            ridge_lambda: 1e-3,
            rbf_max_centers: 300,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::InvalidConfig("ridge_lambda must be nonnegative".into()));
        }
        match kind {
            ModelKind::RbfKernel => {
                if !(self.rbf_gamma > 0.0) {
                    return Err(Error::InvalidConfig("rbf_gamma must be positive".into()));
                }
                if self.rbf_max_centers == 0 {
                    return Err(Error::InvalidConfig("rbf_max_centers must be positive".into()));
                }
            }
            ModelKind::Mlp => {
                if self.hidden_layers.is_empty() {
                    return Err(Error::InvalidConfig(
                        "an MLP needs at least one hidden layer; use the logistic kind instead"
                            .into(),
                    ));
                }
                if self.hidden_layers.contains(&0) {
                    return Err(Error::InvalidConfig("hidden widths must be positive".into()));
                }
            }
            ModelKind::Logistic | ModelKind::LinearMargin => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelParams {
    Logistic {
        weights: Vec<f64>,
        bias: f64,
    },
    LinearMargin {
        weights: Vec<f64>,
        bias: f64,
    },
    RbfKernel {
        gamma: f64,
        centers: RowMatrix,
        coefficients: Vec<f64>,
        bias: f64,
    },
    Mlp {
        layers: Vec<DenseLayer>,
    },
}

/// A trained classifier. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackboxModel {
    pub schema_version: u32,
    pub input_dim: usize,
    pub params: ModelParams,
    pub config: TrainConfig,
    /// False when training stopped at the epoch budget without meeting the
    /// convergence test. The model is still usable.
    pub converged: bool,
}

impl BlackboxModel {
    fn from_params(input_dim: usize, params: ModelParams, config: TrainConfig, converged: bool) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            input_dim,
            params,
            config,
            converged,
        }
    }

    pub fn logistic(weights: Vec<f64>, bias: f64) -> Self {
        let d = weights.len();
        Self::from_params(d, ModelParams::Logistic { weights, bias }, TrainConfig::default(), true)
    }

    pub fn linear_margin(weights: Vec<f64>, bias: f64) -> Self {
        let d = weights.len();
        Self::from_params(
            d,
            ModelParams::LinearMargin { weights, bias },
            TrainConfig::default(),
            true,
        )
    }

    pub fn mlp(layers: Vec<DenseLayer>) -> Result<Self> {
        mlp::check_layers(&layers)?;
        let d = layers[0].inputs;
        Ok(Self::from_params(d, ModelParams::Mlp { layers }, TrainConfig::default(), true))
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Logistic { .. } => ModelKind::Logistic,
            ModelParams::LinearMargin { .. } => ModelKind::LinearMargin,
            ModelParams::RbfKernel { .. } => ModelKind::RbfKernel,
            ModelParams::Mlp { .. } => ModelKind::Mlp,
        }
    }

    /// Raw score before the sigmoid.
    pub fn score(&self, x: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Logistic { weights, bias } | ModelParams::LinearMargin { weights, bias } => {
                dot(weights, x) + bias
            }
            ModelParams::RbfKernel {
                gamma,
                centers,
                coefficients,
                bias,
            } => kernel::score(*gamma, centers, coefficients, *bias, x),
            ModelParams::Mlp { layers } => mlp::forward_logit(layers, x),
        }
    }

    pub fn try_predict_proba(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.input_dim, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(self.predict_proba(x))
    }

    pub fn try_decision_label(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.try_predict_proba(x)? >= 0.5))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: BlackboxModel = serde_json::from_str(text)?;
        if model.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model schema version {}",
                model.schema_version
            )));
        }
        model.check_shapes()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn check_shapes(&self) -> Result<()> {
        match &self.params {
            ModelParams::Logistic { weights, .. } | ModelParams::LinearMargin { weights, .. } => {
                Error::check_dim(self.input_dim, weights.len())
            }
            ModelParams::RbfKernel {
                centers,
                coefficients,
                ..
            } => {
                Error::check_dim(self.input_dim, centers.ncols())?;
                Error::check_dim(centers.nrows(), coefficients.len())
            }
            ModelParams::Mlp { layers } => {
                mlp::check_layers(layers)?;
                Error::check_dim(self.input_dim, layers[0].inputs)
            }
        }
    }
}

impl Blackbox for BlackboxModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x))
    }
}

/// Fits a classifier of the given kind on the training split of `dataset`.
///
/// Training is deterministic given `config.seed`. A NaN loss aborts with
/// [`Error::Training`]; running out of epochs only clears `converged`.
pub fn train(dataset: &Dataset, config: &TrainConfig, kind: ModelKind) -> Result<BlackboxModel> {
    config.validate(kind)?;
    let x = dataset.train_features();
    let y = dataset.train_labels();
    if y.is_empty() {
        return Err(Error::InvalidInput("empty training split".into()));
    }
    let d = dataset.n_features();
    let (params, converged) = match kind {
        ModelKind::Logistic => logistic::fit(&x, &y, config)?,
        ModelKind::LinearMargin => margin::fit(&x, &y, config)?,
        ModelKind::RbfKernel => kernel::fit(&x, &y, config)?,
        ModelKind::Mlp => mlp::fit(&x, &y, config)?,
    };
    Ok(BlackboxModel::from_params(d, params, config.clone(), converged))
}

/// Fraction of rows whose hard label matches.
pub fn accuracy<M: Blackbox + ?Sized>(model: &M, x: &RowMatrix, y: &[u8]) -> f64 {
    let hits = x
        .rows()
        .zip(y)
        .filter(|(row, &label)| model.decision_label(row) == label)
        .count();
    hits as f64 / y.len().max(1) as f64
}
