//! Additive feature attributions.
//!
//! Every explainer returns an intercept plus one weight per feature and is a
//! pure function of `(model, x, config, seed)`.

mod bayeslime;
mod kernelshap;
mod lime;
mod mvg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bayeslime::{bayeslime_explain, CredibleAttribution};
pub use kernelshap::{kernelshap_explain, Background};
pub use lime::{lime_explain, sample_perturbations};
pub use mvg::{
    boundary_prior, mvg_covariance, mvg_kernelshap_explain, mvg_kernelshap_with_covariance,
    mvg_lime_explain, mvg_lime_with_prior, BoundaryPrior, COV_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplainerKind {
    Lime,
    KernelShap,
    BayesLime,
    MvgLime,
    MvgKernelShap,
    Random,
}

impl ExplainerKind {
    pub const ALL: [ExplainerKind; 6] = [
        ExplainerKind::Lime,
        ExplainerKind::KernelShap,
        ExplainerKind::BayesLime,
        ExplainerKind::MvgLime,
        ExplainerKind::MvgKernelShap,
        ExplainerKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExplainerKind::Lime => "lime",
            ExplainerKind::KernelShap => "kernel-shap",
            ExplainerKind::BayesLime => "bayes-lime",
            ExplainerKind::MvgLime => "mvg-lime",
            ExplainerKind::MvgKernelShap => "mvg-kernel-shap",
            ExplainerKind::Random => "random",
        }
    }
}

impl std::fmt::Display for ExplainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExplainerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        let alias = match norm.as_str() {
            "kernelshap" | "ks" | "shap" => "kernel-shap",
            "bayeslime" => "bayes-lime",
            "mvglime" => "mvg-lime",
            "mvg-ks" | "mvgks" | "mvg-kernelshap" => "mvg-kernel-shap",
            other => other,
        };
        ExplainerKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown explainer `{s}`")))
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub explainer: ExplainerKind,
    pub seed: u64,
    pub num_samples: usize,
    pub intercept: f64,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub feature_names: Vec<String>,
    /// Set when the surrogate's normal equations needed the ridge floor.
    #[serde(default, skip_serializing_if = "is_false")]
    pub ill_conditioned: bool,
}

impl Attribution {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn with_feature_names(mut self, names: &[String]) -> Self {
        self.feature_names = names.to_vec();
        self
    }

    /// `|w_j|`, the importance used for ranking.
    pub fn importance(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.abs()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    pub num_samples: usize,
    /// Kernel width sigma in `exp(-|x - z|^2 / sigma^2)`.
    pub kernel_width: f64,
    /// Per-feature perturbation variance; isotropic unit variance when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cov_diagonal: Option<Vec<f64>>,
    pub ridge_lambda: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            num_samples: 5000,
            kernel_width: 0.75,
            cov_diagonal: None,
            ridge_lambda: 1e-3,
        }
    }
}

impl PerturbationConfig {
    /// Defaults with kernel width `0.75 * sqrt(dim)`.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            kernel_width: 0.75 * (dim as f64).sqrt(),
            ..Self::default()
        }
    }

    pub fn with_samples(mut self, num_samples: usize) -> Self {
        self.num_samples = num_samples;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::InvalidConfig("num_samples must be positive".into()));
        }
        if !(self.kernel_width > 0.0) || !self.kernel_width.is_finite() {
            return Err(Error::InvalidConfig("kernel_width must be positive".into()));
        }
        if !(self.ridge_lambda >= 0.0) || !self.ridge_lambda.is_finite() {
            return Err(Error::InvalidConfig("ridge_lambda must be nonnegative".into()));
        }
        if let Some(cov) = &self.cov_diagonal {
            if cov.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: cov.len(),
                });
            }
            if cov.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidConfig(
                    "cov_diagonal entries must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_instance(dim: usize, x: &[f64]) -> Result<()> {
    Error::check_dim(dim, x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("instance has non-finite entries".into()));
    }
    Ok(())
}
