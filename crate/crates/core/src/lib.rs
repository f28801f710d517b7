//! Additive feature attributions for blackbox binary classifiers and the
//! uncertainty of those attributions across repeated explainer runs.
//!
//! Module map:
//! - [`data`]: synthetic generator, CSV loading, standardization
//! - [`models`]: the classifiers being explained
//! - [`explainers`]: LIME, KernelSHAP, BayesLIME and their
//!   boundary-informed variants
//! - [`geometry`]: Growing Spheres decision-boundary search
//! - [`uncertainty`]: attribution ensembles and the uncertainty metrics
//! - [`analysis`]: stable instances, model complexity, benchmark tables

pub mod analysis;
pub mod data;
pub mod error;
pub mod explainers;
pub mod geometry;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod stats;
pub mod uncertainty;

pub use data::{Dataset, Split, Standardizer, SyntheticSpec};
pub use error::{Error, Result};
pub use explainers::{Attribution, CredibleAttribution, ExplainerKind, PerturbationConfig};
pub use geometry::{DbpResult, DbpSet, GrowingSpheresConfig};
pub use uncertainty::{AttributionEnsemble, ExplainerSpec, Metric, RankMatrix, UncertaintyReport};
pub use models::{Blackbox, BlackboxModel, FnModel, ModelKind, TrainConfig};
