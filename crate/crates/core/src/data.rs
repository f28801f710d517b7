//! Datasets: the synthetic Gaussian-mixture generator, CSV ingestion,
//! standardization, and reproducible on-disk bundles.

use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RowMatrix;
use crate::rng::{rng_from_seed, substream};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
const LABEL_HEADER: &str = "label";

/// Ordered partition of row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Uniformly random split with `floor(n * train_fraction)` training rows.
    /// Both index lists are returned in ascending order.
    pub fn random(n: usize, train_fraction: f64, seed: u64) -> Result<Split> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {train_fraction} outside [0, 1]"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_from_seed(seed));
        let n_train = (n as f64 * train_fraction).floor() as usize;
        let mut train = idx[..n_train].to_vec();
        let mut test = idx[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Split { train, test })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: RowMatrix,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    split: Split,
}

impl Dataset {
    pub fn new(
        features: RowMatrix,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        split: Split,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::Schema(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::Schema(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Schema(format!("label {bad} is not binary")));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Schema(format!(
                "non-finite value at row {}, column {}",
                pos / features.ncols().max(1),
                pos % features.ncols().max(1)
            )));
        }
        let mut seen = vec![false; n];
        for &i in split.train.iter().chain(&split.test) {
            if i >= n || seen[i] {
                return Err(Error::Schema(format!(
                    "split index {i} is out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Schema("split does not cover every row".into()));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            split,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &RowMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn train_features(&self) -> RowMatrix {
        self.features.select_rows(&self.split.train)
    }

    pub fn train_labels(&self) -> Vec<u8> {
        self.split.train.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn test_rows(&self) -> Vec<Vec<f64>> {
        self.split.test.iter().map(|&i| self.row(i).to_vec()).collect()
    }

    /// Fraction of rows labelled 1.
    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / self.n_rows() as f64
    }

    /// Axis-aligned bounding box of the training rows.
    pub fn bounding_box(&self) -> BoundingBox {
        let d = self.n_features();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for &i in &self.split.train {
            for (j, &v) in self.row(i).iter().enumerate() {
                lower[j] = lower[j].min(v);
                upper[j] = upper[j].max(v);
            }
        }
        BoundingBox { lower, upper }
    }

    /// Column means of the training rows.
    pub fn train_mean(&self) -> Vec<f64> {
        let d = self.n_features();
        let mut m = vec![0.0; d];
        for &i in &self.split.train {
            for (a, v) in m.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let n = self.split.train.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
            .collect()
    }

    /// `n` points drawn uniformly from the box.
    pub fn sample_many(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

// ---------------------------------------------------------------------------
// Synthetic generator

/// Per-feature label-shaping function applied to a standardized feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiKind {
    Linear,
    PiecewiseConstant,
    Absolute,
    Sine,
    Cosine,
    Exponent,
    PiecewiseLinear,
}

impl PsiKind {
    pub const ALL: [PsiKind; 7] = [
        PsiKind::Linear,
        PsiKind::PiecewiseConstant,
        PsiKind::Absolute,
        PsiKind::Sine,
        PsiKind::Cosine,
        PsiKind::Exponent,
        PsiKind::PiecewiseLinear,
    ];

    /// Breakpoints of the piecewise kinds sit at -1, 0 and 1.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            PsiKind::Linear => x,
            PsiKind::PiecewiseConstant => {
                if x < -1.0 {
                    -1.5
                } else if x < 0.0 {
                    -0.5
                } else if x < 1.0 {
                    0.5
                } else {
                    1.5
                }
            }
            PsiKind::Absolute => x.abs(),
            PsiKind::Sine => x.sin(),
            PsiKind::Cosine => x.cos(),
            PsiKind::Exponent => x.min(3.0).exp(),
            // slopes 0, 1, -1, 1 on the four pieces; continuous
            PsiKind::PiecewiseLinear => {
                (x + 1.0).max(0.0) - 2.0 * x.max(0.0) + 2.0 * (x - 1.0).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dims: usize,
    pub count: usize,
    pub mixture: Vec<MixtureComponent>,
    pub psi: Vec<PsiKind>,
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.75
}

impl SyntheticSpec {
    /// Three equally weighted components with means uniform in `[-2, 2]^D`,
    /// diagonal covariances uniform in `[0.5, 1.5]`, and the label functions
    /// cycling through every [`PsiKind`].
    pub fn with_default_mixture(dims: usize, count: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(substream(seed, "mixture"));
        let mixture = (0..3)
            .map(|_| {
                let mean = (0..dims).map(|_| rng.random_range(-2.0..=2.0)).collect();
                let covariance = (0..dims)
                    .map(|i| {
                        let mut row = vec![0.0; dims];
                        row[i] = rng.random_range(0.5..=1.5);
                        row
                    })
                    .collect();
                MixtureComponent {
                    mean,
                    covariance,
                    weight: 1.0 / 3.0,
                }
            })
            .collect();
        let psi = (0..dims).map(|i| PsiKind::ALL[i % PsiKind::ALL.len()]).collect();
        Self {
            dims,
            count,
            mixture,
            psi,
            seed,
            train_fraction: default_train_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.count == 0 {
            return Err(Error::InvalidConfig("dims and count must be positive".into()));
        }
        if self.mixture.is_empty() {
            return Err(Error::InvalidConfig("mixture has no components".into()));
        }
        if self.psi.len() != self.dims {
            return Err(Error::InvalidConfig(format!(
                "{} psi assignments for {} dims",
                self.psi.len(),
                self.dims
            )));
        }
        let wsum: f64 = self.mixture.iter().map(|c| c.weight).sum();
        if self.mixture.iter().any(|c| !(c.weight > 0.0)) || (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "mixture weights must be positive and sum to 1".into(),
            ));
        }
        for (k, c) in self.mixture.iter().enumerate() {
            if c.mean.len() != self.dims
                || c.covariance.len() != self.dims
                || c.covariance.iter().any(|r| r.len() != self.dims)
            {
                return Err(Error::InvalidConfig(format!(
                    "component {k} does not match {} dims",
                    self.dims
                )));
            }
        }
        Ok(())
    }
}

/// Square-root factor `L` with `L L^T = cov` for a symmetric PSD matrix.
fn covariance_factor(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = cov.len();
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidConfig("covariance is not symmetric".into()));
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| l < -1e-9 * scale) {
        return Err(Error::InvalidConfig(
            "covariance is not positive semi-definite".into(),
        ));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Draws the mixture, standardizes every feature over the generated rows,
/// applies the label functions, thresholds the normalized score at zero and
/// splits the rows.
///
/// The stored features are the standardized values the label functions saw.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.dims;
    let n = spec.count;
    let factors = spec
        .mixture
        .iter()
        .map(|c| covariance_factor(&c.covariance))
        .collect::<Result<Vec<_>>>()?;
    let diagonal: Vec<Option<Vec<f64>>> = factors
        .iter()
        .map(|f| {
            let is_diag = (0..d).all(|i| (0..d).all(|j| i == j || f[(i, j)] == 0.0));
            is_diag.then(|| (0..d).map(|i| f[(i, i)]).collect())
        })
        .collect();
    let chooser = WeightedIndex::new(spec.mixture.iter().map(|c| c.weight))
        .map_err(|e| Error::InvalidConfig(format!("mixture weights: {e}")))?;

    let mut rng = rng_from_seed(substream(spec.seed, "samples"));
    let mut features = RowMatrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for i in 0..n {
        let k = chooser.sample(&mut rng);
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mean = &spec.mixture[k].mean;
        let row = features.row_mut(i);
        match &diagonal[k] {
            Some(diag) => {
                for j in 0..d {
                    row[j] = mean[j] + diag[j] * z[j];
                }
            }
            None => {
                let l = &factors[k];
                for j in 0..d {
                    let mut acc = mean[j];
                    for t in 0..d {
                        acc += l[(j, t)] * z[t];
                    }
                    row[j] = acc;
                }
            }
        }
    }

    for j in 0..d {
        let col = features.column(j);
        let m = crate::stats::mean(&col);
        let s = crate::stats::population_stdev(&col);
        let s = if s > 0.0 { s } else { 1.0 };
        for i in 0..n {
            features.set(i, j, (features.get(i, j) - m) / s);
        }
    }

    let raw: Vec<f64> = features
        .rows()
        .map(|r| r.iter().zip(&spec.psi).map(|(&x, psi)| psi.apply(x)).sum())
        .collect();
    let m = crate::stats::mean(&raw);
    let s = crate::stats::population_stdev(&raw);
    let s = if s > 0.0 { s } else { 1.0 };
    let labels = raw.iter().map(|y| u8::from((y - m) / s > 0.0)).collect();

    let names = (0..d).map(|j| format!("x{j}")).collect();
    let split = Split::random(n, spec.train_fraction, substream(spec.seed, "split"))?;
    Dataset::new(features, labels, names, split)
}

// ---------------------------------------------------------------------------
// CSV

/// Reads a headered, comma-separated file. Every column other than
/// `label_column` is a feature.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    split_ratio: f64,
    seed: u64,
) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    read_csv(file, label_column, split_ratio, seed)
}

pub fn read_csv<R: Read>(
    reader: R,
    label_column: &str,
    split_ratio: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Schema(format!("label column `{label_column}` not found")))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();
    let names: Vec<String> = feature_cols
        .iter()
        .map(|&i| headers[i].trim().to_string())
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for &c in &feature_cols {
            let field = record.get(c).unwrap_or("").trim();
            if field.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].to_string(),
                    message: "missing value".into(),
                });
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].to_string(),
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].to_string(),
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        let raw = record.get(label_idx).unwrap_or("").trim();
        let label = match raw.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => {
                return Err(Error::Schema(format!(
                    "row {row}: label `{raw}` is not 0 or 1"
                )))
            }
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    let n = labels.len();
    let features = RowMatrix::from_vec(n, feature_cols.len(), values)?;
    let split = Split::random(n, split_ratio, seed)?;
    Dataset::new(features, labels, names, split)
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-feature affine map fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Features whose training variance was zero. They pass through
    /// unchanged (offset 0, scale 1).
    pub zero_variance: Vec<bool>,
}

impl Standardizer {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        let train = &dataset.split().train;
        if train.is_empty() {
            return Err(Error::InvalidInput("cannot standardize an empty training split".into()));
        }
        let d = dataset.n_features();
        let mut mean = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        let mut zero_variance = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = train.iter().map(|&i| dataset.row(i)[j]).collect();
            let m = crate::stats::mean(&col);
            let s = crate::stats::population_stdev(&col);
            if s > 0.0 {
                mean.push(m);
                scale.push(s);
                zero_variance.push(false);
            } else {
                mean.push(0.0);
                scale.push(1.0);
                zero_variance.push(true);
            }
        }
        Ok(Self {
            mean,
            scale,
            zero_variance,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn transform(&self, dataset: &Dataset) -> Result<Dataset> {
        Error::check_dim(self.mean.len(), dataset.n_features())?;
        let mut features = dataset.features().clone();
        for i in 0..features.nrows() {
            let z = self.apply(features.row(i));
            features.row_mut(i).copy_from_slice(&z);
        }
        Dataset::new(
            features,
            dataset.labels().to_vec(),
            dataset.feature_names().to_vec(),
            dataset.split().clone(),
        )
    }
}

/// Zero mean, unit (population) variance per feature over the training split.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, Standardizer)> {
    let scaler = Standardizer::fit(dataset)?;
    Ok((scaler.transform(dataset)?, scaler))
}

// ---------------------------------------------------------------------------
// Bundles

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub label_column: String,
    pub n_rows: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Standardizer>,
    /// Whatever produced the data (generator spec, source path), for replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "data.csv";

/// Writes `manifest.json` and `data.csv` into `dir`.
pub fn write_bundle(
    dataset: &Dataset,
    scale: Option<&Standardizer>,
    provenance: Option<serde_json::Value>,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = BundleManifest {
        schema_version: BUNDLE_SCHEMA_VERSION,
        feature_names: dataset.feature_names().to_vec(),
        label_column: LABEL_HEADER.into(),
        n_rows: dataset.n_rows(),
        train: dataset.split().train.clone(),
        test: dataset.split().test.clone(),
        scale: scale.cloned(),
        provenance,
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    let mut w = csv::Writer::from_path(dir.join(PAYLOAD_FILE))?;
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    header.push(LABEL_HEADER);
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..dataset.n_rows() {
        record.clear();
        record.extend(dataset.row(i).iter().map(|v| v.to_string()));
        record.push(dataset.labels()[i].to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<(Dataset, BundleManifest)> {
    let dir = dir.as_ref();
    let manifest: BundleManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.schema_version != BUNDLE_SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported bundle schema version {}",
            manifest.schema_version
        )));
    }
    let file = fs::File::open(dir.join(PAYLOAD_FILE))?;
    let loaded = read_csv(file, &manifest.label_column, 1.0, 0)?;
    if loaded.n_rows() != manifest.n_rows {
        return Err(Error::Schema(format!(
            "manifest declares {} rows, payload has {}",
            manifest.n_rows,
            loaded.n_rows()
        )));
    }
    let dataset = Dataset::new(
        loaded.features().clone(),
        loaded.labels().to_vec(),
        manifest.feature_names.clone(),
        Split {
            train: manifest.train.clone(),
            test: manifest.test.clone(),
        },
    )?;
    Ok((dataset, manifest))
}
