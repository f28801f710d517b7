//! Decision-boundary search with Growing Spheres.
//!
//! Points are drawn uniformly from spherical layers around the query. The
//! first ball is shrunk until it holds no label flip, then layers of the
//! final width are grown outward until one does.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainers::{check_instance, lime_explain, PerturbationConfig};
use crate::models::Blackbox;
use crate::rng::{derive_seed, rng_from_seed, substream};

const CHUNK: usize = 4096;
/// Shrinking stops here; the query is then numerically on the boundary.
const MAX_HALVINGS: usize = 64;
/// Width of the extra sampling slices beyond the nearest boundary point,
/// as a fraction of its distance.
const SHELL_STEP: f64 = 0.05;
/// Candidates kept for clustering; denser lists are thinned evenly.
const MAX_CANDIDATES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowingSpheresConfig {
    pub eta: f64,
    /// Points per layer.
    pub n: usize,
    pub max_layers: usize,
    pub dedupe_radius_fraction: f64,
}

impl Default for GrowingSpheresConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            n: 100_000,
            max_layers: 200,
            dedupe_radius_fraction: 0.5,
        }
    }
}

impl GrowingSpheresConfig {
    pub fn with_samples(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidConfig("eta must be positive".into()));
        }
        if self.n == 0 || self.max_layers == 0 {
            return Err(Error::InvalidConfig(
                "n and max_layers must be positive".into(),
            ));
        }
        if !(self.dedupe_radius_fraction > 0.0 && self.dedupe_radius_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "dedupe_radius_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbpResult {
    pub point: Vec<f64>,
    pub distance: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbpSet {
    pub query: Vec<f64>,
    pub dbps: Vec<DbpResult>,
}

impl DbpSet {
    pub fn len(&self) -> usize {
        self.dbps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dbps.is_empty()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.dbps.iter().map(|d| d.distance).collect()
    }
}

/// How the search ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereTrace {
    pub final_eta: f64,
    pub halvings: usize,
    /// Layers grown after shrinking; 0 if the last ball already flipped.
    pub layers: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

#[derive(Debug, Clone)]
pub struct SphereSearch {
    pub nearest: DbpResult,
    pub trace: SphereTrace,
    /// Every flipped point of the final layer, nearest first.
    flipped: Vec<Candidate>,
}

#[derive(Debug, Clone)]
struct Candidate {
    distance: f64,
    point: Vec<f64>,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.distance.total_cmp(&b.distance).then_with(|| {
        a.point
            .iter()
            .zip(&b.point)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Uniform draws from `{z : a0 <= |z - x| <= a1}` whose label differs from
/// `label`, sorted nearest first. Chunks use derived seeds, so the result
/// does not depend on the thread count.
fn flipped_in_layer<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    label: u8,
    a0: f64,
    a1: f64,
    n: usize,
    seed: u64,
) -> Vec<Candidate> {
    let d = x.len();
    let t = (a0 / a1).powi(d as i32);
    let chunks = n.div_ceil(CHUNK);
    let mut out: Vec<Candidate> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, c as u64));
            let len = CHUNK.min(n - c * CHUNK);
            let mut z = vec![0.0; d];
            let mut found = Vec::new();
            for _ in 0..len {
                let mut norm2 = 0.0f64;
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    norm2 += *v * *v;
                }
                let u: f64 = rng.random();
                let r = a1 * (t + u * (1.0 - t)).powf(1.0 / d as f64);
                let scale = r / norm2.sqrt().max(f64::MIN_POSITIVE);
                for (v, xv) in z.iter_mut().zip(x) {
                    *v = xv + *v * scale;
                }
                if model.decision_label(&z) != label {
                    let distance = z.iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                    found.push(Candidate {
                        distance,
                        point: z.clone(),
                    });
                }
            }
            found
        })
        .flatten()
        .collect();
    out.sort_by(candidate_order);
    out
}

/// Runs the shrink-then-grow search and keeps the final layer's flips.
pub fn growing_spheres<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    config: &GrowingSpheresConfig,
    seed: u64,
) -> Result<SphereSearch> {
    config.validate()?;
    check_instance(model.input_dim(), x)?;
    let label = model.decision_label(x);
    let mut step = 0u64;
    let mut next_seed = || {
        step += 1;
        derive_seed(seed, step)
    };

    let mut eta = config.eta;
    let mut halvings = 0;
    let mut flips = flipped_in_layer(model, x, label, 0.0, eta, config.n, next_seed());
    let mut clear = flips.is_empty();
    while !clear && halvings < MAX_HALVINGS {
        eta /= 2.0;
        halvings += 1;
        let next = flipped_in_layer(model, x, label, 0.0, eta, config.n, next_seed());
        if next.is_empty() {
            clear = true;
        } else {
            flips = next;
        }
    }

    let finish = |flips: Vec<Candidate>, layers: usize, a0: f64, a1: f64| {
        let best = &flips[0];
        SphereSearch {
            nearest: DbpResult {
                point: best.point.clone(),
                distance: best.distance,
                label: 1 - label,
            },
            trace: SphereTrace {
                final_eta: eta,
                halvings,
                layers,
                inner_radius: a0,
                outer_radius: a1,
            },
            flipped: flips,
        }
    };

    if !clear {
        return Ok(finish(flips, 0, 0.0, eta));
    }

    let (mut a0, mut a1) = (eta, 2.0 * eta);
    for layer in 1..=config.max_layers {
        let flips = flipped_in_layer(model, x, label, a0, a1, config.n, next_seed());
        if !flips.is_empty() {
            return Ok(finish(flips, layer, a0, a1));
        }
        a0 = a1;
        a1 += eta;
    }
    Err(Error::BoundaryNotFound {
        layers: config.max_layers,
    })
}

pub fn nearest_dbp<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    config: &GrowingSpheresConfig,
    seed: u64,
) -> Result<DbpResult> {
    Ok(growing_spheres(model, x, config, seed)?.nearest)
}

/// Distinct boundary regions within `(1 + m/100) * l1` of `x`, nearest
/// first, at most `k_max`. Flipped points closer than
/// `dedupe_radius_fraction * l1` (transitively) belong to one region, which
/// is represented by its nearest point; representatives are therefore at
/// least that far apart.
///
/// Candidates are the final layer's flips plus fixed-width slices sampled
/// outward from `l1`; the slices do not depend on `m`, so a wider shell
/// always sees a superset of a narrower one.
pub fn k_nearest_dbps<M: Blackbox + ?Sized>(
    model: &M,
    x: &[f64],
    config: &GrowingSpheresConfig,
    k_max: usize,
    m: f64,
    seed: u64,
) -> Result<DbpSet> {
    if k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be positive".into()));
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidConfig("shell threshold m must be positive".into()));
    }
    let search = growing_spheres(model, x, config, seed)?;
    let label = model.decision_label(x);
    let l1 = search.nearest.distance;
    let reach = (1.0 + m / 100.0) * l1;

    let mut candidates: Vec<Candidate> = search
        .flipped
        .into_iter()
        .filter(|c| c.distance < reach)
        .collect();
    if k_max > 1 && l1 > 0.0 {
        let shell_seed = substream(seed, "shell");
        let slices = (m / 100.0 / SHELL_STEP).ceil() as usize;
        for s in 0..slices {
            let lo = l1 * (1.0 + SHELL_STEP * s as f64);
            let hi = l1 * (1.0 + SHELL_STEP * (s + 1) as f64);
            let extra = flipped_in_layer(model, x, label, lo, hi, config.n, derive_seed(shell_seed, s as u64));
            candidates.extend(extra.into_iter().filter(|c| c.distance < reach));
        }
        candidates.sort_by(candidate_order);
    }

    let link = config.dedupe_radius_fraction * l1;
    let mut reps = cluster_representatives(thin(candidates, MAX_CANDIDATES), link);
    reps.truncate(k_max);
    if reps.is_empty() {
        // l1 is always a candidate of its own layer; only a zero-width
        // shell can get here.
        reps.push(Candidate {
            distance: l1,
            point: search.nearest.point.clone(),
        });
    }
    Ok(DbpSet {
        query: x.to_vec(),
        dbps: reps
            .into_iter()
            .map(|c| DbpResult {
                point: c.point,
                distance: c.distance,
                label: 1 - label,
            })
            .collect(),
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Every `k`-th candidate of a nearest-first list, keeping the first.
fn thin(candidates: Vec<Candidate>, cap: usize) -> Vec<Candidate> {
    if candidates.len() <= cap {
        return candidates;
    }
    let stride = candidates.len().div_ceil(cap);
    candidates.into_iter().step_by(stride).collect()
}

/// Nearest point of each connected group of candidates, nearest first.
///
/// Leaders are picked greedily nearest-first at spacing `link / 2`, so
/// every candidate is within `link / 2` of one. Leaders closer than `link`
/// are joined. Points of different groups are therefore more than `link`
/// apart, and the first leader of a group is its nearest point.
fn cluster_representatives(candidates: Vec<Candidate>, link: f64) -> Vec<Candidate> {
    let mut leaders: Vec<Candidate> = Vec::new();
    for c in candidates {
        if leaders.iter().all(|l| dist(&l.point, &c.point) >= link / 2.0) {
            leaders.push(c);
        }
    }
    let n = leaders.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for a in 0..n {
        for b in a + 1..n {
            if dist(&leaders[a].point, &leaders[b].point) < link {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                // the root is always the group's earliest (nearest) leader
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut reps = Vec::new();
    for (i, l) in leaders.into_iter().enumerate() {
        if find(&mut parent, i) == i {
            reps.push(l);
        }
    }
    reps
}

/// Normalized `|w|` of a LIME fit centered at the boundary point.
pub fn tangent_attribution<M: Blackbox + ?Sized>(
    model: &M,
    dbp: &DbpResult,
    config: &PerturbationConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = dbp.point.len();
    if d == 1 {
        check_instance(model.input_dim(), &dbp.point)?;
        return Ok(vec![1.0]);
    }
    let fit = lime_explain(model, &dbp.point, config, seed)?;
    let mut w: Vec<f64> = fit.weights.iter().map(|v| v.abs()).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        w.iter_mut().for_each(|v| *v = 1.0 / d as f64);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sigmoid, FnModel};

    fn halfplane(w: Vec<f64>, b: f64) -> FnModel<impl Fn(&[f64]) -> f64 + Sync> {
        let d = w.len();
        FnModel::new(d, move |z: &[f64]| {
            sigmoid(w.iter().zip(z).map(|(p, q)| p * q).sum::<f64>() + b)
        })
    }

    #[test]
    fn linear_boundary_distance_is_close_to_projection() {
        let model = halfplane(vec![0.6, 0.8, 0.0], 0.0);
        // signed distance 0.8 along the unit normal
        let x = [0.48, 0.64, 0.3];
        let cfg = GrowingSpheresConfig::default();
        let dbp = nearest_dbp(&model, &x, &cfg, 1).unwrap();
        assert!((dbp.distance / 0.8 - 1.0).abs() < 0.02, "{}", dbp.distance);
        assert_ne!(model.decision_label(&dbp.point), model.decision_label(&x));
    }

    #[test]
    fn constant_model_has_no_boundary() {
        let model = FnModel::new(2, |_: &[f64]| 1.0);
        let cfg = GrowingSpheresConfig {
            max_layers: 5,
            ..GrowingSpheresConfig::default().with_samples(500)
        };
        let err = nearest_dbp(&model, &[0.0, 0.0], &cfg, 0).unwrap_err();
        assert!(matches!(err, Error::BoundaryNotFound { layers: 5 }));
    }

    #[test]
    fn huge_eta_is_halved_below_the_true_distance() {
        let model = halfplane(vec![1.0, 0.0], -0.3);
        let cfg = GrowingSpheresConfig {
            eta: 64.0,
            ..GrowingSpheresConfig::default().with_samples(20_000)
        };
        let s = growing_spheres(&model, &[0.0, 5.0], &cfg, 3).unwrap();
        assert!(s.trace.halvings >= 8);
        assert!(s.trace.final_eta < 0.3);
        assert!(s.trace.layers >= 1);
        assert!(s.nearest.distance >= 0.3);
    }

    #[test]
    fn flat_boundary_collapses_to_one_representative() {
        let model = halfplane(vec![1.0, 1.0, 0.0], -1.0);
        let cfg = GrowingSpheresConfig::default().with_samples(20_000);
        let set = k_nearest_dbps(&model, &[0.0, 0.0, 0.0], &cfg, 10, 5.0, 4).unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn two_equidistant_sheets_give_two_representatives() {
        // class 1 iff |x0| > 1
        let model = FnModel::new(2, |z: &[f64]| if z[0].abs() > 1.0 { 0.9 } else { 0.1 });
        let cfg = GrowingSpheresConfig::default().with_samples(20_000);
        let set = k_nearest_dbps(&model, &[0.0, 0.0], &cfg, 10, 5.0, 6).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.dbps[0].point[0] * set.dbps[1].point[0] < 0.0);
    }

    #[test]
    fn k_max_one_is_the_nearest_point() {
        let model = halfplane(vec![1.0, -2.0], 0.5);
        let cfg = GrowingSpheresConfig::default().with_samples(10_000);
        let set = k_nearest_dbps(&model, &[1.0, 1.0], &cfg, 1, 20.0, 9).unwrap();
        let nearest = nearest_dbp(&model, &[1.0, 1.0], &cfg, 9).unwrap();
        assert_eq!(set.dbps, vec![nearest]);
    }

    #[test]
    fn result_is_independent_of_thread_count() {
        let model = FnModel::new(3, |z: &[f64]| sigmoid(z[0] * z[1] - z[2] + 0.2));
        let cfg = GrowingSpheresConfig::default().with_samples(30_000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| k_nearest_dbps(&model, &[0.5, 0.5, 0.5], &cfg, 5, 20.0, 2).unwrap());
        let b = four.install(|| k_nearest_dbps(&model, &[0.5, 0.5, 0.5], &cfg, 5, 20.0, 2).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn tangent_of_linear_boundary_follows_normal() {
        let model = halfplane(vec![3.0, 1.0], 0.0);
        let dbp = DbpResult {
            point: vec![0.0, 0.0],
            distance: 1.0,
            label: 1,
        };
        let w = tangent_attribution(&model, &dbp, &PerturbationConfig::for_dim(2), 1).unwrap();
        assert!((w[0] - 0.75).abs() < 0.05 && (w[1] - 0.25).abs() < 0.05, "{w:?}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tangent_of_radial_boundary_on_axis() {
        let model = FnModel::new(3, |z: &[f64]| sigmoid(4.0 * (z.iter().map(|v| v * v).sum::<f64>() - 1.0)));
        let dbp = DbpResult {
            point: vec![1.0, 0.0, 0.0],
            distance: 1.0,
            label: 1,
        };
        let w = tangent_attribution(&model, &dbp, &PerturbationConfig::for_dim(3), 2).unwrap();
        assert!(w[0] >= 0.8, "{w:?}");
    }

    #[test]
    fn single_feature_tangent_is_one() {
        let model = FnModel::new(1, |z: &[f64]| sigmoid(z[0]));
        let dbp = DbpResult {
            point: vec![0.0],
            distance: 1.0,
            label: 1,
        };
        assert_eq!(tangent_attribution(&model, &dbp, &PerturbationConfig::for_dim(1), 0).unwrap(), vec![1.0]);
    }
}
