//! Randomized invariant checks, shared by the property tests and the
//! acceptance suite.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use xaiunc_core::explainers::{mvg_covariance, COV_FLOOR};
use xaiunc_core::geometry::nearest_dbp;
use xaiunc_core::models::DenseLayer;
use xaiunc_core::uncertainty::{
    ci_width, fleiss_kappa_uncertainty, kendall_w_uncertainty, rank, stdev_uncertainty,
    topk_feature_agreement_uncertainty, topk_rank_agreement_uncertainty,
};
use xaiunc_core::{AttributionEnsemble, Blackbox, BlackboxModel, GrowingSpheresConfig};

/// M runs of D weights with distinct magnitudes inside every run.
fn ensembles(min_m: usize, max_m: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (min_m..=max_m, 2..=max_d).prop_flat_map(|(m, d)| {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), m).prop_filter(
            "magnitudes tie",
            |runs| {
                runs.iter().all(|r| {
                    let mut a: Vec<f64> = r.iter().map(|w| w.abs()).collect();
                    a.sort_by(f64::total_cmp);
                    a.windows(2).all(|p| p[1] - p[0] > 1e-9)
                })
            },
        )
    })
}

struct RankScalars {
    kendall: f64,
    fleiss: f64,
    fa: f64,
    ra: f64,
}

fn rank_scalars(runs: &[Vec<f64>], k: usize) -> RankScalars {
    let ens = AttributionEnsemble::from_weights(runs.to_vec()).unwrap();
    let r = rank(&ens);
    RankScalars {
        kendall: kendall_w_uncertainty(&r).unwrap(),
        fleiss: fleiss_kappa_uncertainty(&r).unwrap().uncertainty,
        fa: topk_feature_agreement_uncertainty(&ens, k).unwrap(),
        ra: topk_rank_agreement_uncertainty(&ens, k).unwrap(),
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

pub fn scale_invariance(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(ensembles(2, 6, 6), 1e-3f64..1e3), |(runs, c)| {
            let k = 1 + runs[0].len() / 2;
            let scaled: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().map(|w| w * c).collect()).collect();
            let a = rank_scalars(&runs, k);
            let b = rank_scalars(&scaled, k);
            prop_assert_eq!(a.kendall.to_bits(), b.kendall.to_bits());
            prop_assert_eq!(a.fleiss.to_bits(), b.fleiss.to_bits());
            prop_assert_eq!(a.fa.to_bits(), b.fa.to_bits());
            prop_assert_eq!(a.ra.to_bits(), b.ra.to_bits());
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn permutation_equivariance(cases: u32) -> Result<(), String> {
    let strategy = ensembles(10, 12, 6).prop_flat_map(|runs| {
        let d = runs[0].len();
        (Just(runs), Just((0..d).collect::<Vec<usize>>()).prop_shuffle())
    });
    runner(cases)
        .run(&strategy, |(runs, perm)| {
            let permuted: Vec<Vec<f64>> = runs.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
            let k = 1 + perm.len() / 2;
            let a = rank_scalars(&runs, k);
            let b = rank_scalars(&permuted, k);
            prop_assert!((a.kendall - b.kendall).abs() < 1e-12);
            prop_assert!((a.fleiss - b.fleiss).abs() < 1e-12);
            prop_assert_eq!(a.fa, b.fa);
            prop_assert_eq!(a.ra, b.ra);
            let ea = AttributionEnsemble::from_weights(runs.clone()).unwrap();
            let eb = AttributionEnsemble::from_weights(permuted).unwrap();
            let (sa, sb) = (stdev_uncertainty(&ea).unwrap().mean, stdev_uncertainty(&eb).unwrap().mean);
            prop_assert!((sa - sb).abs() < 1e-12);
            let (ca, cb) = (ci_width(&ea, 0.9).unwrap().mean, ci_width(&eb, 0.9).unwrap().mean);
            prop_assert!((ca - cb).abs() < 1e-12);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn metric_bounds(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&ensembles(2, 8, 6), |runs| {
            let d = runs[0].len();
            let ens = AttributionEnsemble::from_weights(runs).unwrap();
            let kendall = kendall_w_uncertainty(&rank(&ens)).unwrap();
            prop_assert!((0.0..=1.0).contains(&kendall));
            for k in 1..=d {
                let fa = topk_feature_agreement_uncertainty(&ens, k).unwrap();
                let ra = topk_rank_agreement_uncertainty(&ens, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&fa) && (0.0..=1.0).contains(&ra));
            }
            prop_assert!(stdev_uncertainty(&ens).unwrap().per_feature.iter().all(|s| *s >= 0.0));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn probability_bounds(cases: u32) -> Result<(), String> {
    let strategy = (
        prop::collection::vec(-50.0f64..50.0, 3),
        prop::collection::vec(-5.0f64..5.0, 12),
        prop::collection::vec(-5.0f64..5.0, 4),
        prop::collection::vec(-1e3f64..1e3, 3),
    );
    runner(cases)
        .run(&strategy, |(w, hidden, out, x)| {
            let mlp = BlackboxModel::mlp(vec![
                DenseLayer { inputs: 3, outputs: 4, weights: hidden, bias: vec![0.1; 4] },
                DenseLayer { inputs: 4, outputs: 1, weights: out, bias: vec![0.0] },
            ])
            .unwrap();
            for model in [
                BlackboxModel::logistic(w.clone(), 0.3),
                BlackboxModel::linear_margin(w.clone(), -0.3),
                mlp,
            ] {
                let p = model.predict_proba(&x);
                prop_assert!((0.0..=1.0).contains(&p), "{:?} gave {}", model.kind(), p);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn dbp_label_flip(cases: u32) -> Result<(), String> {
    let strategy = (
        prop::collection::vec(-3.0f64..3.0, 2..5),
        -2.0f64..2.0,
        any::<u64>(),
    )
        .prop_filter("degenerate normal", |(w, _, _)| w.iter().map(|v| v * v).sum::<f64>() > 0.01);
    let gs = GrowingSpheresConfig::default().with_samples(500);
    runner(cases)
        .run(&strategy, |(w, b, seed)| {
            let model = BlackboxModel::logistic(w.clone(), b);
            let x = vec![0.0; w.len()];
            let dbp = nearest_dbp(&model, &x, &gs, seed).unwrap();
            prop_assert_ne!(dbp.label, model.decision_label(&x));
            prop_assert_eq!(model.decision_label(&dbp.point), dbp.label);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn mvg_covariance_positivity(cases: u32) -> Result<(), String> {
    let strategy = (
        prop::collection::vec(-1e6f64..1e6, 1..10),
        1e-9f64..1e3,
        1e-6f64..1e3,
    );
    runner(cases)
        .run(&strategy, |(w, l, k)| {
            let cov = mvg_covariance(&w, l, k).unwrap();
            prop_assert!(cov.iter().all(|v| v.is_finite() && *v >= COV_FLOOR));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub type Check = fn(u32) -> Result<(), String>;

pub const ALL: [(&str, Check); 6] = [
    ("scale invariance of rank metrics", scale_invariance),
    ("permutation equivariance", permutation_equivariance),
    ("metric bounds", metric_bounds),
    ("probability bounds", probability_bounds),
    ("DBP label flip", dbp_label_flip),
    ("MVG covariance positivity", mvg_covariance_positivity),
];
