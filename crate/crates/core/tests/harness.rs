mod common;

use std::f64::consts::PI;

use corona_lab::harness::{
    canonical_pair, frozen_bounds, full_report, log_slope, maxop_constant, poisson_operator_norm, HarnessConfig,
    VerificationReport,
};
use proptest::prelude::*;

fn quick() -> HarnessConfig {
    HarnessConfig { ensemble_samples: 20, circle_samples: 8, ..HarnessConfig::default() }
}

#[test]
fn report_on_a_canonical_pair() {
    let (mu, nu) = canonical_pair(3).unwrap();
    let r = full_report(&mu, &nu, &quick()).unwrap();
    assert!(r.flags.is_empty(), "{:?}", r.flags);
    assert!(r.constants.is_some() && r.corona.is_some() && r.paraproducts.is_some());
    let names: Vec<&str> = r.checks.iter().map(|c| c.name.as_str()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    for want in ["corona_packing", "longrange", "maxop_pivotal", "necessity", "poisson_operator", "projection", "stopping_term"] {
        assert!(names.contains(&want), "missing {want}");
    }
    assert_eq!(r.all_pass, r.checks.iter().all(|c| c.pass));
    for c in &r.checks {
        assert_eq!(c.pass, c.ratio_max <= c.frozen_bound, "{}", c.name);
    }
    let again = full_report(&mu, &nu, &quick()).unwrap();
    assert_eq!(r, again);
    let text = serde_json::to_string(&r).unwrap();
    let back: VerificationReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}

#[test]
fn shared_atoms_are_flagged_not_fatal() {
    let mu = common::measure(&[(0.2, 1.0), (0.5, 1.0)]);
    let nu = common::measure(&[(0.5, 2.0), (0.9, 1.0)]);
    let r = full_report(&mu, &nu, &quick()).unwrap();
    for what in ["poisson_operator", "maxop_pivotal", "necessity"] {
        assert!(r.flags.iter().any(|f| f.starts_with(what)), "{what} not flagged: {:?}", r.flags);
    }
    assert!(r.constants.unwrap().coincident_atoms);
}

#[test]
fn slope_and_constants() {
    let geo: Vec<f64> = (0..6).map(|j| 3.0 * 0.5f64.powi(j)).collect();
    assert!((log_slope(&geo).unwrap() + 2f64.ln()).abs() < 1e-12);
    assert_eq!(log_slope(&[1.0, 0.0, 0.0]), None);
    assert_eq!(log_slope(&[]), None);
    let tail: f64 = (1..400).map(|k| 2f64.powi(k + 1) / (1.0 + 4f64.powi(k - 1))).sum();
    assert!((maxop_constant() - (2.0 + tail) / PI).abs() < 1e-12);
    let fb = frozen_bounds();
    assert!(fb.corona_packing > 0.0 && fb.corona_packing <= 0.25 + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn poisson_operator_norm_matches_dense_oracle(seed in any::<u64>(), n in 1usize..15, m in 1usize..15, e in -8i32..3) {
        let mut g = common::rng(seed);
        let (mu, nu) = common::random_pair(&mut g, n, m, 0.0, 1.0);
        let y = 2f64.powi(e);
        // Gram matrix of the weighted kernel
        let k = |s: &(f64, f64), t: &(f64, f64)| y / (PI * (y * y + (s.0 - t.0).powi(2))) * (s.1 * t.1).sqrt();
        let (pm, pn) = (common::pairs_of(&mu), common::pairs_of(&nu));
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = pn.iter().map(|s| k(s, &pm[i]) * k(s, &pm[j])).sum();
            }
        }
        let oracle = common::dense_top_eigenvalue(&gram, n).max(0.0).sqrt();
        prop_assert!(common::rel(poisson_operator_norm(&mu, &nu, y), oracle) <= 1e-9);
    }
}
