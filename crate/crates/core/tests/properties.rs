//! Property tests for closed-form pieces of the estimator.

use labormarkdown::bootstrap::{BootstrapReport, Replication};
use labormarkdown::dgp::Baseline;
use labormarkdown::kalman::{kalman_loglik, kalman_smooth, Segment, StateSpaceSpec};
use labormarkdown::laborsupply::{inverse_elasticity, theta_from_coef};
use labormarkdown::markets::markdown;
use labormarkdown::model::{log_power_mean, shares_from_tau};
use proptest::prelude::*;

fn single_run(rho: f64, y: Vec<f64>) -> StateSpaceSpec {
    StateSpaceSpec {
        persistence: rho,
        regulation: 0.0,
        imports: 0.0,
        year_effects: Default::default(),
        segments: vec![Segment { indices: (0..=y.len()).collect(), detrended: y }],
        measurement_var: 1.0,
    }
}

proptest! {
    #[test]
    fn outer_shares_sum_to_one(tau in 0.001f64..20.0) {
        let means = Baseline::default().means().unwrap();
        let (k, m, l) = shares_from_tau(tau, &means).unwrap();
        prop_assert!(k > 0.0 && m > 0.0 && l > 0.0);
        prop_assert!((k + m + l - 1.0).abs() < 1e-12);
        prop_assert!((k / m - tau).abs() < 1e-12 * tau.max(1.0));
    }

    #[test]
    fn power_mean_lies_between_extremes(
        w in prop::collection::vec(0.01f64..1.0, 2..6),
        x in prop::collection::vec(-3.0f64..3.0, 6),
        s in prop_oneof![-0.99f64..-0.01, 0.01f64..0.99],
    ) {
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        let x = &x[..w.len()];
        let v = log_power_mean(&w, x, s);
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        let flat = log_power_mean(&w, &vec![x[0]; w.len()], s);
        prop_assert!((flat - x[0]).abs() < 1e-12);
    }

    #[test]
    fn markdown_inverts(nu in 1.0f64..50.0) {
        let md = markdown(nu);
        prop_assert!((0.0..100.0).contains(&md));
        prop_assert!((100.0 / (100.0 - md) - nu).abs() < 1e-9 * nu);
    }

    #[test]
    fn theta_round_trips(theta in 0.05f64..1.0, se in 0.0f64..1.0) {
        let coef = (theta - 1.0) / theta;
        let (back, back_se) = theta_from_coef(coef, se);
        prop_assert!((back - theta).abs() < 1e-12);
        prop_assert!((back_se - se * theta * theta).abs() < 1e-12);
    }

    #[test]
    fn inverse_elasticity_exceeds_one_and_falls_with_wage(
        wage in 1.0f64..500.0,
        share in 0.0f64..0.2,
        cond in 0.0f64..0.9,
        eta in 0.0f64..0.95,
        gamma in 0.001f64..0.05,
    ) {
        let cond = cond.max(share);
        let nu = inverse_elasticity(wage, share, cond, eta, gamma).unwrap();
        let richer = inverse_elasticity(wage * 1.5, share, cond, eta, gamma).unwrap();
        prop_assert!(nu > 1.0);
        prop_assert!(richer < nu);
    }

    #[test]
    fn smoother_reproduces_observations(
        y in prop::collection::vec(-3.0f64..3.0, 1..8),
        rho in 0.0f64..0.99,
        s2 in 0.01f64..4.0,
    ) {
        let spec = single_run(rho, y.clone());
        prop_assert!(kalman_loglik(&spec, s2).is_finite());
        let out = kalman_smooth(&spec, s2, &vec![0.0; y.len() + 1]);
        for (k, yk) in y.iter().enumerate() {
            let fitted = out.innovation[k + 1].unwrap() + out.measurement[k + 1] - rho * out.measurement[k];
            prop_assert!((fitted - yk).abs() < 1e-9);
        }
    }

    #[test]
    fn summary_counts_only_effective_values(
        draws in prop::collection::vec((-5.0f64..5.0, any::<bool>(), any::<bool>()), 0..30),
    ) {
        let reps: Vec<Replication> = draws
            .iter()
            .enumerate()
            .map(|(index, &(v, ok, failed))| Replication {
                index,
                values: vec![(!failed).then_some(v)],
                effective: vec![ok && !failed],
                fallback: false,
                error: failed.then(|| "failed".to_string()),
            })
            .collect();
        let kept: Vec<f64> = draws.iter().filter(|d| d.1 && !d.2).map(|d| d.0).collect();
        let report = BootstrapReport::new(&["x"], draws.len(), reps);
        let s = report.get("x").unwrap();
        prop_assert_eq!(s.effective, kept.len());
        if !kept.is_empty() {
            prop_assert!(s.min <= s.mean + 1e-12 && s.mean <= s.max + 1e-12);
            prop_assert_eq!(s.max, kept.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }
}
