use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slsac::constraint::{tail_body_split, violation_signal, EpisodeCostWindow, Multiplier, SignalMode};
use slsac::cost::{empirical_cvar, quantile_huber};
use slsac::ensemble::{aggregate, Aggregation};
use slsac::verify::{analytic_cvar, PiecewiseQuantileFn};

fn costs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..100.0, 1..80)
}

proptest! {
    #[test]
    fn empirical_cvar_is_monotone_in_epsilon(w in costs(), e1 in 0.01f64..1.0, e2 in 0.01f64..1.0) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let a = empirical_cvar(&w, lo).unwrap();
        let b = empirical_cvar(&w, hi).unwrap();
        prop_assert!(a >= b - 1e-12);
        prop_assert!(b >= empirical_cvar(&w, 1.0).unwrap() - 1e-12);
    }

    #[test]
    fn analytic_cvar_is_nonincreasing(seed in 0u64..10_000, pieces in 1usize..8, e1 in 0.01f64..1.0, e2 in 0.01f64..1.0) {
        let q = PiecewiseQuantileFn::random(pieces, &mut ChaCha8Rng::seed_from_u64(seed));
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(analytic_cvar(&q, lo).unwrap() >= analytic_cvar(&q, hi).unwrap() - 1e-12);
        prop_assert!((analytic_cvar(&q, 1.0).unwrap() - q.integral(0.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn quantile_huber_is_nonnegative(delta in -50.0f64..50.0, tau in 0.0f64..=1.0, kappa in 1e-3f64..5.0) {
        prop_assert!(quantile_huber(delta, tau, kappa) >= 0.0);
    }

    #[test]
    fn min_min_never_exceeds_mean_min(v in prop::collection::vec(-100.0f64..100.0, 1..6usize).prop_flat_map(|p| {
        prop::collection::vec(-100.0f64..100.0, 2 * p.len())
    })) {
        let mm = aggregate(&v, Aggregation::MinMin);
        let mean_min = aggregate(&v, Aggregation::MeanMin);
        prop_assert!(mm <= mean_min + 1e-12);
        let mut swapped = v.clone();
        for pair in swapped.chunks_mut(2) {
            pair.swap(0, 1);
        }
        swapped.reverse();
        prop_assert_eq!(aggregate(&swapped, Aggregation::MeanMin), mean_min);
    }

    #[test]
    fn lambda_stays_nonnegative(windows in prop::collection::vec(costs(), 1..30), beta in 0.0f64..60.0, eta in 1e-4f64..1.0) {
        let mut m = Multiplier::new(beta, eta, 0, 0).unwrap();
        for (t, w) in windows.iter().enumerate() {
            let win = EpisodeCostWindow::from_values(w.len(), w).unwrap();
            m.update_lambda(&win, 0.5, t as u64 + 1).unwrap();
            prop_assert!(m.lambda >= 0.0);
        }
    }

    #[test]
    fn signal_gap_decomposes(w in costs(), eps in 0.01f64..=1.0, beta in 0.0f64..50.0) {
        let win = EpisodeCostWindow::from_values(w.len(), &w).unwrap();
        let gap = violation_signal(&win, eps, beta, SignalMode::Cvar).unwrap()
            - violation_signal(&win, eps, beta, SignalMode::Expected).unwrap();
        let (tail, body, k) = tail_body_split(&w, eps).unwrap();
        let n = w.len() as f64;
        prop_assert!((gap - (1.0 - k as f64 / n) * (tail - body)).abs() < 1e-9);
        prop_assert!(gap >= -1e-12);
    }

    #[test]
    fn increment_shifts_by_eta_times_cost(w in costs(), c in 0.0f64..20.0, eta in 1e-4f64..1.0) {
        let m = Multiplier::new(25.0, eta, 0, 0).unwrap();
        let base = EpisodeCostWindow::from_values(w.len(), &w).unwrap();
        let shifted: Vec<f64> = w.iter().map(|x| x + c).collect();
        let up = EpisodeCostWindow::from_values(w.len(), &shifted).unwrap();
        let d = m.increment(&up, 0.5).unwrap() - m.increment(&base, 0.5).unwrap();
        prop_assert!((d - eta * c).abs() < 1e-9);
    }
}
