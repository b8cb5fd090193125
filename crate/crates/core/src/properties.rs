//! Randomized invariants over the public surface.

use proptest::prelude::*;

use crate::cli::Settings;
use crate::covariance::{eigen_range, phi_matrix};
use crate::drift::drift_g_slice;
use crate::experiments::{confidence_interval, parse_grid, CiMethod};
use crate::rates::{drift_f_slice, zeta_bar};
use crate::validation::weighted_distance;
use crate::{Code, CountVector, FluctuationVector, QueuePmf, SystemParams};

fn code() -> impl Strategy<Value = Code> {
    (1usize..=5).prop_flat_map(|l| (Just(l), 1..=l)).prop_map(|(l, k)| Code::new(l, k).unwrap())
}

/// Weights on 0..K−1 with level K empty, normalized.
fn interior_probs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..12).prop_map(|mut w| {
        if w.iter().all(|&v| v == 0.0) {
            w[0] = 1.0;
        }
        w.push(0.0);
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    })
}

fn pmf_with_tail() -> impl Strategy<Value = QueuePmf> {
    (prop::collection::vec(0.0f64..1.0, 3..12), 0.0f64..0.5).prop_map(|(mut w, tail)| {
        w[0] += 1e-3;
        let s: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|v| v / s * (1.0 - tail)).collect();
        let t = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        QueuePmf::new(probs, t).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn drift_conserves_mass_on_interior_states(r in interior_probs(), c in code(), lambda in 0.0f64..2.0) {
        let f = drift_f_slice(&r, 0.0, lambda, c);
        prop_assert!(f.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn linearized_drift_is_zero_sum(r in interior_probs(), c in code(), seed in any::<u64>()) {
        let dim = r.len();
        let mut x: Vec<f64> = (0..dim - 1).map(|i| ((seed >> (i % 60)) & 7) as f64 - 3.5).collect();
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= m);
        x.push(0.0);
        let g = drift_g_slice(&x, &r, 0.0, 0.9, c);
        prop_assert!(g.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn phi_is_symmetric_psd_with_zero_rows(r in interior_probs(), c in code()) {
        let p = SystemParams::new(10, 0.9, c, 1, 1.0).unwrap();
        let phi = phi_matrix(&QueuePmf::new(r, 0.0).unwrap(), &p);
        for i in 0..phi.dim() {
            prop_assert!(phi.row(i).iter().sum::<f64>().abs() <= 1e-10);
            for j in 0..phi.dim() {
                prop_assert_eq!(phi.get(i, j), phi.get(j, i));
            }
        }
        let (lo, hi) = eigen_range(&phi);
        prop_assert!(lo >= -1e-10 * hi.max(1.0));
    }

    #[test]
    fn zeta_bar_respects_its_bound(r in pmf_with_tail(), c in code()) {
        let bound = c.threshold as f64 * 3f64.powi(c.width as i32) / (1..=c.width).map(|v| v as f64).product::<f64>();
        prop_assert_eq!(zeta_bar(-1, &r, c), 0.0);
        for j in 0..=r.max_level() {
            let z = zeta_bar(j as isize, &r, c);
            prop_assert!(z >= 0.0 && z <= bound * r.prob(j as isize) + 1e-15);
        }
    }

    #[test]
    fn rounding_a_pmf_keeps_n_servers(r in pmf_with_tail(), n in 1usize..5000) {
        let counts = CountVector::from_pmf(&r.retruncate(r.max_level() + 1), n).unwrap();
        prop_assert_eq!(counts.n(), n as u64);
    }

    #[test]
    fn projection_is_zero_sum(v in prop::collection::vec(-10.0f64..10.0, 1..30)) {
        let (x, _) = FluctuationVector::project(v);
        prop_assert!(x.coords().iter().sum::<f64>().abs() <= 1e-10);
    }

    #[test]
    fn weighted_distance_is_a_metric(a in pmf_with_tail(), b in pmf_with_tail(), c in pmf_with_tail()) {
        let k = a.max_level().max(b.max_level()).max(c.max_level());
        let (a, b, c) = (a.retruncate(k), b.retruncate(k), c.retruncate(k));
        let ab = weighted_distance(&a, &b);
        prop_assert!((ab - weighted_distance(&b, &a)).abs() < 1e-15);
        prop_assert!(ab <= weighted_distance(&a, &c) + weighted_distance(&c, &b) + 1e-12);
        prop_assert!(ab <= 4.0);
    }

    #[test]
    fn intervals_are_ordered_and_nested(samples in prop::collection::vec(-5.0f64..5.0, 2..200)) {
        for method in [CiMethod::Percentile, CiMethod::Normal] {
            let narrow = confidence_interval(&samples, 0.8, method).unwrap();
            let wide = confidence_interval(&samples, 0.95, method).unwrap();
            prop_assert!(narrow.low <= narrow.high);
            prop_assert!(wide.low <= narrow.low + 1e-12 && narrow.high <= wide.high + 1e-12);
        }
    }

    #[test]
    fn grid_specs_round_trip(cells in prop::collection::vec(code(), 1..8)) {
        let spec: Vec<String> = cells.iter().map(|c| format!("{}:{}", c.width, c.threshold)).collect();
        prop_assert_eq!(parse_grid(&spec.join(",")).unwrap(), cells);
    }

    #[test]
    fn flags_override_config(file_n in 1usize..10_000, flag_n in proptest::option::of(1usize..10_000)) {
        let cfg = Settings::parse_config(&format!("n = {file_n}\n")).unwrap();
        let mut s = Settings::new(cfg, vec![("n", flag_n.map(|v| v.to_string()))], &["n"]).unwrap();
        prop_assert_eq!(s.get("n", 0usize).unwrap(), flag_n.unwrap_or(file_n));
    }
}
