use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;

use paneljump::critical::{analytic_critical_value, Sidedness};
use paneljump::dgp::{gen_dgp, DgpConfig, GammaScheme};
use paneljump::inference::{fit_panel_known, stat_homogeneity, Center, TestConfig};
use paneljump::kernel::{local_weights, Kernel, Side};
use paneljump::{estimate_jump, test_existence, test_homogeneity, BandwidthPolicy, PanelData, Unit};

const KERNELS: [Kernel; 3] = [Kernel::Uniform, Kernel::Triangular, Kernel::Epanechnikov];

fn kernel() -> impl Strategy<Value = Kernel> {
    (0usize..3).prop_map(|i| KERNELS[i])
}

fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((-1.0f64..1.0, -10.0f64..10.0), 12..120).prop_map(|v| v.into_iter().unzip())
}

/// Intercept of a kernel-weighted least squares line on one side of `c`,
/// from the 2x2 normal equations.
fn wls_intercept(y: &[f64], x: &[f64], c: f64, b: f64, kernel: Kernel, side: Side) -> Option<f64> {
    let mut a = Matrix2::zeros();
    let mut r = Vector2::zeros();
    for (&yi, &xi) in y.iter().zip(x) {
        if !side.contains(xi, c) {
            continue;
        }
        let k = kernel.eval((xi - c) / b);
        let z = Vector2::new(1.0, xi - c);
        a += k * z * z.transpose();
        r += k * yi * z;
    }
    a.lu().solve(&r).map(|s| s[0])
}

fn distinct_on_side(x: &[f64], c: f64, b: f64, side: Side, kernel: Kernel) -> usize {
    let mut v: Vec<f64> = x
        .iter()
        .copied()
        .filter(|&xi| side.contains(xi, c) && kernel.eval((xi - c) / b) > 1e-6)
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    v.len()
}

fn panel_from(sim_seed: u64, n: usize, t: usize, fraction: f64) -> PanelData {
    let scheme = if fraction > 0.0 {
        GammaScheme::SparsePower { fraction, scale: 1.0 }
    } else {
        GammaScheme::Null
    };
    gen_dgp(&DgpConfig::new(1, n, t, sim_seed).with_gammas(scheme))
        .unwrap()
        .panel
}

fn map_y(panel: &PanelData, f: impl Fn(usize, f64, f64) -> f64) -> PanelData {
    panel
        .iter()
        .enumerate()
        .map(|(j, u)| {
            let y = u.y.iter().zip(&u.x).map(|(&y, &x)| f(j, y, x)).collect();
            Unit::new(u.id.clone(), y, u.x.clone()).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weights_reproduce_constants_and_slopes(
        (x, _) in sample(), c in -0.5f64..0.5, b in 0.05f64..1.5, k in kernel(),
    ) {
        for side in [Side::Plus, Side::Minus] {
            if let Ok(w) = local_weights(&x, c, b, k, side) {
                let scale: f64 = 1.0 + w.iter().map(|v| v.abs()).sum::<f64>();
                let s0: f64 = w.iter().sum();
                let s1: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - c)).sum();
                prop_assert!((s0 - 1.0).abs() <= 1e-12 * scale);
                prop_assert!(s1.abs() <= 1e-12 * scale);
                for (wi, xi) in w.iter().zip(&x) {
                    if !side.contains(*xi, c) || (xi - c).abs() > b {
                        prop_assert_eq!(*wi, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn weights_match_least_squares((x, y) in sample(), c in -0.3f64..0.3, b in 0.2f64..1.5, k in kernel()) {
        for side in [Side::Plus, Side::Minus] {
            prop_assume!(distinct_on_side(&x, c, b, side, k) >= 3);
            let w = local_weights(&x, c, b, k, side).unwrap();
            let fit: f64 = w.iter().zip(&y).map(|(w, y)| w * y).sum();
            let oracle = wls_intercept(&y, &x, c, b, k, side).unwrap();
            prop_assert!((fit - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()), "{} vs {}", fit, oracle);
        }
    }

    #[test]
    fn jump_is_affine_equivariant(
        (x, y) in sample(), c in -0.3f64..0.3, b in 0.2f64..1.5, k in kernel(),
        a in -50.0f64..50.0, s in 0.01f64..100.0, d in -3.0f64..3.0,
    ) {
        prop_assume!(distinct_on_side(&x, c, b, Side::Plus, k) >= 3);
        prop_assume!(distinct_on_side(&x, c, b, Side::Minus, k) >= 3);
        let g = estimate_jump("u", &y, &x, c, b, k).unwrap().gamma_hat;
        let ys: Vec<f64> = y.iter().map(|v| a + s * v).collect();
        let gs = estimate_jump("u", &ys, &x, c, b, k).unwrap().gamma_hat;
        let tol = 1e-8 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()))) * (1.0 + a.abs() + s);
        prop_assert!((gs - s * g).abs() <= tol);
        let xs: Vec<f64> = x.iter().map(|v| v + d).collect();
        let gx = estimate_jump("u", &y, &xs, c + d, b, k).unwrap().gamma_hat;
        prop_assert!((gx - g).abs() <= 1e-7 * (1.0 + g.abs()));
    }

    #[test]
    fn critical_values_are_monotone(n in 1usize..5000, dn in 1usize..100, a in 0.001f64..0.5, da in 0.001f64..0.4) {
        for sided in [Sidedness::TwoSided, Sidedness::OneSidedUpper] {
            let q = analytic_critical_value(n, a, sided).unwrap();
            prop_assert!(analytic_critical_value(n + dn, a, sided).unwrap() > q);
            prop_assert!(analytic_critical_value(n, a + da, sided).unwrap() < q);
        }
        prop_assert!(
            analytic_critical_value(n, a, Sidedness::TwoSided).unwrap()
                > analytic_critical_value(n, a, Sidedness::OneSidedUpper).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decisions_are_nested_in_alpha(seed in any::<u64>(), fraction in prop_oneof![Just(0.0), Just(0.2)]) {
        let panel = panel_from(seed, 8, 150, fraction);
        let cfg = TestConfig { alphas: vec![0.001, 0.01, 0.05, 0.1, 0.2, 0.5], ..TestConfig::default() };
        for r in [test_existence(&panel, &cfg).unwrap(), test_homogeneity(&panel, &cfg).unwrap()] {
            prop_assert!(r.critical_values.windows(2).all(|w| w[0] > w[1]));
            for i in 1..r.reject.len() {
                prop_assert!(!r.reject[i - 1] || r.reject[i]);
            }
        }
    }

    #[test]
    fn stats_invariant_to_per_unit_affine_rescaling(
        seed in any::<u64>(),
        shifts in prop::collection::vec(-20.0f64..20.0, 6),
        scales in prop::collection::vec(0.05f64..20.0, 6),
    ) {
        let panel = panel_from(seed, 6, 200, 0.5);
        let transformed = map_y(&panel, |j, y, _| shifts[j] + scales[j] * y);
        for policy in [BandwidthPolicy::plugin(), BandwidthPolicy::pooled(), BandwidthPolicy::fixed(0.4)] {
            let cfg = TestConfig { bandwidth: policy, ..TestConfig::default() };
            let a = test_existence(&panel, &cfg).unwrap();
            let b = test_existence(&transformed, &cfg).unwrap();
            for (u, v) in a.per_unit.iter().zip(&b.per_unit) {
                prop_assert!((u.stat - v.stat).abs() <= 1e-9 * (1.0 + u.stat.abs()), "{} vs {}", u.stat, v.stat);
            }
        }
    }

    #[test]
    fn homogeneity_ignores_common_jump(seed in any::<u64>(), delta in -5.0f64..5.0) {
        let panel = panel_from(seed, 6, 200, 0.5);
        let shifted = map_y(&panel, |_, y, x| y + if x >= 0.0 { delta } else { 0.0 });
        for center in [Center::Mean, Center::Median] {
            let cfg = TestConfig { center, ..TestConfig::default() };
            let q = |p: &PanelData| {
                stat_homogeneity(&fit_panel_known(p, &cfg).unwrap().0, center, Sidedness::TwoSided).unwrap()
            };
            let (q0, q1) = (q(&panel), q(&shifted));
            prop_assert!((q0 - q1).abs() <= 1e-9 * (1.0 + q0), "{} vs {}", q0, q1);
        }
    }
}
