//! Property checks on the building blocks.

use std::f64::consts::PI;

use capwave::config::RunConfig;
use capwave::dno::{dirichlet_neumann, Geometry};
use capwave::smoothing::{escape_point, time_integral, weight_primitive, Partition};
use capwave::{Field, Grid};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_sums_to_one(y in -5.0f64..5.0, eps in 0.01f64..0.49) {
        let p = Partition { eps };
        let (a, b, c) = (p.plus(y), p.minus(y), p.zero(y));
        prop_assert!((a + b + c - 1.0).abs() < 1e-14);
        for v in [a, b, c] {
            prop_assert!((-1e-15..=1.0 + 1e-15).contains(&v));
        }
        // plus and minus never overlap
        prop_assert!(a * b == 0.0);
    }

    #[test]
    fn escape_derivative_matches_difference(x in -30.0f64..30.0, right in any::<bool>(), eps in 0.05f64..0.45) {
        let (sign, delta, h) = (if right { 1.0 } else { -1.0 }, 0.2, 1e-5);
        let at = |x: f64| escape_point(x, sign, eps, delta, weight_primitive(x.abs(), delta));
        let fd = (at(x + h).a - at(x - h).a) / (2.0 * h);
        let p = at(x);
        prop_assert!((p.a_x - fd).abs() < 1e-6 * (1.0 + fd.abs()), "a_x {} vs {}", p.a_x, fd);
        prop_assert!((p.terms.iter().sum::<f64>() - p.a_x).abs() < 1e-14);
        // bounded by the escape plateau
        prop_assert!(p.a.abs() <= 1.0 + 2.0 * eps + weight_primitive(1e6, delta));
    }

    #[test]
    fn trapezoid_is_linear_and_exact_on_lines(
        a in -3.0f64..3.0, b in -3.0f64..3.0, m in 2usize..40, lam in -2.0f64..2.0,
    ) {
        let ts: Vec<f64> = (0..m).map(|i| (i as f64).powf(1.3) * 0.1).collect();
        let line: Vec<(f64, f64)> = ts.iter().map(|&t| (t, a + b * t)).collect();
        let t1 = *ts.last().unwrap();
        prop_assert!((time_integral(&line) - (a * t1 + 0.5 * b * t1 * t1)).abs() < 1e-10 * (1.0 + t1 * t1));
        let scaled: Vec<(f64, f64)> = line.iter().map(|&(t, v)| (t, lam * v)).collect();
        prop_assert!((time_integral(&scaled) - lam * time_integral(&line)).abs() < 1e-10 * (1.0 + t1 * t1));
    }

    #[test]
    fn sobolev_norm_scales_and_orders(amps in prop::collection::vec(-1.0f64..1.0, 4), c in -4.0f64..4.0, s in 0.0f64..3.0) {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let u = Field::from_fn(&g, |x| {
            amps.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * x).cos()).sum::<f64>()
        });
        let n = u.sobolev_norm(s);
        prop_assert!((u.scale(c).sobolev_norm(s) - c.abs() * n).abs() < 1e-12 * (1.0 + n));
        prop_assert!(u.sobolev_norm(s + 0.5) >= n - 1e-12);
        // transform round trip
        let back = Field::from_spectrum(&g, u.spectrum().to_vec(), true);
        let gap = u.re().iter().zip(back.re()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-13);
    }

    #[test]
    fn config_round_trips(n in 3u32..9, amp in 1e-6f64..1e-2, k in 1i64..4, t in 0.1f64..5.0) {
        let text = format!(
            "grid.n = {}\ngrid.length = 6.283185307179586\ninitial.profile = mode\n\
             initial.k = {k}\ninitial.amplitude = {amp:e}\nevolution.T = {t}\n",
            1usize << n
        );
        let cfg = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(cfg.n, 1usize << n);
        prop_assert!((cfg.t_final - t).abs() < 1e-15);
        let bad = format!("{text}initial.bogus = 1\n");
        prop_assert!(RunConfig::parse(&bad).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dn_is_symmetric_and_mean_free(a in -0.15f64..0.15, b in -0.1f64..0.1, ph in 0.0f64..PI) {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let geo = Geometry::flat(1.0);
        let eta = Field::from_fn(&g, |x| a * x.cos() + b * (2.0 * x + ph).sin());
        let f = Field::from_fn(&g, |x| (x + ph).sin() + 0.3 * (3.0 * x).cos());
        let h = Field::from_fn(&g, |x| (2.0 * x).cos() - 0.5 * (x - ph).sin());
        let gf = dirichlet_neumann(&eta, &f, &geo, 24).unwrap();
        let gh = dirichlet_neumann(&eta, &h, &geo, 24).unwrap();
        let (l, r) = (gf.inner(&h).re, f.inner(&gh).re);
        prop_assert!((l - r).abs() < 1e-8 * (1.0 + l.abs()), "<Gf,h> {} vs <f,Gh> {}", l, r);
        prop_assert!(gf.integral().norm() < 1e-9);
        // positivity on non-constant data
        prop_assert!(gf.inner(&f).re > 0.0);
    }
}
