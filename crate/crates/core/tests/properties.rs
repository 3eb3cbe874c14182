use proptest::prelude::*;

use conflab::cli::parse_k_list;
use conflab::conformal::{conformal_energy, conformal_energy_tilde_side, ZonalPolynomial};
use conflab::cover::intervals_disjoint;
use conflab::functionals::{hersch_check, Functionals, SolverSettings};
use conflab::spectrum::{
    compute_spectrum, round_box_eigenvalues, solve_truncated, SpectralProblem,
};
use conflab::ConformalFactor;

/// Coefficients of a polynomial bounded below by `margin` on `[-1, 1]`.
fn positive_poly(max_degree: usize) -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec(-1.0f64..1.0, 1..=max_degree),
        0.2f64..1.5,
    )
        .prop_map(|(tail, margin)| {
            let spread: f64 = tail.iter().map(|c| c.abs()).sum();
            let mut c = vec![spread + margin];
            c.extend(tail);
            c
        })
}

fn settings(degree: usize) -> SolverSettings {
    SolverSettings {
        degree,
        quad_order: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn homothety_scales_the_round_spectrum(c in 0.1f64..10.0) {
        let mu = ConformalFactor::constant(3, c).unwrap();
        let got = solve_truncated(&SpectralProblem::new(mu, 10).unwrap()).unwrap().expanded();
        let scale = c.powi(-4);
        let exact: Vec<f64> = round_box_eigenvalues(3, 10).unwrap().into_iter()
            .flat_map(|(v, m)| std::iter::repeat_n(v * scale, m)).collect();
        for (g, e) in got.iter().zip(&exact).take(50) {
            prop_assert!((g - e).abs() <= 1e-11 * e.max(scale), "{g} vs {e}");
        }
    }

    #[test]
    fn galerkin_eigenvalues_decrease_with_the_basis(coeffs in positive_poly(4)) {
        let mu = ConformalFactor::polynomial(3, coeffs).unwrap();
        let coarse = compute_spectrum(&SpectralProblem::new(mu.clone(), 16).unwrap()).unwrap();
        let fine = solve_truncated(&SpectralProblem::new(mu, 20).unwrap()).unwrap();
        let (a, b) = (coarse.expanded(), fine.expanded());
        // small mu scales eigenvalues up by mu^-4, so rounding is relative
        for k in 0..coarse.trusted.unwrap() {
            prop_assert!(b[k] <= a[k] + 1e-12 * a[k].max(1.0), "k = {k}: {} > {}", b[k], a[k]);
        }
    }

    #[test]
    fn eigenvalues_are_positive(coeffs in positive_poly(5)) {
        let mu = ConformalFactor::polynomial(3, coeffs).unwrap();
        let s = solve_truncated(&SpectralProblem::new(mu, 12).unwrap()).unwrap();
        prop_assert!(s.entries.iter().all(|e| e.value > 0.0));
    }

    #[test]
    fn conformal_law_holds(coeffs in positive_poly(4), f in prop::collection::vec(-2.0f64..2.0, 1..6), n in 3usize..6) {
        let mu = ConformalFactor::polynomial(n, coeffs).unwrap();
        let f = ZonalPolynomial(f);
        let a = conformal_energy(&f, &mu).unwrap();
        let b = conformal_energy_tilde_side(&f, &mu).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1e-300), "{a} vs {b}");
    }

    #[test]
    fn normalised_eigenvalues_ignore_scale(coeffs in positive_poly(3), c in 0.05f64..20.0) {
        let mu = ConformalFactor::polynomial(3, coeffs).unwrap();
        let a = Functionals::new(&mu, &settings(20)).unwrap();
        let b = Functionals::new(&mu.scaled(c).unwrap(), &settings(20)).unwrap();
        prop_assert!(a.normalized(0).is_ok());
        for k in 0..8 {
            if let (Ok(x), Ok(y)) = (a.normalized(k), b.normalized(k)) {
                prop_assert!((x - y).abs() <= 1e-10 * x);
            }
        }
    }

    #[test]
    fn round_metric_maximises_the_first_functional(coeffs in positive_poly(4)) {
        let mu = ConformalFactor::polynomial(3, coeffs).unwrap();
        let r = hersch_check(&mu, &settings(16)).unwrap();
        prop_assert!(r.gap >= -1e-10 * r.round);
        if r.relative_oscillation > 1e-2 {
            prop_assert!(r.gap > 1e-6, "{r:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn disjoint_intervals_share_no_point(
        lo1 in 0.0f64..3.0, w1 in 0.01f64..3.0, lo2 in 0.0f64..3.0, w2 in 0.01f64..3.0, delta in 0.0f64..std::f64::consts::PI,
    ) {
        let (hi1, hi2) = (lo1 + w1, lo2 + w2);
        if intervals_disjoint(lo1, hi1, lo2, hi2, delta) {
            // a point at distance s from p and t from q exists iff
            // |s - t| <= delta <= s + t <= 2 pi - delta
            for i in 0..=200 {
                for j in 0..=200 {
                    let s = lo1 + (hi1 - lo1) * i as f64 / 200.0;
                    let t = lo2 + (hi2 - lo2) * j as f64 / 200.0;
                    let feasible = (s - t).abs() <= delta && delta <= s + t && s + t <= 2.0 * std::f64::consts::PI - delta
                        && s <= std::f64::consts::PI && t <= std::f64::consts::PI;
                    prop_assert!(!(feasible && s < hi1 && t < hi2));
                }
            }
        }
    }

    #[test]
    fn k_ranges_expand(a in 0usize..50, len in 0usize..30, extra in 0usize..100) {
        let spec = format!("{a}-{}, {extra}", a + len);
        let ks = parse_k_list(&spec).unwrap();
        prop_assert_eq!(ks.len(), len + 2);
        prop_assert_eq!(ks[0], a);
        prop_assert_eq!(*ks.last().unwrap(), extra);
    }
}
