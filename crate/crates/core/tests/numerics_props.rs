use proptest::prelude::*;
use tweedie_core::numerics::adaptive_integrate;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn polynomials_integrate_exactly(
        coefs in proptest::collection::vec(-3.0f64..3.0, 1..=13),
        a in -4.0f64..4.0,
        width in 0.01f64..6.0,
    ) {
        let b = a + width;
        let p = |x: f64| coefs.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let antiderivative = |x: f64| {
            coefs
                .iter()
                .enumerate()
                .map(|(k, c)| c * x.powi(k as i32 + 1) / (k as f64 + 1.0))
                .sum::<f64>()
        };
        let tol = 1e-9;
        let exact = antiderivative(b) - antiderivative(a);
        // Integrals reach ~1e12, so the tolerance also allows roundoff relative to ∫|p|.
        let m = a.abs().max(b.abs());
        let abs_mass = width * coefs.iter().enumerate().map(|(k, c)| c.abs() * m.powi(k as i32)).sum::<f64>();
        let rounding = 100.0 * f64::EPSILON * abs_mass;
        let r = adaptive_integrate(p, a, b, tol + rounding, 0.0).unwrap();
        prop_assert!((r.value - exact).abs() <= tol + rounding, "{} vs {}", r.value, exact);
    }
}
