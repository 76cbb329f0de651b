use tweedie_core::numerics::integrate_with_breaks;
use tweedie_core::oracle::{
    noise_pdf, oracle_posterior, run_validation, sample_joint, table1_families, ValidationCase,
};
use tweedie_core::{EvalOptions, FunctionalSpec, NoiseSpec, Point, PriorSpec};

fn support_breaks(noise: &NoiseSpec) -> (f64, f64, Vec<f64>) {
    let (lo, hi) = noise.support();
    (lo, hi, noise.breakpoints())
}

#[test]
fn noise_densities_integrate_to_one() {
    let mut families: Vec<NoiseSpec> = table1_families().into_iter().map(|(n, _)| n).collect();
    families.push(NoiseSpec::ProductLaplace { scale: 0.7, dim: 1 });
    for noise in families {
        let (lo, hi, breaks) = support_breaks(&noise);
        let mass =
            integrate_with_breaks(|v| noise_pdf(&noise, &[v]), lo, hi, &breaks, 1e-10, 1e-12)
                .unwrap();
        assert!(
            (mass.value - 1.0).abs() <= 1e-7,
            "{}: {}",
            noise.family_name(),
            mass.value
        );
        let mode_value = noise_pdf(&noise, &[0.0]).max(noise_pdf(&noise, &[1.0]));
        assert!(mode_value.is_finite() && mode_value > 0.0);
    }
}

/// Largest gap between the empirical CDF of the draws and the integrated density.
fn ks_distance(noise: &NoiseSpec, draws: &mut [f64]) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let (lo, _, breaks) = support_breaks(noise);
    let start = if lo.is_finite() { lo } else { draws[0] - 50.0 };
    let mut cdf = if lo.is_finite() {
        0.0
    } else {
        integrate_with_breaks(
            |v| noise.pdf(v),
            f64::NEG_INFINITY,
            start,
            &breaks,
            1e-12,
            1e-10,
        )
        .unwrap()
        .value
    };
    let mut prev = start;
    let mut worst: f64 = 0.0;
    for (i, x) in draws.iter().enumerate().step_by(50) {
        cdf += integrate_with_breaks(|v| noise.pdf(v), prev, *x, &breaks, 1e-12, 1e-10)
            .unwrap()
            .value;
        prev = *x;
        let below = i as f64 / n;
        let through = (i + 1) as f64 / n;
        worst = worst.max((cdf - below).abs()).max((cdf - through).abs());
    }
    worst
}

#[test]
fn sampled_noise_matches_its_density() {
    for (k, (noise, _)) in table1_families().into_iter().enumerate() {
        let draws =
            sample_joint(&PriorSpec::point_mass(0.0), &noise, 100_000, 100 + k as u64).unwrap();
        let mut v = draws.y;
        let d = ks_distance(&noise, &mut v);
        assert!(d < 0.01, "{}: {d}", noise.family_name());
    }
}

#[test]
fn gaussian_sample_mean_is_centred() {
    let noise = NoiseSpec::Gaussian {
        location: 0.0,
        sd: 1.0,
    };
    let n = 1_000_000;
    let s = sample_joint(&PriorSpec::point_mass(0.0), &noise, n, 3).unwrap();
    let mean = s.y.iter().sum::<f64>() / n as f64;
    assert!(mean.abs() < 4.0 / (n as f64).sqrt());
    let again = sample_joint(&PriorSpec::point_mass(0.0), &noise, 10, 3).unwrap();
    assert_eq!(&s.y[..10], &again.y[..]);
}

#[test]
fn conjugate_oracle_matches_closed_form() {
    let noise = NoiseSpec::Gaussian {
        location: 0.0,
        sd: 0.8,
    };
    let (m, tau2, s2) = (0.5, 2.0, 0.64);
    for y in [-3.0, -0.5, 0.0, 1.0, 2.0, 4.0] {
        let v = oracle_posterior(
            &PriorSpec::normal(m, tau2),
            &noise,
            &FunctionalSpec::Mean,
            &[y],
            1e-12,
        )
        .unwrap()
        .as_scalar()
        .unwrap();
        assert!(
            (v - (s2 * m + tau2 * y) / (s2 + tau2)).abs() <= 1e-10,
            "y={y}"
        );
    }
}

fn single_case(tolerance: f64) -> ValidationCase {
    ValidationCase {
        family: "laplace".into(),
        prior: Some(PriorSpec::atomic(&[(0.0, 0.5), (1.0, 0.5)])),
        joint: None,
        noise: NoiseSpec::Laplace {
            location: 0.0,
            scale: 1.0,
        },
        functional: FunctionalSpec::Mean,
        ys: vec![Point(vec![0.3])],
        tolerance,
    }
}

#[test]
fn validation_records_pass_and_fail() {
    let ok = run_validation("one", 1, &[single_case(1e-6)], &EvalOptions::default());
    assert!(ok.all_pass() && ok.cases.len() == 1);
    // The default series schedule is too short for a CDF under an atomic prior.
    let mut inexact = single_case(1e-6);
    inexact.noise = NoiseSpec::Gaussian {
        location: 0.0,
        sd: 1.0,
    };
    inexact.functional = FunctionalSpec::Cdf { threshold: 0.5 };
    let report = run_validation("one", 1, &[inexact], &EvalOptions::default());
    let r = &report.cases[0];
    assert!(!r.pass && r.abs_error.unwrap() > 1e-6);
    assert_eq!(report.failures(), 1);
    assert_eq!(report.max_abs_error, r.abs_error);
}

#[test]
fn validation_captures_case_errors() {
    let mut bad = single_case(1e-6);
    bad.functional = FunctionalSpec::Variance;
    let report = run_validation("bad", 1, &[bad, single_case(1e-6)], &EvalOptions::default());
    assert_eq!(report.cases.len(), 2);
    assert!(!report.cases[0].pass && report.cases[0].error.is_some());
    assert!(report.cases[1].pass);
}
