use tweedie_core::laplace_mech::{lm_functional_1d, lm_mgf};
use tweedie_core::oracle::oracle_posterior;
use tweedie_core::{exact_density, DensityModel, FunctionalSpec, NoiseSpec, PriorSpec};

const TOL: f64 = 1e-10;
const B: f64 = 1.0;

fn model() -> (PriorSpec, DensityModel) {
    let prior = PriorSpec::atomic(&[(-0.5, 0.3), (0.4, 0.45), (1.8, 0.25)]);
    let m = exact_density(&prior, &NoiseSpec::ProductLaplace { scale: B, dim: 1 }).unwrap();
    (prior, m)
}

fn eval(m: &DensityModel, y: f64, f: &FunctionalSpec) -> f64 {
    lm_functional_1d(B, m, y, f, TOL).unwrap().value_f64()
}

const YS: [f64; 5] = [-1.5, -0.2, 0.4, 1.1, 3.0];

#[test]
fn variance_matches_second_moment_minus_squared_mean() {
    let (_, m) = model();
    for y in YS {
        let var = eval(&m, y, &FunctionalSpec::Variance);
        let mean = eval(&m, y, &FunctionalSpec::Mean);
        let second = eval(&m, y, &FunctionalSpec::SecondMoment);
        assert!((var - (second - mean * mean)).abs() <= 1e-7, "y={y}");
        assert!(var >= -1e-9);
    }
}

#[test]
fn cdf_is_monotone_with_correct_limits() {
    let (_, m) = model();
    for y in YS {
        let mut last = f64::NEG_INFINITY;
        for i in 0..21 {
            let a = -2.0 + 0.25 * i as f64;
            let v = eval(&m, y, &FunctionalSpec::Cdf { threshold: a });
            assert!(v >= last - 1e-12, "y={y} a={a}");
            last = v;
        }
        // Thresholds beyond the prior support on either side.
        let lo = (y - 12.0 * B).min(-0.5 - 1.0);
        let hi = (y + 12.0 * B).max(1.8 + 1.0);
        assert!(eval(&m, y, &FunctionalSpec::Cdf { threshold: lo }).abs() <= 1e-6);
        assert!((eval(&m, y, &FunctionalSpec::Cdf { threshold: hi }) - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn log_mgf_is_convex() {
    let (_, m) = model();
    let t = 0.3;
    for y in YS {
        let at = |s: f64| lm_mgf(B, &m, &[y], &[s], TOL).unwrap().value_f64().ln();
        assert!(at(t) + at(-t) - 2.0 * at(0.0) >= -1e-6, "y={y}");
        assert!((at(0.0)).abs() <= 1e-12);
    }
}

#[test]
fn squared_risk_is_minimized_at_the_mean() {
    let (_, m) = model();
    for y in YS {
        let mean = eval(&m, y, &FunctionalSpec::Mean);
        let risk = |a: f64| eval(&m, y, &FunctionalSpec::SquaredRisk { threshold: a });
        let at_mean = risk(mean);
        assert!(
            at_mean <= risk(mean + 0.1) && at_mean <= risk(mean - 0.1),
            "y={y}"
        );
        assert!((at_mean - eval(&m, y, &FunctionalSpec::Variance)).abs() <= 1e-8);
    }
}

#[test]
fn hinge_and_absolute_risks_are_consistent() {
    let (prior, m) = model();
    let noise = NoiseSpec::ProductLaplace { scale: B, dim: 1 };
    let y = 0.3;
    let mean = eval(&m, y, &FunctionalSpec::Mean);
    for a in [-1.0, -0.5, 0.1, 0.9, 2.2] {
        let hinge = eval(&m, y, &FunctionalSpec::HingeLoss { threshold: a });
        let absolute = eval(&m, y, &FunctionalSpec::AbsoluteRisk { threshold: a });
        // E(a - X)₊ = E(X - a)₊ - (E X - a), and |z| = z₊ + (-z)₊.
        let reverse = hinge - (mean - a);
        assert!((absolute - (hinge + reverse)).abs() <= 1e-8, "a={a}");
        let oracle_reverse = oracle_posterior(
            &prior,
            &noise,
            &FunctionalSpec::PinballLoss {
                threshold: a,
                quantile_level: 1e-300,
            },
            &[y],
            1e-12,
        )
        .unwrap()
        .as_scalar()
        .unwrap();
        assert!((reverse - oracle_reverse).abs() <= 1e-8, "a={a}");
        let pinball_full = eval(
            &m,
            y,
            &FunctionalSpec::PinballLoss {
                threshold: a,
                quantile_level: 1.0,
            },
        );
        assert!((pinball_full - hinge).abs() <= 1e-8, "a={a}");
    }
}

#[test]
fn one_atom_cdf_below_the_atom_is_zero() {
    let x0 = 0.6;
    let m = exact_density(
        &PriorSpec::point_mass(x0),
        &NoiseSpec::ProductLaplace { scale: B, dim: 1 },
    )
    .unwrap();
    for (a, y) in [(0.2, 0.5), (-1.0, 0.1), (0.5, 2.0)] {
        let v = eval(&m, y, &FunctionalSpec::Cdf { threshold: a });
        assert!(v.abs() <= 1e-12, "a={a} y={y}: {v}");
    }
}
