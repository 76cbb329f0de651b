//! Posterior means read off the marginal density, one formula per noise law,
//! and the expectation-form functional for standard Gaussian noise.

use crate::densities::DensityModel;
use crate::error::{Result, TweedieError};
use crate::numerics::hilbert::hilbert_transform;
use crate::numerics::quad::{integrate_with_breaks, QuadResult};
use crate::numerics::special::EULER_GAMMA;
use crate::types::{EvalResult, NoiseSpec};

/// Smallest marginal density value for which a ratio is formed.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Width of the interval near zero replaced by the kernel's limit value.
const SMALL_T: f64 = 1e-6;

pub(crate) fn checked_density(model: &DensityModel, y: f64) -> Result<f64> {
    let f = model.eval(y);
    if f.is_finite() && f >= DENSITY_FLOOR {
        Ok(f)
    } else {
        Err(TweedieError::DensityTooSmall { density: f })
    }
}

/// Running sum of quadrature results for one formula.
struct Acc {
    error: f64,
}

impl Acc {
    fn new() -> Acc {
        Acc { error: 0.0 }
    }

    fn add(&mut self, r: QuadResult) -> f64 {
        self.error += r.error_estimate;
        r.value
    }
}

fn slope(model: &DensityModel, y: f64) -> f64 {
    match model.deriv(y, 1) {
        Ok(d) => d,
        Err(_) => {
            let h = 1e-4;
            (model.eval(y + h) - model.eval(y - h)) / (2.0 * h)
        }
    }
}

/// `t`-breaks for integrands of the form `f(y ± t)`.
fn offset_breaks(model: &DensityModel, y: f64) -> Vec<f64> {
    model
        .breakpoints()
        .iter()
        .map(|k| (k - y).abs())
        .filter(|t| *t > 0.0)
        .collect()
}

/// `∫ e^{-(z-y)/b} f(z) dz` over `z > y` (right) and `∫ e^{(z-y)/b} f(z) dz` over `z < y` (left).
fn exponential_sides(
    model: &DensityModel,
    y: f64,
    right_scale: f64,
    left_scale: f64,
    itol: f64,
    acc: &mut Acc,
) -> Result<(f64, f64)> {
    let (lo, hi) = model.support();
    let breaks = model.breakpoints();
    let right = if hi > y {
        acc.add(integrate_with_breaks(
            |z| (-(z - y) / right_scale).exp() * model.eval(z),
            y.max(lo),
            hi,
            &breaks,
            itol,
            1e-14,
        )?)
    } else {
        0.0
    };
    let left = if lo < y {
        acc.add(integrate_with_breaks(
            |z| ((z - y) / left_scale).exp() * model.eval(z),
            lo,
            y.min(hi),
            &breaks,
            itol,
            1e-14,
        )?)
    } else {
        0.0
    };
    Ok((right, left))
}

/// `∫₀^T (f(y+t) - f(y-t)) k(t) dt` for a kernel with `k(t) ~ c/t` at zero.
fn odd_kernel_integral<K: Fn(f64) -> f64>(
    model: &DensityModel,
    y: f64,
    kernel: K,
    small_t_limit: f64,
    upper: f64,
    itol: f64,
    acc: &mut Acc,
) -> Result<f64> {
    let head = 2.0 * small_t_limit * slope(model, y) * SMALL_T;
    let body = acc.add(integrate_with_breaks(
        |t| (model.eval(y + t) - model.eval(y - t)) * kernel(t),
        SMALL_T,
        upper,
        &offset_breaks(model, y),
        itol,
        1e-14,
    )?);
    Ok(head + body)
}

/// Posterior mean `E[X | Y = y]` for a univariate noise law.
pub fn posterior_mean(
    noise: &NoiseSpec,
    model: &DensityModel,
    y: f64,
    tol: f64,
) -> Result<EvalResult> {
    if model.dim() != 1 {
        return Err(TweedieError::DimensionMismatch {
            expected: 1,
            found: model.dim(),
        });
    }
    let f = checked_density(model, y)?;
    // Quadrature tolerance for numerators that are divided by f afterwards.
    let itol = (0.25 * tol * f).max(f64::MIN_POSITIVE);
    let tail_eps = 0.1 * tol * f;
    let mut acc = Acc::new();
    let mut tail = 0.0;

    let value = match *noise {
        NoiseSpec::Gaussian { location, sd } => y - location + sd * sd * model.deriv(y, 1)? / f,
        NoiseSpec::Laplace { location, scale } => {
            let (r, l) = exponential_sides(model, y, scale, scale, itol, &mut acc)?;
            y - location + (r - l) / f
        }
        NoiseSpec::ProductLaplace { scale, dim: 1 } => {
            let (r, l) = exponential_sides(model, y, scale, scale, itol, &mut acc)?;
            y + (r - l) / f
        }
        NoiseSpec::GeneralizedLaplace {
            location,
            scale,
            shape,
        } => {
            let (r, l) = exponential_sides(model, y, scale, scale, itol / shape, &mut acc)?;
            y - location + shape * (r - l) / f
        }
        NoiseSpec::AsymmetricLaplace {
            location,
            left_scale,
            right_scale,
        } => {
            // The right-hand integral decays at the left scale and vice versa.
            let (r, l) = exponential_sides(model, y, left_scale, right_scale, itol, &mut acc)?;
            y - location + (r - l) / f
        }
        NoiseSpec::Logistic { location, scale } => {
            let upper = scale * (1.0 + 1.0 / tail_eps).ln();
            tail = 1.0 / (upper / scale).exp_m1();
            let i = odd_kernel_integral(
                model,
                y,
                |t| 1.0 / (t / scale).exp_m1(),
                scale,
                upper,
                itol,
                &mut acc,
            )?;
            y - location + i / f
        }
        NoiseSpec::HyperbolicSecant { location, scale } => {
            let c = std::f64::consts::PI / (2.0 * scale);
            let upper = (0.5 / tail_eps).asinh() / c;
            tail = 0.5 / (c * upper).sinh();
            let i = odd_kernel_integral(
                model,
                y,
                |t| 0.5 / (c * t).sinh(),
                1.0 / (2.0 * c),
                upper,
                itol,
                &mut acc,
            )?;
            y - location + i / f
        }
        NoiseSpec::Gumbel { location, scale } => {
            let weight = 1.0 + scale * f;
            let upper = scale * (1.0 + weight / tail_eps).ln();
            tail = weight / (upper / scale).exp_m1();
            let head = scale * slope(model, y) * SMALL_T;
            let body = acc.add(integrate_with_breaks(
                |u| (f - model.eval(y - u)) / (u / scale).exp_m1(),
                SMALL_T,
                upper,
                &offset_breaks(model, y),
                itol,
                1e-14,
            )?);
            y - location - scale * EULER_GAMMA + (head + body) / f
        }
        NoiseSpec::Cauchy { location, scale } => {
            let h = acc.add(hilbert_transform(
                |z| model.eval(z),
                y,
                model.l1_bound(),
                0.5 * tol * f / scale,
            )?);
            y - location - scale * h / f
        }
        NoiseSpec::Gamma { shape, scale } => {
            let (_, l) = exponential_sides(model, y, scale, scale, itol / shape, &mut acc)?;
            y - shape * l / f
        }
        NoiseSpec::NoncentralChiSq { df, noncentrality } => {
            let (lo, _) = model.support();
            let breaks = model.breakpoints();
            let (a, b) = if lo < y {
                let a = acc.add(integrate_with_breaks(
                    |z| ((z - y) / 2.0).exp() * model.eval(z),
                    lo,
                    y,
                    &breaks,
                    itol / df,
                    1e-14,
                )?);
                let b = if noncentrality > 0.0 {
                    acc.add(integrate_with_breaks(
                        |z| (y - z) * ((z - y) / 2.0).exp() * model.eval(z),
                        lo,
                        y,
                        &breaks,
                        itol / noncentrality,
                        1e-14,
                    )?)
                } else {
                    0.0
                };
                (a, b)
            } else {
                (0.0, 0.0)
            };
            y - (0.5 * df * a + 0.25 * noncentrality * b) / f
        }
        NoiseSpec::InverseGaussian { mean, shape } => {
            // z = y - r² removes the (y - z)^{-1/2} singularity.
            let (lo, _) = model.support();
            let r_max = if lo.is_finite() {
                (y - lo).max(0.0).sqrt()
            } else {
                f64::INFINITY
            };
            let breaks: Vec<f64> = model
                .breakpoints()
                .iter()
                .filter(|k| **k < y)
                .map(|k| (y - k).sqrt())
                .collect();
            let c = shape / (2.0 * mean * mean);
            let pref = (shape / (2.0 * std::f64::consts::PI)).sqrt();
            let i = if r_max > 0.0 {
                acc.add(integrate_with_breaks(
                    |r| (-c * r * r).exp() * model.eval(y - r * r),
                    0.0,
                    r_max,
                    &breaks,
                    itol / (2.0 * pref),
                    1e-14,
                )?)
            } else {
                0.0
            };
            y - 2.0 * pref * i / f
        }
        NoiseSpec::ProductLaplace { .. } | NoiseSpec::MultivariateGaussian { .. } => {
            return Err(TweedieError::Unsupported {
                family: noise.family_name().to_string(),
                target: "univariate posterior mean".into(),
            })
        }
    };

    Ok(EvalResult::scalar(value, f, (acc.error + tail) / f))
}

/// How [`unbiased_mean_functional`] evaluates its expectation.
#[derive(Debug, Clone, Copy)]
pub enum RepresenterMode<'a> {
    Quadrature,
    /// Average over draws of `Y`; the standard error goes into the error field.
    MonteCarlo(&'a [f64]),
}

/// The estimand whose functional is computed: `g(x) = a^{-1} exp((a²-1)x²/(2a²))`.
pub fn representer_target(a: f64, x: f64) -> f64 {
    ((a * a - 1.0) * x * x / (2.0 * a * a)).exp() / a
}

/// `Q♯(z)`: the function whose expectation under `f_Y` is the functional.
pub fn representer_kernel(a: f64, y: f64, z: f64) -> f64 {
    let s = a * a - 1.0;
    let d = z - a * a * y;
    (0.5 * s * y * y - d * d / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt()
}

/// `∫ Q♯(z) f_Y(z) dz` under N(0, 1) noise; the value is not divided by `f_Y(y)`.
pub fn unbiased_mean_functional(
    model: &DensityModel,
    y: f64,
    a: f64,
    mode: RepresenterMode<'_>,
) -> Result<EvalResult> {
    if !(a > 1.0) {
        return Err(TweedieError::DomainError(format!(
            "expectation-form functional needs a > 1, got {a}"
        )));
    }
    if let Some(noise) = model.noise() {
        if *noise
            != (NoiseSpec::Gaussian {
                location: 0.0,
                sd: 1.0,
            })
        {
            return Err(TweedieError::Unsupported {
                family: noise.family_name().to_string(),
                target: "expectation-form functional (needs N(0, 1) noise)".into(),
            });
        }
    }
    let f = model.eval(y);
    match mode {
        RepresenterMode::Quadrature => {
            let mut breaks = model.breakpoints();
            breaks.push(a * a * y);
            let r = integrate_with_breaks(
                |z| representer_kernel(a, y, z) * model.eval(z),
                f64::NEG_INFINITY,
                f64::INFINITY,
                &breaks,
                1e-13,
                1e-12,
            )?;
            Ok(EvalResult::scalar(r.value, f, r.error_estimate))
        }
        RepresenterMode::MonteCarlo(samples) => {
            let n = samples.len();
            if n < 2 {
                return Err(TweedieError::TooFewSamples { n, min: 2 });
            }
            let vals: Vec<f64> = samples
                .iter()
                .map(|z| representer_kernel(a, y, *z))
                .collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Ok(EvalResult::scalar(mean, f, (var / n as f64).sqrt()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::exact_density;
    use crate::types::PriorSpec;

    #[test]
    fn point_mass_gaussian() {
        let n = NoiseSpec::Gaussian {
            location: 0.0,
            sd: 1.0,
        };
        let m = exact_density(&PriorSpec::point_mass(2.0), &n).unwrap();
        for &y in &[-1.0, 2.0, 4.5] {
            let r = posterior_mean(&n, &m, y, 1e-10).unwrap();
            assert!((r.value_f64() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_prior_shrinkage() {
        let (sigma, m0, tau2) = (0.8f64, 0.5, 2.0);
        let n = NoiseSpec::Gaussian {
            location: 0.0,
            sd: sigma,
        };
        let m = exact_density(&PriorSpec::normal(m0, tau2), &n).unwrap();
        let s2 = sigma * sigma;
        for &y in &[-1.0, 0.3, 2.2] {
            let r = posterior_mean(&n, &m, y, 1e-10).unwrap();
            assert!((r.value_f64() - (s2 * m0 + tau2 * y) / (s2 + tau2)).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_two_atoms_matches_finite_sum() {
        let n = NoiseSpec::Laplace {
            location: 0.0,
            scale: 1.0,
        };
        let m = exact_density(&PriorSpec::atomic(&[(0.0, 0.5), (1.0, 0.5)]), &n).unwrap();
        let y = 0.3;
        let (w0, w1) = (0.5 * n.pdf(y), 0.5 * n.pdf(y - 1.0));
        let r = posterior_mean(&n, &m, y, 1e-10).unwrap();
        assert!((r.value_f64() - w1 / (w0 + w1)).abs() < 1e-9);
    }

    #[test]
    fn cauchy_point_mass() {
        let n = NoiseSpec::Cauchy {
            location: 0.0,
            scale: 1.0,
        };
        let m = exact_density(&PriorSpec::point_mass(0.0), &n).unwrap();
        for &y in &[-3.0, 0.0, 0.7] {
            let r = posterior_mean(&n, &m, y, 1e-8).unwrap();
            assert!(r.value_f64().abs() < 1e-7, "y={y}: {}", r.value_f64());
        }
    }

    #[test]
    fn representer_one_atom() {
        let n = NoiseSpec::Gaussian {
            location: 0.0,
            sd: 1.0,
        };
        let m = exact_density(&PriorSpec::point_mass(0.0), &n).unwrap();
        let r = unbiased_mean_functional(&m, 0.0, 2.0, RepresenterMode::Quadrature).unwrap();
        let expected = 0.5 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value_f64() - expected).abs() < 1e-12);
        let r = unbiased_mean_functional(&m, 1.0, 2.0, RepresenterMode::Quadrature).unwrap();
        assert!((r.value_f64() - representer_target(2.0, 0.0) * n.pdf(1.0)).abs() < 1e-12);
        assert!(unbiased_mean_functional(&m, 0.0, 1.0, RepresenterMode::Quadrature).is_err());
    }
}
