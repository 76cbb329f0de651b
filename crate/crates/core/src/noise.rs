//! Densities, derivatives and samplers of the univariate noise laws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, StandardNormal};

use crate::error::{Result, TweedieError};
use crate::numerics::quad::integrate_with_breaks;
use crate::numerics::special::{
    cauchy_im_power, factorial, gaussian_density_derivs, ln_gamma, K_MAX,
};
use crate::types::NoiseSpec;

/// Derivative order available for the smooth non-Gaussian families.
pub const SMOOTH_MAX_ORDER: usize = 12;

/// Poisson tail mass left out of the noncentral chi-square mixture.
const POISSON_TAIL: f64 = 1e-12;

type Poly = Vec<f64>;

fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_deriv(p: &[f64]) -> Poly {
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| i as f64 * c)
        .collect()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

/// Iterates `P_{k+1} = A·P_k + B·P_k'` from `p0`, returning `P_0..=P_kmax`.
fn poly_sequence(p0: Poly, a: &[f64], b: &[f64], kmax: usize) -> Vec<Poly> {
    let mut seq = Vec::with_capacity(kmax + 1);
    seq.push(p0);
    for k in 0..kmax {
        let prev = &seq[k];
        let next = poly_add(&poly_mul(a, prev), &poly_mul(b, &poly_deriv(prev)));
        seq.push(next);
    }
    seq
}

/// `sech(w)` without overflow.
fn sech(w: f64) -> f64 {
    let e = (-w.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// Density of `G₁ − G₂` for iid Gamma(shape, 1) variables.
fn gamma_difference_pdf(d: f64, shape: f64) -> f64 {
    let ad = d.abs();
    let ln_g = ln_gamma(shape);
    if ad == 0.0 {
        let ln_num = ln_gamma(2.0 * shape - 1.0);
        return (ln_num - 2.0 * ln_g - (2.0 * shape - 1.0) * std::f64::consts::LN_2).exp();
    }
    // With s = r^{1/λ} the s^{λ-1} factor is absorbed into the measure.
    let inv = 1.0 / shape;
    let integrand = |r: f64| {
        let s = r.powf(inv);
        (s + ad).powf(shape - 1.0) * (-2.0 * s).exp()
    };
    let knee = ad.powf(shape);
    let integral = integrate_with_breaks(integrand, 0.0, f64::INFINITY, &[knee], 1e-300, 1e-13)
        .map(|r| r.value)
        .unwrap_or(f64::NAN);
    inv * integral * (-ad - 2.0 * ln_g).exp()
}

fn noncentral_chi_sq_pdf(v: f64, df: f64, nc: f64) -> f64 {
    if v <= 0.0 {
        // The density vanishes at the origin for df > 2.
        return 0.0;
    }
    let half = 0.5 * nc;
    let ln_v = v.ln();
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut ln_pois = -half;
    let mut a = 0.5 * df;
    let mut ln_gamma_a = ln_gamma(a);
    let cap = (half + 60.0 * half.sqrt() + 200.0) as usize;
    for k in 0..=cap {
        if k > 0 {
            ln_pois += half.ln() - (k as f64).ln();
            ln_gamma_a += (a).ln();
            a += 1.0;
        }
        let ln_chi = (a - 1.0) * ln_v - 0.5 * v - a * std::f64::consts::LN_2 - ln_gamma_a;
        total += (ln_pois + ln_chi).exp();
        mass += ln_pois.exp();
        if nc == 0.0 || (k as f64 > half && 1.0 - mass < POISSON_TAIL) {
            break;
        }
    }
    total
}

fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

impl NoiseSpec {
    /// Density `f_V(v)` of a univariate law.
    pub fn pdf(&self, v: f64) -> f64 {
        match *self {
            NoiseSpec::Gaussian { location, sd } => {
                let z = (v - location) / sd;
                (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * sd)
            }
            NoiseSpec::GeneralizedLaplace {
                location,
                scale,
                shape,
            } => gamma_difference_pdf((v - location) / scale, shape) / scale,
            NoiseSpec::Laplace { location, scale } => {
                (-(v - location).abs() / scale).exp() / (2.0 * scale)
            }
            NoiseSpec::ProductLaplace { scale, .. } => (-v.abs() / scale).exp() / (2.0 * scale),
            NoiseSpec::AsymmetricLaplace {
                location,
                left_scale,
                right_scale,
            } => {
                let u = v - location;
                let e = if u < 0.0 {
                    (u / left_scale).exp()
                } else {
                    (-u / right_scale).exp()
                };
                e / (left_scale + right_scale)
            }
            NoiseSpec::Logistic { location, scale } => {
                let z = -((v - location) / scale).abs();
                let e = z.exp();
                e / (scale * (1.0 + e) * (1.0 + e))
            }
            NoiseSpec::Gumbel { location, scale } => {
                let z = (v - location) / scale;
                (-z - (-z).exp()).exp() / scale
            }
            NoiseSpec::Cauchy { location, scale } => {
                let u = v - location;
                scale / (PI * (u * u + scale * scale))
            }
            NoiseSpec::HyperbolicSecant { location, scale } => {
                sech(PI * (v - location) / (2.0 * scale)) / (2.0 * scale)
            }
            NoiseSpec::Gamma { shape, scale } => {
                if v <= 0.0 {
                    0.0
                } else {
                    ((shape - 1.0) * v.ln() - v / scale - ln_gamma(shape) - shape * scale.ln())
                        .exp()
                }
            }
            NoiseSpec::NoncentralChiSq { df, noncentrality } => {
                noncentral_chi_sq_pdf(v, df, noncentrality)
            }
            NoiseSpec::InverseGaussian { mean, shape } => {
                if v <= 0.0 {
                    0.0
                } else {
                    let u = v - mean;
                    (shape / (2.0 * PI * v * v * v)).sqrt()
                        * (-shape * u * u / (2.0 * mean * mean * v)).exp()
                }
            }
            NoiseSpec::MultivariateGaussian { .. } => f64::NAN,
        }
    }

    /// Highest derivative order exposed by [`NoiseSpec::derivs`].
    pub fn max_derivative_order(&self) -> usize {
        match self {
            NoiseSpec::Gaussian { .. } => K_MAX,
            NoiseSpec::Logistic { .. }
            | NoiseSpec::Gumbel { .. }
            | NoiseSpec::Cauchy { .. }
            | NoiseSpec::HyperbolicSecant { .. }
            | NoiseSpec::InverseGaussian { .. } => SMOOTH_MAX_ORDER,
            _ => 0,
        }
    }

    /// True when the density is infinitely differentiable on the whole line.
    pub fn is_smooth(&self) -> bool {
        self.max_derivative_order() > 0
    }

    /// Values `f_V^{(0)}(v), …, f_V^{(kmax)}(v)`.
    pub fn derivs(&self, v: f64, kmax: usize) -> Result<Vec<f64>> {
        if kmax > self.max_derivative_order() {
            return Err(TweedieError::Unsupported {
                family: self.family_name().to_string(),
                target: format!("density derivative of order {kmax}"),
            });
        }
        if kmax == 0 {
            return Ok(vec![self.pdf(v)]);
        }
        let mut out = vec![0.0; kmax + 1];
        match *self {
            NoiseSpec::Gaussian { location, sd } => {
                gaussian_density_derivs(v - location, sd * sd, kmax, &mut out);
            }
            NoiseSpec::Logistic { location, scale } => {
                let z = (v - location) / scale;
                // Work on the left half where p is small; the density is even.
                let p = 1.0 / (1.0 + (z.abs()).exp());
                let base = vec![0.0, 1.0, -1.0];
                let seq = poly_sequence(base.clone(), &[], &base, kmax);
                for (k, poly) in seq.iter().enumerate() {
                    let sign = if z > 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
                    out[k] = sign * poly_eval(poly, p) / scale.powi(k as i32 + 1);
                }
            }
            NoiseSpec::HyperbolicSecant { location, scale } => {
                let c = PI / (2.0 * scale);
                let w = c * (v - location);
                let t = w.tanh();
                let sw = sech(w);
                let seq = poly_sequence(vec![1.0], &[0.0, -1.0], &[1.0, 0.0, -1.0], kmax);
                for (k, poly) in seq.iter().enumerate() {
                    out[k] = sw * poly_eval(poly, t) * c.powi(k as i32) / (2.0 * scale);
                }
            }
            NoiseSpec::Gumbel { location, scale } => {
                let w = (-(v - location) / scale).exp();
                if w > 700.0 {
                    return Ok(out);
                }
                let ew = (-w).exp();
                let seq = poly_sequence(vec![0.0, 1.0], &[0.0, 1.0], &[0.0, -1.0], kmax);
                for (k, poly) in seq.iter().enumerate() {
                    out[k] = ew * poly_eval(poly, w) / scale.powi(k as i32 + 1);
                }
            }
            NoiseSpec::Cauchy { location, scale } => {
                let x = (v - location) / scale;
                for (k, o) in out.iter_mut().enumerate() {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    *o = sign * factorial(k) * cauchy_im_power(x, k)
                        / (PI * scale.powi(k as i32 + 1));
                }
            }
            NoiseSpec::InverseGaussian { mean, shape } => {
                if v <= 0.0 {
                    return Ok(out);
                }
                let f = self.pdf(v);
                let u = 1.0 / v;
                let l = [-shape / (2.0 * mean * mean), -1.5, 0.5 * shape];
                let seq = poly_sequence(vec![1.0], &l, &[0.0, 0.0, -1.0], kmax);
                for (k, poly) in seq.iter().enumerate() {
                    out[k] = f * poly_eval(poly, u);
                }
            }
            _ => unreachable!("order checked above"),
        }
        Ok(out)
    }

    /// Right derivative `D₊f_V(v)`.
    pub fn right_deriv(&self, v: f64) -> Result<f64> {
        match *self {
            NoiseSpec::Laplace { location, scale } => {
                let f = self.pdf(v);
                Ok(if v >= location { -f / scale } else { f / scale })
            }
            NoiseSpec::ProductLaplace { scale, dim: 1 } => {
                let f = self.pdf(v);
                Ok(if v >= 0.0 { -f / scale } else { f / scale })
            }
            NoiseSpec::AsymmetricLaplace {
                location,
                left_scale,
                right_scale,
            } => {
                let f = self.pdf(v);
                Ok(if v >= location {
                    -f / right_scale
                } else {
                    f / left_scale
                })
            }
            NoiseSpec::Gamma { shape, scale } => {
                if v > 0.0 {
                    Ok(self.pdf(v) * ((shape - 1.0) / v - 1.0 / scale))
                } else if v < 0.0 || shape > 2.0 {
                    Ok(0.0)
                } else if shape == 2.0 {
                    Ok(1.0 / (scale * scale))
                } else {
                    Ok(f64::INFINITY)
                }
            }
            _ if self.is_smooth() => Ok(self.derivs(v, 1)?[1]),
            _ => Err(TweedieError::Unsupported {
                family: self.family_name().to_string(),
                target: "right derivative".into(),
            }),
        }
    }

    /// Points where the density is not smooth, or where its support starts.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            NoiseSpec::Laplace { location, .. }
            | NoiseSpec::AsymmetricLaplace { location, .. }
            | NoiseSpec::GeneralizedLaplace { location, .. } => vec![location],
            NoiseSpec::ProductLaplace { .. }
            | NoiseSpec::Gamma { .. }
            | NoiseSpec::NoncentralChiSq { .. }
            | NoiseSpec::InverseGaussian { .. } => vec![0.0],
            _ => Vec::new(),
        }
    }

    /// Support of a univariate law.
    pub fn support(&self) -> (f64, f64) {
        match self {
            NoiseSpec::Gamma { .. }
            | NoiseSpec::NoncentralChiSq { .. }
            | NoiseSpec::InverseGaussian { .. } => (0.0, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// One draw from a univariate law (per-coordinate law for `ProductLaplace`).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Gaussian { location, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                location + sd * z
            }
            NoiseSpec::GeneralizedLaplace {
                location,
                scale,
                shape,
            } => {
                let g = Gamma::new(shape, 1.0).expect("validated shape");
                location + scale * (g.sample(rng) - g.sample(rng))
            }
            NoiseSpec::Laplace { location, scale } => location + laplace_draw(rng, scale),
            NoiseSpec::ProductLaplace { scale, .. } => laplace_draw(rng, scale),
            NoiseSpec::AsymmetricLaplace {
                location,
                left_scale,
                right_scale,
            } => {
                let side: f64 = rng.random();
                let e = -open_uniform(rng).ln();
                if side < left_scale / (left_scale + right_scale) {
                    location - left_scale * e
                } else {
                    location + right_scale * e
                }
            }
            NoiseSpec::Logistic { location, scale } => {
                let u = open_uniform(rng);
                location + scale * (u / (1.0 - u)).ln()
            }
            NoiseSpec::Gumbel { location, scale } => {
                location - scale * (-open_uniform(rng).ln()).ln()
            }
            NoiseSpec::Cauchy { location, scale } => {
                location + scale * (PI * (open_uniform(rng) - 0.5)).tan()
            }
            NoiseSpec::HyperbolicSecant { location, scale } => {
                location + 2.0 * scale / PI * (0.5 * PI * open_uniform(rng)).tan().ln()
            }
            NoiseSpec::Gamma { shape, scale } => Gamma::new(shape, scale)
                .expect("validated shape")
                .sample(rng),
            NoiseSpec::NoncentralChiSq { df, noncentrality } => {
                let k = if noncentrality > 0.0 {
                    Poisson::new(0.5 * noncentrality)
                        .expect("positive rate")
                        .sample(rng)
                } else {
                    0.0
                };
                Gamma::new(0.5 * df + k, 2.0)
                    .expect("positive shape")
                    .sample(rng)
            }
            NoiseSpec::InverseGaussian { mean, shape } => {
                // Michael, Schucany and Haas (1976).
                let n: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
                let y = n * n;
                let my = mean * y;
                let x = mean + mean * my / (2.0 * shape)
                    - mean / (2.0 * shape) * (4.0 * mean * shape * y + my * my).sqrt();
                let u: f64 = rng.random();
                if u <= mean / (mean + x) {
                    x
                } else {
                    mean * mean / x
                }
            }
            NoiseSpec::MultivariateGaussian { .. } => f64::NAN,
        }
    }
}

fn laplace_draw<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u = open_uniform(rng) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::adaptive_integrate;

    fn all_univariate() -> Vec<NoiseSpec> {
        vec![
            NoiseSpec::Gaussian {
                location: 0.3,
                sd: 1.2,
            },
            NoiseSpec::GeneralizedLaplace {
                location: 0.0,
                scale: 1.0,
                shape: 1.5,
            },
            NoiseSpec::Laplace {
                location: -0.5,
                scale: 0.8,
            },
            NoiseSpec::AsymmetricLaplace {
                location: 0.0,
                left_scale: 1.0,
                right_scale: 2.0,
            },
            NoiseSpec::Logistic {
                location: 0.0,
                scale: 0.7,
            },
            NoiseSpec::Gumbel {
                location: 0.2,
                scale: 1.0,
            },
            NoiseSpec::Cauchy {
                location: 0.0,
                scale: 1.0,
            },
            NoiseSpec::HyperbolicSecant {
                location: 0.0,
                scale: 1.3,
            },
            NoiseSpec::Gamma {
                shape: 2.0,
                scale: 1.0,
            },
            NoiseSpec::NoncentralChiSq {
                df: 4.0,
                noncentrality: 1.5,
            },
            NoiseSpec::InverseGaussian {
                mean: 1.0,
                shape: 2.0,
            },
            NoiseSpec::ProductLaplace { scale: 1.0, dim: 1 },
        ]
    }

    #[test]
    fn densities_integrate_to_one() {
        for n in all_univariate() {
            let (lo, hi) = n.support();
            let r = crate::numerics::integrate_with_breaks(
                |v| n.pdf(v),
                lo,
                hi,
                &n.breakpoints(),
                1e-10,
                1e-10,
            )
            .unwrap();
            assert!(
                (r.value - 1.0).abs() < 1e-7,
                "{}: {}",
                n.family_name(),
                r.value
            );
        }
    }

    #[test]
    fn generalized_laplace_reduces_to_laplace() {
        let gl = NoiseSpec::GeneralizedLaplace {
            location: 0.0,
            scale: 1.7,
            shape: 1.0,
        };
        for &v in &[-3.0f64, -0.4, 0.0, 0.01, 2.5] {
            let lap = (-v.abs() / 1.7).exp() / 3.4;
            assert!((gl.pdf(v) - lap).abs() < 1e-8, "v={v}");
        }
    }

    #[test]
    fn generalized_laplace_is_continuous_at_centre() {
        let gl = NoiseSpec::GeneralizedLaplace {
            location: 0.0,
            scale: 1.0,
            shape: 1.5,
        };
        assert!((gl.pdf(0.0) - gl.pdf(1e-9)).abs() < 1e-7);
        let gl = NoiseSpec::GeneralizedLaplace {
            location: 0.0,
            scale: 1.0,
            shape: 0.8,
        };
        assert!((gl.pdf(0.0) - gl.pdf(1e-9)).abs() < 1e-3);
    }

    #[test]
    fn noncentral_chi_square_without_noncentrality_is_central() {
        let n = NoiseSpec::NoncentralChiSq {
            df: 4.0,
            noncentrality: 0.0,
        };
        for &v in &[0.1f64, 1.0, 3.0, 9.0] {
            let central = v * (-0.5 * v).exp() / 4.0;
            assert!((n.pdf(v) - central).abs() < 1e-14);
        }
    }

    #[test]
    fn smooth_derivatives_match_finite_differences() {
        for n in all_univariate().into_iter().filter(|n| n.is_smooth()) {
            for &v in &[-2.3, -0.6, 0.4, 1.1, 3.2] {
                let d = n.derivs(v, 5).unwrap();
                for (k, &dk) in d.iter().enumerate().skip(1) {
                    let h = 1e-4;
                    let up = n.derivs(v + h, k - 1).unwrap()[k - 1];
                    let dn = n.derivs(v - h, k - 1).unwrap()[k - 1];
                    let fd = (up - dn) / (2.0 * h);
                    assert!(
                        (fd - dk).abs() < 1e-5 * (1.0 + dk.abs()),
                        "{} v={v} k={k}: {fd} vs {dk}",
                        n.family_name()
                    );
                }
            }
        }
    }

    #[test]
    fn laplace_right_derivative() {
        let n = NoiseSpec::Laplace {
            location: 0.0,
            scale: 2.0,
        };
        assert_eq!(n.right_deriv(0.0).unwrap(), -1.0 / 8.0);
        let h = 1e-8;
        let fd = (n.pdf(-1.0 + h) - n.pdf(-1.0)) / h;
        assert!((n.right_deriv(-1.0).unwrap() - fd).abs() < 1e-7);
    }

    #[test]
    fn gumbel_sample_variance() {
        use rand::SeedableRng;
        let n = NoiseSpec::Gumbel {
            location: 0.0,
            scale: 1.5,
        };
        // Variance by quadrature of the density, independent of the closed form.
        let m1 = adaptive_integrate(
            |v| v * n.pdf(v),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-11,
            1e-11,
        )
        .unwrap()
        .value;
        let m2 = adaptive_integrate(
            |v| v * v * n.pdf(v),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-11,
            1e-11,
        )
        .unwrap()
        .value;
        let var_quad = m2 - m1 * m1;
        assert!((var_quad - PI * PI * 2.25 / 6.0).abs() < 1e-8);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let draws: Vec<f64> = (0..1_000_000).map(|_| n.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((var / var_quad - 1.0).abs() < 0.02);
    }
}
