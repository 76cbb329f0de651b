//! Standard normal helpers, probabilists' Hermite polynomials and the
//! derivatives of the normal distribution function.

use std::f64::consts::SQRT_2;

use statrs::function::erf::erfc;

use crate::error::{Result, TweedieError};

/// Highest Hermite / Φ-derivative order exposed through the checked API.
pub const K_MAX: usize = 80;

/// Euler–Mascheroni constant to 20 significant digits.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Fills `out[k] = He_k(x)` for `k = 0..out.len()`.
pub fn hermite_sequence(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 1..out.len().saturating_sub(1) {
        out[k + 1] = x * out[k] - k as f64 * out[k - 1];
    }
}

fn check_order(k: usize, max: usize) -> Result<()> {
    if k > max {
        return Err(TweedieError::DomainError(format!(
            "order {k} exceeds the supported maximum {max}"
        )));
    }
    Ok(())
}

/// He_k(x) via the three-term recurrence.
pub fn hermite_he(k: usize, x: f64) -> Result<f64> {
    check_order(k, K_MAX)?;
    let mut buf = vec![0.0; k + 1];
    hermite_sequence(x, &mut buf);
    Ok(buf[k])
}

/// k-th derivative of the standard normal distribution function.
pub fn phi_deriv(k: usize, x: f64) -> Result<f64> {
    check_order(k, K_MAX + 1)?;
    if k == 0 {
        return Ok(norm_cdf(x));
    }
    let mut buf = vec![0.0; k];
    hermite_sequence(x, &mut buf);
    let sign = if (k - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(sign * buf[k - 1] * norm_pdf(x))
}

/// All derivatives `Φ^{(0)}(x), …, Φ^{(kmax)}(x)`.
pub fn phi_derivs(x: f64, kmax: usize) -> Vec<f64> {
    let mut he = vec![0.0; kmax.max(1)];
    hermite_sequence(x, &mut he);
    let pdf = norm_pdf(x);
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(norm_cdf(x));
    for k in 1..=kmax {
        let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
        out.push(sign * he[k - 1] * pdf);
    }
    out
}

/// Derivatives of the N(0, variance) density at `u`, orders `0..=kmax`.
pub fn gaussian_density_derivs(u: f64, variance: f64, kmax: usize, out: &mut [f64]) {
    let sd = variance.sqrt();
    let z = u / sd;
    let base = norm_pdf(z) / sd;
    hermite_sequence(z, &mut out[..=kmax]);
    let mut scale = base;
    for (k, v) in out[..=kmax].iter_mut().enumerate() {
        *v *= if k % 2 == 0 { scale } else { -scale };
        scale /= sd;
    }
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Standard Cauchy-type kernel helper: `Im[(x - i)^{-(k+1)}]`.
pub(crate) fn cauchy_im_power(x: f64, k: usize) -> f64 {
    let r = x.hypot(1.0);
    let angle = (-1.0f64).atan2(x);
    let p = (k + 1) as f64;
    -(r.powf(-p)) * (p * angle).sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn hermite_small_orders() {
        assert_eq!(hermite_he(0, 3.7).unwrap(), 1.0);
        assert_eq!(hermite_he(1, 2.0).unwrap(), 2.0);
        assert_eq!(hermite_he(2, 2.0).unwrap(), 3.0);
        assert_abs_diff_eq!(
            hermite_he(3, 1.5).unwrap(),
            1.5f64.powi(3) - 4.5,
            epsilon = 1e-14
        );
        assert!(hermite_he(K_MAX + 1, 0.0).is_err());
    }

    #[test]
    fn phi_deriv_at_origin() {
        assert_abs_diff_eq!(phi_deriv(0, 0.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(phi_deriv(1, 0.0).unwrap(), 0.398_942_28, epsilon = 1e-8);
        assert_abs_diff_eq!(phi_deriv(2, 0.0).unwrap(), 0.0, epsilon = 1e-15);
        assert!(phi_deriv(K_MAX + 2, 0.0).is_err());
    }

    #[test]
    fn phi_derivs_agrees_with_pointwise() {
        let all = phi_derivs(0.7, 10);
        for (k, v) in all.iter().enumerate() {
            assert_abs_diff_eq!(*v, phi_deriv(k, 0.7).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn phi_deriv_central_differences() {
        let h = 1e-4;
        for k in 0..=6 {
            for i in 0..=12 {
                let x = -3.0 + 0.5 * i as f64;
                let fd = (phi_deriv(k, x + h).unwrap() - phi_deriv(k, x - h).unwrap()) / (2.0 * h);
                let exact = phi_deriv(k + 1, x).unwrap();
                // O(h^2) with a generous constant for the higher orders.
                assert!(
                    (fd - exact).abs() < 50.0 * h * h,
                    "k={k} x={x}: {fd} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn hermite_matches_rodrigues_by_finite_differences() {
        // He_k(x) e^{-x²/2} = (-1)^k d^k/dx^k e^{-x²/2}; k-fold central differences
        // at steps h and 2h, combined by one Richardson step.
        let g = |x: f64| (-0.5 * x * x).exp();
        let kfold = |k: usize, x: f64, h: f64| {
            let mut fd = 0.0;
            for j in 0..=k {
                let c = binomial(k, j) * if j % 2 == 0 { 1.0 } else { -1.0 };
                fd += c * g(x + (k as f64 / 2.0 - j as f64) * h);
            }
            fd / h.powi(k as i32)
        };
        let h: f64 = 1e-2;
        for k in 0..=5usize {
            for &x in &[-1.3, -0.2, 0.0, 0.8, 1.9] {
                let fd = (4.0 * kfold(k, x, h) - kfold(k, x, 2.0 * h)) / 3.0;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let rodrigues = sign * fd / g(x);
                let he = hermite_he(k, x).unwrap();
                assert!(
                    (rodrigues - he).abs() < 1e-4 * (1.0 + he.abs()),
                    "k={k} x={x}: {rodrigues} vs {he}"
                );
            }
        }
    }

    #[test]
    fn gaussian_derivs_match_closed_forms() {
        let mut out = [0.0; 3];
        gaussian_density_derivs(0.5, 2.0, 2, &mut out);
        let v = 2.0f64;
        let dens = (-0.25f64 / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        assert_abs_diff_eq!(out[0], dens, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], -0.5 / v * dens, epsilon = 1e-15);
        assert_abs_diff_eq!(out[2], (0.25 / (v * v) - 1.0 / v) * dens, epsilon = 1e-15);
    }

    #[test]
    fn cauchy_power_matches_direct() {
        // Im[(x - i)^{-1}] = 1 / (1 + x^2)
        for &x in &[-2.0, 0.0, 0.3, 5.0] {
            assert_abs_diff_eq!(cauchy_im_power(x, 0), 1.0 / (1.0 + x * x), epsilon = 1e-15);
        }
    }
}
