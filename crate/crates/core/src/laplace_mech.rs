//! Functionals under Laplace-mechanism noise: the univariate catalogue and the
//! coordinate-wise mean, covariance and MGF of the product mechanism.
//!
//! Every formula is a point term plus integrals of `f_Y` against the kernel
//! `K(u) = exp(-|u|/b)`, divided by `f_Y(y)`.

use std::cell::{Cell, RefCell};

use nalgebra::{DMatrix, DVector};

use crate::catalog::checked_density;
use crate::densities::DensityModel;
use crate::error::{Result, TweedieError};
use crate::numerics::quad::{integrate_with_breaks, QuadResult};
use crate::types::{EvalResult, FunctionalSpec, Value};

const REL_TOL: f64 = 1e-13;

/// Largest dimension for the product-mechanism mean.
pub const MAX_MEAN_DIM: usize = 5;
/// Largest dimension for the product-mechanism covariance and MGF.
pub const MAX_SECOND_ORDER_DIM: usize = 3;

fn require_scale(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(TweedieError::ParamOutOfRange {
            family: "product_laplace",
            parameter: "scale",
            bound: "a finite positive value",
        })
    }
}

fn check_mgf_domain(b: f64, t: &[f64]) -> Result<()> {
    let t_max = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(t_max < 1.0 / b) {
        return Err(TweedieError::MgfDomain {
            t_max,
            limit: 1.0 / b,
        });
    }
    Ok(())
}

/// Integrals `∫ w(z - y) f(z) dz` over `z > y` and `z < y`, weight already
/// including the kernel.
struct Sides<'a> {
    model: &'a DensityModel,
    y: f64,
    breaks: Vec<f64>,
    itol: f64,
    error: f64,
}

impl<'a> Sides<'a> {
    fn over<W: Fn(f64) -> f64>(&mut self, lo: f64, hi: f64, w: W) -> Result<f64> {
        let (slo, shi) = self.model.support();
        let (lo, hi) = (lo.max(slo), hi.min(shi));
        if lo >= hi {
            return Ok(0.0);
        }
        let y = self.y;
        let r = integrate_with_breaks(
            |z| w(z - y) * self.model.eval(z),
            lo,
            hi,
            &self.breaks,
            self.itol,
            REL_TOL,
        )?;
        self.error += r.error_estimate;
        Ok(r.value)
    }

    fn right<W: Fn(f64) -> f64>(&mut self, w: W) -> Result<f64> {
        self.over(self.y, f64::INFINITY, w)
    }

    fn left<W: Fn(f64) -> f64>(&mut self, w: W) -> Result<f64> {
        self.over(f64::NEG_INFINITY, self.y, w)
    }
}

/// A univariate functional under Laplace(0, b) noise. Pinball levels in the
/// closed interval `[0, 1]` are accepted.
pub fn lm_functional_1d(
    b: f64,
    model: &DensityModel,
    y: f64,
    fspec: &FunctionalSpec,
    tol: f64,
) -> Result<EvalResult> {
    use FunctionalSpec as F;
    require_scale(b)?;
    if model.dim() != 1 {
        return Err(TweedieError::DimensionMismatch {
            expected: 1,
            found: model.dim(),
        });
    }
    if !(tol > 0.0) {
        return Err(TweedieError::DomainError(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let f = checked_density(model, y)?;
    let threshold = match fspec {
        F::Cdf { threshold }
        | F::SquaredRisk { threshold }
        | F::HingeLoss { threshold }
        | F::AbsoluteRisk { threshold }
        | F::PinballLoss { threshold, .. } => Some(*threshold),
        _ => None,
    };
    let mut breaks = model.breakpoints();
    breaks.push(y);
    if let Some(a) = threshold {
        if !a.is_finite() {
            return Err(TweedieError::DomainError("threshold must be finite".into()));
        }
        breaks.push(a);
    }
    let mut s = Sides {
        model,
        y,
        breaks,
        itol: (0.25 * tol * f).max(f64::MIN_POSITIVE),
        error: 0.0,
    };
    let k = |u: f64| (-u.abs() / b).exp();
    let first = |s: &mut Sides| -> Result<(f64, f64)> { Ok((s.right(k)?, s.left(k)?)) };
    let second = |s: &mut Sides| -> Result<f64> {
        let w = |u: f64| (2.0 * u.abs() - b) * k(u);
        Ok(s.right(w)? + s.left(w)?)
    };
    // Integral of `K f` between y and a.
    let mid = |s: &mut Sides, a: f64| -> Result<f64> { s.over(y.min(a), y.max(a), k) };

    let (value, scale) = match fspec {
        F::Mean => {
            let (ap, am) = first(&mut s)?;
            (y + (ap - am) / f, 1.0)
        }
        F::SecondMoment => {
            let (ap, am) = first(&mut s)?;
            let m2 = second(&mut s)?;
            (
                y * y + 2.0 * y * (ap - am) / f + m2 / f,
                1.0 + 2.0 * y.abs(),
            )
        }
        F::Variance => {
            let (ap, am) = first(&mut s)?;
            let m1 = (ap - am) / f;
            let m2 = second(&mut s)?;
            (m2 / f - m1 * m1, 1.0 + 2.0 * m1.abs())
        }
        F::SquaredRisk { threshold } => {
            let c = y - threshold;
            let (ap, am) = first(&mut s)?;
            let m2 = second(&mut s)?;
            (
                c * c + 2.0 * c * (ap - am) / f + m2 / f,
                1.0 + 2.0 * c.abs(),
            )
        }
        F::Mgf { argument } => {
            let t = argument.scalar().ok_or(TweedieError::DimensionMismatch {
                expected: 1,
                found: argument.dim(),
            })?;
            check_mgf_domain(b, &[t])?;
            let c = 0.5 * b * t * t;
            let r = s.right(|u| (t * u - u.abs() / b).exp() * (t - c))?;
            let l = s.left(|u| (t * u - u.abs() / b).exp() * (-t - c))?;
            let e = (t * y).exp();
            (e * (1.0 + (r + l) / f), e)
        }
        F::Cdf { threshold } => {
            let a = *threshold;
            let fa = model.eval(a);
            let da = model.right_deriv(a)?;
            let v = if a <= y {
                (-(y - a) / b).exp() * (fa - b * da) / (2.0 * f)
            } else {
                1.0 - (-(a - y) / b).exp() * (fa + b * da) / (2.0 * f)
            };
            (v, 1.0)
        }
        F::HingeLoss { threshold } => {
            let a = *threshold;
            let ap = s.right(k)?;
            let m = mid(&mut s, a)?;
            let edge = 0.5 * b * (-(y - a).abs() / b).exp() * model.eval(a);
            ((y - a).max(0.0) + (ap - m - edge) / f, 1.0)
        }
        F::PinballLoss {
            threshold,
            quantile_level,
        } => {
            let (a, tau) = (*threshold, *quantile_level);
            if !(0.0..=1.0).contains(&tau) {
                return Err(TweedieError::DomainError(format!(
                    "pinball quantile level {tau} must lie in [0, 1]"
                )));
            }
            let (ap, am) = first(&mut s)?;
            let m = mid(&mut s, a)?;
            let edge = 0.5 * b * (-(y - a).abs() / b).exp() * model.eval(a);
            let point = tau * (y - a).max(0.0) + (1.0 - tau) * (a - y).max(0.0);
            (point + (tau * ap + (1.0 - tau) * am - m - edge) / f, 1.0)
        }
        F::AbsoluteRisk { threshold } => {
            let a = *threshold;
            let (ap, am) = first(&mut s)?;
            let m = mid(&mut s, a)?;
            let edge = b * (-(y - a).abs() / b).exp() * model.eval(a);
            ((y - a).abs() + (ap + am - 2.0 * m - edge) / f, 2.0)
        }
        F::RawMoment { .. } | F::CenteredMoment { .. } | F::EvenRisk { .. } => {
            return Err(TweedieError::Unsupported {
                family: "product_laplace".into(),
                target: fspec.label(),
            })
        }
    };
    Ok(EvalResult::scalar(value, f, scale * s.error / f))
}

/// Weight along one axis of a nested integral, kernel included.
struct AxisWeight<'a> {
    axis: usize,
    weight: &'a dyn Fn(f64) -> f64,
    l1: f64,
}

fn weight_l1(w: &dyn Fn(f64) -> f64, scale: f64) -> Result<f64> {
    Ok(integrate_with_breaks(
        |u| w(u).abs(),
        f64::NEG_INFINITY,
        f64::INFINITY,
        &[0.0],
        1e-10 * scale,
        1e-8,
    )?
    .value)
}

/// `∫ Π_i w_i(u_i) f(point + Σ_i u_i e_{axis_i}) du`, one adaptive level per axis.
fn nested(
    model: &DensityModel,
    point: &[f64],
    axes: &[AxisWeight],
    tol: f64,
) -> Result<QuadResult> {
    let Some((head, rest)) = axes.split_first() else {
        return Ok(QuadResult {
            value: model.eval_point(point),
            error_estimate: 0.0,
            evaluations: 1,
        });
    };
    let j = head.axis;
    let (outer_tol, inner_tol) = if rest.is_empty() {
        (tol, 0.0)
    } else {
        let t = tol / std::f64::consts::SQRT_2;
        (
            t,
            (t / head.l1.max(f64::MIN_POSITIVE)).max(f64::MIN_POSITIVE),
        )
    };
    let failure: RefCell<Option<TweedieError>> = RefCell::new(None);
    let inner_error = Cell::new(0.0f64);
    let integrand = |u: f64| {
        let w = (head.weight)(u);
        if w == 0.0 || failure.borrow().is_some() {
            return 0.0;
        }
        let mut p = point.to_vec();
        p[j] += u;
        match nested(model, &p, rest, inner_tol) {
            Ok(r) => {
                inner_error.set(inner_error.get().max(r.error_estimate));
                w * r.value
            }
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                0.0
            }
        }
    };
    let mut breaks: Vec<f64> = model
        .axis_breakpoints(j)
        .iter()
        .map(|x| x - point[j])
        .collect();
    breaks.push(0.0);
    let r = integrate_with_breaks(
        integrand,
        f64::NEG_INFINITY,
        f64::INFINITY,
        &breaks,
        outer_tol.max(f64::MIN_POSITIVE),
        REL_TOL,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(QuadResult {
        error_estimate: r.error_estimate + inner_error.get() * head.l1,
        ..r
    })
}

fn check_point(model: &DensityModel, y: &[f64], max_dim: usize, what: &str) -> Result<f64> {
    if model.dim() != y.len() {
        return Err(TweedieError::DimensionMismatch {
            expected: model.dim(),
            found: y.len(),
        });
    }
    if y.len() > max_dim {
        return Err(TweedieError::Unsupported {
            family: "product_laplace".into(),
            target: format!("{what} in dimension {}", y.len()),
        });
    }
    let f = model.eval_point(y);
    if f.is_finite() && f >= crate::catalog::DENSITY_FLOOR {
        Ok(f)
    } else {
        Err(TweedieError::DensityTooSmall { density: f })
    }
}

/// `I_j = ∫ sgn(u) K(u) f(y + u e_j) du` for every axis.
fn first_moments(b: f64, model: &DensityModel, y: &[f64], itol: f64) -> Result<(Vec<f64>, f64)> {
    let w = move |u: f64| u.signum() * (-u.abs() / b).exp();
    let mut out = Vec::with_capacity(y.len());
    let mut error = 0.0;
    for j in 0..y.len() {
        let r = nested(
            model,
            y,
            &[AxisWeight {
                axis: j,
                weight: &w,
                l1: 2.0 * b,
            }],
            itol,
        )?;
        error += r.error_estimate;
        out.push(r.value);
    }
    Ok((out, error))
}

/// Posterior mean vector under product Laplace(b) noise, `d ≤ 5`.
pub fn lm_mean_vec(b: f64, model: &DensityModel, y: &[f64], tol: f64) -> Result<EvalResult> {
    require_scale(b)?;
    let f = check_point(model, y, MAX_MEAN_DIM, "mean")?;
    let (i, error) = first_moments(b, model, y, (0.25 * tol * f).max(f64::MIN_POSITIVE))?;
    let mean = DVector::from_iterator(y.len(), y.iter().zip(&i).map(|(yj, ij)| yj + ij / f));
    Ok(EvalResult {
        value: Value::from_vector(&mean),
        density_at_point: f,
        quadrature_error_estimate: error / f,
        series_terms_used: 0,
        converged: true,
    })
}

/// Posterior covariance matrix under product Laplace(b) noise, `d ≤ 3`.
pub fn lm_cov(b: f64, model: &DensityModel, y: &[f64], tol: f64) -> Result<EvalResult> {
    require_scale(b)?;
    let d = y.len();
    let f = check_point(model, y, MAX_SECOND_ORDER_DIM, "covariance")?;
    let itol = (0.1 * tol * f).max(f64::MIN_POSITIVE);
    let (i, mut error) = first_moments(b, model, y, itol)?;
    let sgn = move |u: f64| u.signum() * (-u.abs() / b).exp();
    let sq = move |u: f64| (2.0 * u.abs() - b) * (-u.abs() / b).exp();
    let sq_l1 = weight_l1(&sq, b * b)?;
    let mut cov = DMatrix::zeros(d, d);
    for j in 0..d {
        let m2 = nested(
            model,
            y,
            &[AxisWeight {
                axis: j,
                weight: &sq,
                l1: sq_l1,
            }],
            itol,
        )?;
        error += m2.error_estimate;
        cov[(j, j)] = m2.value / f - (i[j] / f).powi(2);
        for k in j + 1..d {
            let axes = [
                AxisWeight {
                    axis: j,
                    weight: &sgn,
                    l1: 2.0 * b,
                },
                AxisWeight {
                    axis: k,
                    weight: &sgn,
                    l1: 2.0 * b,
                },
            ];
            let jk = nested(model, y, &axes, itol)?;
            error += jk.error_estimate;
            let c = jk.value / f - (i[j] / f) * (i[k] / f);
            cov[(j, k)] = c;
            cov[(k, j)] = c;
        }
    }
    let scale = 1.0 + 2.0 * i.iter().fold(0.0f64, |m, v| m.max((v / f).abs()));
    Ok(EvalResult {
        value: Value::from_matrix(&cov),
        density_at_point: f,
        quadrature_error_estimate: scale * error / f,
        series_terms_used: 0,
        converged: true,
    })
}

/// Posterior MGF `E[exp(t·X) | y]` under product Laplace(b) noise, `d ≤ 3`.
/// Expands the product of per-axis operators into a sum over axis subsets.
pub fn lm_mgf(b: f64, model: &DensityModel, y: &[f64], t: &[f64], tol: f64) -> Result<EvalResult> {
    require_scale(b)?;
    if t.len() != y.len() {
        return Err(TweedieError::DimensionMismatch {
            expected: y.len(),
            found: t.len(),
        });
    }
    let f = check_point(model, y, MAX_SECOND_ORDER_DIM, "mgf")?;
    check_mgf_domain(b, t)?;
    let d = y.len();
    let weights: Vec<Box<dyn Fn(f64) -> f64>> = t
        .iter()
        .map(|&tj| {
            let c = 0.5 * b * tj * tj;
            Box::new(move |u: f64| (tj * u - u.abs() / b).exp() * (tj * u.signum() - c))
                as Box<dyn Fn(f64) -> f64>
        })
        .collect();
    let mut l1 = Vec::with_capacity(d);
    for w in &weights {
        l1.push(weight_l1(w.as_ref(), 1.0)?);
    }
    let active: Vec<usize> = (0..d).filter(|&j| t[j] != 0.0).collect();
    let subsets = 1usize << active.len();
    let itol = (0.25 * tol * f / subsets as f64).max(f64::MIN_POSITIVE);
    let mut total = f;
    let mut error = 0.0;
    for mask in 1..subsets {
        let axes: Vec<AxisWeight> = active
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &j)| AxisWeight {
                axis: j,
                weight: weights[j].as_ref(),
                l1: l1[j],
            })
            .collect();
        let r = nested(model, y, &axes, itol)?;
        total += r.value;
        error += r.error_estimate;
    }
    let e = t.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().exp();
    Ok(EvalResult {
        value: Value::Scalar(e * total / f),
        density_at_point: f,
        quadrature_error_estimate: e * error / f,
        series_terms_used: 0,
        converged: true,
    })
}
