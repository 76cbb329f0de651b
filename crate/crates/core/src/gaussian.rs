//! Gaussian-noise functionals: moments, MGF, the posterior CDF and risk
//! series, the multivariate mean/covariance/MGF and heteroskedastic conditioning.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::catalog::DENSITY_FLOOR;
use crate::densities::{exact_density, DensityModel};
use crate::error::{Result, TweedieError};
use crate::numerics::special::{binomial, factorial, norm_cdf, norm_pdf, phi_derivs, K_MAX};
use crate::types::{
    normalize_weights, Atom, EvalResult, FunctionalSpec, NoiseSpec, Point, PriorSpec, Spread,
    Value, MAX_EVEN_RISK_POWER, MAX_MOMENT_ORDER,
};

/// Largest magnitude of the last few series terms tolerated before the
/// partial sums are declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e-2;

/// Number of trailing terms inspected by the tail diagnostic.
const TAIL_TERMS: usize = 5;

/// Truncation and limit schedule of the CDF and risk series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub truncation: usize,
    pub n_schedule: Vec<f64>,
    pub tol: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            truncation: 60,
            n_schedule: vec![1e2, 1e3, 1e4],
            tol: 1e-5,
        }
    }
}

/// `H_n(a, σ²) = Σ_j n! / (2^j j! (n-2j)!) σ^{2j} a^{n-2j}`, the n-th raw moment of N(a, σ²).
pub fn gaussian_raw_moment(n: usize, a: f64, sigma2: f64) -> f64 {
    (0..=n / 2)
        .map(|j| {
            factorial(n) / (2f64.powi(j as i32) * factorial(j) * factorial(n - 2 * j))
                * sigma2.powi(j as i32)
                * a.powi((n - 2 * j) as i32)
        })
        .sum()
}

/// `Σ_r C(k, r) σ^{2r} H_{k-r}(centre, σ²) f^{(r)}/f`.
fn shifted_moment(k: usize, centre: f64, sigma2: f64, ratios: &[f64]) -> f64 {
    (0..=k)
        .map(|r| {
            binomial(k, r)
                * sigma2.powi(r as i32)
                * gaussian_raw_moment(k - r, centre, sigma2)
                * ratios[r]
        })
        .sum()
}

fn check_density(f: f64) -> Result<()> {
    if f.is_finite() && f >= DENSITY_FLOOR {
        Ok(())
    } else {
        Err(TweedieError::DensityTooSmall { density: f })
    }
}

fn require_positive_variance(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(TweedieError::DomainError(format!(
            "noise variance {sigma2} must be positive"
        )))
    }
}

/// A functional under N(0, σ²) noise with the default series options.
pub fn gauss_functional(
    sigma2: f64,
    model: &DensityModel,
    y: f64,
    fspec: &FunctionalSpec,
) -> Result<EvalResult> {
    gauss_functional_with(sigma2, model, y, fspec, &SeriesOptions::default())
}

/// A functional under N(0, σ²) noise.
pub fn gauss_functional_with(
    sigma2: f64,
    model: &DensityModel,
    y: f64,
    fspec: &FunctionalSpec,
    series: &SeriesOptions,
) -> Result<EvalResult> {
    use FunctionalSpec as F;
    require_positive_variance(sigma2)?;
    let unsupported = || TweedieError::Unsupported {
        family: "gaussian".into(),
        target: fspec.label(),
    };
    let order = match fspec {
        F::Mean => 1,
        F::SecondMoment | F::Variance | F::SquaredRisk { .. } => 2,
        F::RawMoment { order } | F::CenteredMoment { order } => {
            if *order > MAX_MOMENT_ORDER {
                return Err(unsupported());
            }
            (*order).max(1)
        }
        F::EvenRisk { half_power, .. } => {
            if *half_power > MAX_EVEN_RISK_POWER {
                return Err(unsupported());
            }
            2 * half_power
        }
        F::Mgf { .. } => 0,
        F::Cdf { threshold } => return gauss_cdf(sigma2, model, y, *threshold, series),
        F::HingeLoss { threshold } => {
            return gauss_hinge_abs(sigma2, model, y, *threshold, RiskKind::Hinge, series)
        }
        F::AbsoluteRisk { threshold } => {
            return gauss_hinge_abs(sigma2, model, y, *threshold, RiskKind::Absolute, series)
        }
        F::PinballLoss {
            threshold,
            quantile_level,
        } => {
            // E ρ_τ(X - a) = τ E(X - a)₊ + (1 - τ) E(a - X)₊ and E(a - X)₊ = E(X - a)₊ - (E X - a).
            let hinge = gauss_hinge_abs(sigma2, model, y, *threshold, RiskKind::Hinge, series)?;
            let mean = gauss_functional_with(sigma2, model, y, &F::Mean, series)?;
            let h = hinge.value_f64();
            let value =
                quantile_level * h + (1.0 - quantile_level) * (h - (mean.value_f64() - threshold));
            return Ok(EvalResult {
                value: Value::Scalar(value),
                ..hinge
            });
        }
    };
    let (f, ratios) = model.ratios(y, order)?;
    check_density(f)?;
    let value = match fspec {
        F::Mean => y + sigma2 * ratios[1],
        F::SecondMoment => shifted_moment(2, y, sigma2, &ratios),
        F::Variance => sigma2 + sigma2 * sigma2 * (ratios[2] - ratios[1] * ratios[1]),
        F::RawMoment { order } => shifted_moment(*order, y, sigma2, &ratios),
        F::CenteredMoment { order } => {
            let kappa = y + sigma2 * ratios[1];
            shifted_moment(*order, y - kappa, sigma2, &ratios)
        }
        F::SquaredRisk { threshold } => shifted_moment(2, y - threshold, sigma2, &ratios),
        F::EvenRisk {
            threshold,
            half_power,
        } => shifted_moment(2 * half_power, y - threshold, sigma2, &ratios),
        F::Mgf { argument } => {
            let t = argument.scalar().ok_or(TweedieError::DimensionMismatch {
                expected: 1,
                found: argument.dim(),
            })?;
            let (here, shifted) = (model.eval(y), model.eval(y + sigma2 * t));
            if shifted > 0.0 {
                (t * y + 0.5 * sigma2 * t * t + shifted.ln() - here.ln()).exp()
            } else {
                0.0
            }
        }
        _ => unreachable!("handled above"),
    };
    Ok(EvalResult::scalar(value, f, 0.0))
}

/// Neville extrapolation of `(h_i, v_i)` to `h = 0`.
fn extrapolate_to_zero(h: &[f64], v: &[f64]) -> f64 {
    let mut p = v.to_vec();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            p[i] = (h[i + level] * p[i] - h[i] * p[i + 1]) / (h[i + level] - h[i]);
        }
    }
    p[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskKind {
    Hinge,
    Absolute,
}

/// What the series evaluator sums at one `n`.
#[derive(Clone, Copy)]
enum SeriesKind {
    Cdf,
    Risk,
}

/// Value at one `n` and the magnitude of its trailing terms.
fn series_at(
    sigma2: f64,
    y: f64,
    a: f64,
    ratios: &[f64],
    n: f64,
    truncation: usize,
    kind: SeriesKind,
) -> (f64, f64) {
    let sd_n = (sigma2 + n.powi(-2)).sqrt();
    let c = sigma2 / sd_n;
    let q_n = (a + n.powf(-0.5) - y) / sd_n;
    let phi = phi_derivs(q_n, truncation);
    let mut terms = Vec::with_capacity(truncation + 1);
    let mut coef = 1.0;
    for k in 0..=truncation {
        if k > 0 {
            coef *= -c / k as f64;
        }
        let term = match kind {
            SeriesKind::Cdf => coef * phi[k] * ratios[k],
            SeriesKind::Risk if k < 2 => 0.0,
            SeriesKind::Risk => coef * sd_n * phi[k - 1] * ratios[k],
        };
        terms.push(term);
    }
    let sum: f64 = terms.iter().sum();
    let tail = terms[terms.len().saturating_sub(TAIL_TERMS)..]
        .iter()
        .fold(0.0f64, |m, t| {
            if t.is_finite() {
                m.max(t.abs())
            } else {
                f64::INFINITY
            }
        });
    (sum, tail)
}

/// Runs the series along the schedule and extrapolates to the limit.
fn series_limit(
    sigma2: f64,
    model: &DensityModel,
    y: f64,
    a: f64,
    kind: SeriesKind,
    opts: &SeriesOptions,
) -> Result<(f64, f64, EvalResult)> {
    require_positive_variance(sigma2)?;
    if !a.is_finite() {
        return Err(TweedieError::DomainError("threshold must be finite".into()));
    }
    let k = opts.truncation;
    if !(2..=K_MAX).contains(&k) {
        return Err(TweedieError::DomainError(format!(
            "series truncation {k} outside [2, {K_MAX}]"
        )));
    }
    if opts.n_schedule.is_empty() || opts.n_schedule.iter().any(|n| !(*n > 0.0)) {
        return Err(TweedieError::DomainError(
            "n_schedule must hold positive values".into(),
        ));
    }
    let (f, ratios) = model.ratios(y, k)?;
    check_density(f)?;
    let mut schedule = opts.n_schedule.clone();
    schedule.sort_by(f64::total_cmp);
    let hs: Vec<f64> = schedule.iter().map(|n| n.powf(-0.5)).collect();
    let mut values = Vec::with_capacity(schedule.len());
    let mut last_tail = 0.0;
    for n in &schedule {
        let (v, tail) = series_at(sigma2, y, a, &ratios, *n, k, kind);
        values.push(v);
        last_tail = tail;
    }
    if !last_tail.is_finite() || last_tail > DIVERGENCE_THRESHOLD {
        return Err(TweedieError::SeriesDivergence { tail: last_tail });
    }
    let full = extrapolate_to_zero(&hs, &values);
    let disagreement = if values.len() > 1 {
        (full - extrapolate_to_zero(&hs[1..], &values[1..])).abs()
    } else {
        0.0
    };
    let converged = full.is_finite() && disagreement < 10.0 * opts.tol && last_tail <= opts.tol;
    let result = EvalResult {
        value: Value::Scalar(full),
        density_at_point: f,
        quadrature_error_estimate: disagreement,
        series_terms_used: k + 1,
        converged,
    };
    Ok((f, ratios[1], result))
}

/// Posterior CDF `P(X ≤ a | Y = y)` under N(0, σ²) noise.
pub fn gauss_cdf(
    sigma2: f64,
    model: &DensityModel,
    y: f64,
    a: f64,
    opts: &SeriesOptions,
) -> Result<EvalResult> {
    series_limit(sigma2, model, y, a, SeriesKind::Cdf, opts).map(|(_, _, r)| r)
}

/// Posterior hinge risk `E[(X - a)₊]` or absolute risk `E|X - a|`.
pub fn gauss_hinge_abs(
    sigma2: f64,
    model: &DensityModel,
    y: f64,
    a: f64,
    kind: RiskKind,
    opts: &SeriesOptions,
) -> Result<EvalResult> {
    let (_, r1, mut result) = series_limit(sigma2, model, y, a, SeriesKind::Risk, opts)?;
    let correction = result.value_f64();
    let sigma = sigma2.sqrt();
    let q = (a - y) / sigma;
    let (pdf, cdf) = (norm_pdf(q), norm_cdf(q));
    let value = match kind {
        RiskKind::Hinge => {
            sigma * pdf + (y - a) * (1.0 - cdf) + sigma2 * (1.0 - cdf) * r1 + correction
        }
        RiskKind::Absolute => {
            2.0 * sigma * pdf
                + (a - y) * (2.0 * cdf - 1.0)
                + sigma2 * (1.0 - 2.0 * cdf) * r1
                + 2.0 * correction
        }
    };
    if kind == RiskKind::Absolute {
        result.quadrature_error_estimate *= 2.0;
    }
    result.value = Value::Scalar(value);
    Ok(result)
}

/// Target of [`gauss_multivariate`].
#[derive(Debug, Clone, PartialEq)]
pub enum MvTarget {
    Mean,
    Cov,
    Mgf(Vec<f64>),
}

/// Mean, covariance or MGF under N(0, Σ₀) noise in `d ≤ 5` dimensions.
pub fn gauss_multivariate(
    sigma0: &DMatrix<f64>,
    model: &DensityModel,
    y: &[f64],
    which: &MvTarget,
) -> Result<EvalResult> {
    let d = y.len();
    if sigma0.nrows() != d || sigma0.ncols() != d || model.dim() != d {
        return Err(TweedieError::DimensionMismatch {
            expected: d,
            found: sigma0.nrows().max(model.dim()),
        });
    }
    if d > 5 {
        return Err(TweedieError::Unsupported {
            family: "multivariate_gaussian".into(),
            target: format!("dimension {d}"),
        });
    }
    let (log_f, grad, hess) = model.log_derivatives(y)?;
    let f = log_f.exp();
    check_density(f)?;
    let yv = DVector::from_column_slice(y);
    let value = match which {
        MvTarget::Mean => Value::from_vector(&(&yv + sigma0 * grad)),
        MvTarget::Cov => {
            let c = sigma0 + sigma0 * hess * sigma0;
            Value::from_matrix(&((&c + c.transpose()) * 0.5))
        }
        MvTarget::Mgf(t) => {
            if t.len() != d {
                return Err(TweedieError::DimensionMismatch {
                    expected: d,
                    found: t.len(),
                });
            }
            let tv = DVector::from_column_slice(t);
            let shift = sigma0 * &tv;
            let shifted: Vec<f64> = (&yv + &shift).iter().copied().collect();
            let log_ratio = model.log_eval_point(&shifted) - log_f;
            Value::Scalar((tv.dot(&yv) + 0.5 * tv.dot(&shift) + log_ratio).exp())
        }
    };
    Ok(EvalResult {
        converged: value.is_finite(),
        value,
        density_at_point: f,
        quadrature_error_estimate: 0.0,
        series_terms_used: 0,
    })
}

/// One atom of an atomic joint law of `(X, Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroAtom {
    pub location: Point,
    pub variance: Spread,
    pub weight: f64,
}

/// Atomic joint law of the latent mean and its noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroJointSpec {
    pub atoms: Vec<HeteroAtom>,
}

impl HeteroJointSpec {
    /// Univariate joint from `(x, σ², weight)` triples.
    pub fn univariate(atoms: &[(f64, f64, f64)]) -> HeteroJointSpec {
        HeteroJointSpec {
            atoms: atoms
                .iter()
                .map(|&(x, v, w)| HeteroAtom {
                    location: Point(vec![x]),
                    variance: Spread::Scalar(v),
                    weight: w,
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.atoms.first().map_or(1, |a| a.location.dim())
    }

    /// Distinct variance values, in order of first appearance.
    pub fn variances(&self) -> Vec<Spread> {
        let mut out: Vec<Spread> = Vec::new();
        for a in &self.atoms {
            if !out.iter().any(|s| same_spread(s, &a.variance, self.dim())) {
                out.push(a.variance.clone());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<HeteroJointSpec> {
        if self.atoms.is_empty() {
            return Err(TweedieError::InvalidPrior("joint law has no atoms".into()));
        }
        let weights: Vec<f64> = self.atoms.iter().map(|a| a.weight).collect();
        let weights = normalize_weights(&weights)?;
        let d = self.dim();
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (a, w) in self.atoms.iter().zip(weights) {
            if a.location.dim() != d {
                return Err(TweedieError::DimensionMismatch {
                    expected: d,
                    found: a.location.dim(),
                });
            }
            let m = a.variance.to_matrix(d);
            let rows: Vec<Vec<f64>> = (0..d)
                .map(|i| (0..d).map(|j| m[(i, j)]).collect())
                .collect();
            crate::types::check_spd(&rows, d)
                .map_err(|e| TweedieError::InvalidPrior(format!("noise covariance {e}")))?;
            atoms.push(HeteroAtom {
                weight: w,
                ..a.clone()
            });
        }
        Ok(HeteroJointSpec { atoms })
    }
}

fn same_spread(a: &Spread, b: &Spread, d: usize) -> bool {
    let (ma, mb) = (a.to_matrix(d), b.to_matrix(d));
    ma.iter()
        .zip(mb.iter())
        .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300))
}

/// Gaussian noise law with the given variance or covariance.
pub fn gaussian_noise(variance: &Spread, d: usize) -> NoiseSpec {
    match variance {
        Spread::Scalar(v) if d == 1 => NoiseSpec::Gaussian {
            location: 0.0,
            sd: v.sqrt(),
        },
        _ => {
            let m = variance.to_matrix(d);
            NoiseSpec::MultivariateGaussian {
                covariance: (0..d)
                    .map(|i| (0..d).map(|j| m[(i, j)]).collect())
                    .collect(),
            }
        }
    }
}

/// Conditional density of `Y | Σ = σ₀²` and the conditional prior of `X`.
pub fn hetero_condition(
    joint: &HeteroJointSpec,
    sigma0: &Spread,
) -> Result<(DensityModel, PriorSpec)> {
    let joint = joint.validate()?;
    let d = joint.dim();
    let mut atoms: Vec<Atom> = Vec::new();
    for a in joint
        .atoms
        .iter()
        .filter(|a| same_spread(&a.variance, sigma0, d))
    {
        match atoms.iter_mut().find(|b| b.location == a.location) {
            Some(b) => b.weight += a.weight,
            None => atoms.push(Atom {
                location: a.location.clone(),
                weight: a.weight,
            }),
        }
    }
    let mass: f64 = atoms.iter().map(|a| a.weight).sum();
    if atoms.is_empty() || !(mass > 0.0) {
        return Err(TweedieError::NoMass);
    }
    for a in &mut atoms {
        a.weight /= mass;
    }
    let prior = PriorSpec::Atomic { atoms };
    let model = exact_density(&prior, &gaussian_noise(sigma0, d))?;
    Ok((model, prior))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(prior: &PriorSpec, sd: f64) -> DensityModel {
        exact_density(prior, &NoiseSpec::Gaussian { location: 0.0, sd }).unwrap()
    }

    #[test]
    fn raw_gaussian_moments() {
        assert_eq!(gaussian_raw_moment(0, 3.0, 2.0), 1.0);
        assert_eq!(gaussian_raw_moment(2, 3.0, 2.0), 11.0);
        assert_eq!(gaussian_raw_moment(4, 0.0, 2.0), 12.0);
    }

    #[test]
    fn point_mass_mean_and_conjugate_variance() {
        let m = model(&PriorSpec::point_mass(2.0), 1.0);
        for &y in &[-1.0, 0.5, 3.0] {
            assert!(
                (gauss_functional(1.0, &m, y, &FunctionalSpec::Mean)
                    .unwrap()
                    .value_f64()
                    - 2.0)
                    .abs()
                    < 1e-12
            );
        }
        let m = model(&PriorSpec::normal(0.0, 1.0), 1.0);
        for &y in &[-1.0, 0.5, 3.0] {
            let v = gauss_functional(1.0, &m, y, &FunctionalSpec::Variance)
                .unwrap()
                .value_f64();
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mgf_at_zero_is_one() {
        let m = model(&PriorSpec::atomic(&[(-1.0, 0.5), (1.0, 0.5)]), 1.0);
        let r = gauss_functional(1.0, &m, 0.4, &FunctionalSpec::mgf(0.0)).unwrap();
        assert!((r.value_f64() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn neville_recovers_polynomials() {
        let h = [0.1, 0.03, 0.01];
        let v: Vec<f64> = h.iter().map(|x| 2.0 + 3.0 * x - 5.0 * x * x).collect();
        assert!((extrapolate_to_zero(&h, &v) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_far_above_is_one() {
        let m = model(&PriorSpec::normal(0.0, 1.0), 1.0);
        let r = gauss_cdf(1.0, &m, 0.3, 0.3 + 12.0, &SeriesOptions::default()).unwrap();
        assert!((r.value_f64() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn conjugate_cdf_and_risks() {
        // Prior N(0, 1) and unit noise give the posterior N(y/2, 1/2).
        let m = model(&PriorSpec::normal(0.0, 1.0), 1.0);
        let opts = SeriesOptions::default();
        let (y, s) = (0.8, 0.5f64.sqrt());
        for &a in &[-0.5, 0.4, 1.3] {
            let z = (a - y / 2.0) / s;
            let cdf = gauss_cdf(1.0, &m, y, a, &opts).unwrap();
            assert!(cdf.converged);
            assert!((cdf.value_f64() - norm_cdf(z)).abs() < 1e-5, "cdf at {a}");
            let hinge_exact = s * norm_pdf(z) + (y / 2.0 - a) * (1.0 - norm_cdf(z));
            let hinge = gauss_hinge_abs(1.0, &m, y, a, RiskKind::Hinge, &opts).unwrap();
            assert!(
                (hinge.value_f64() - hinge_exact).abs() < 1e-5,
                "hinge at {a}"
            );
            let abs_exact = 2.0 * hinge_exact - (y / 2.0 - a);
            let abs = gauss_hinge_abs(1.0, &m, y, a, RiskKind::Absolute, &opts).unwrap();
            assert!(
                (abs.value_f64() - abs_exact).abs() < 1e-5,
                "absolute at {a}"
            );
        }
    }

    #[test]
    fn hetero_conditioning() {
        let joint = HeteroJointSpec::univariate(&[(0.0, 1.0, 0.5), (3.0, 4.0, 0.5)]);
        let (m, prior) = hetero_condition(&joint, &Spread::Scalar(1.0)).unwrap();
        assert_eq!(prior, PriorSpec::point_mass(0.0));
        assert!((m.eval(0.7) - norm_pdf(0.7)).abs() < 1e-16);
        assert!(matches!(
            hetero_condition(&joint, &Spread::Scalar(2.0)),
            Err(TweedieError::NoMass)
        ));
        let joint =
            HeteroJointSpec::univariate(&[(0.0, 1.0, 0.2), (1.0, 1.0, 0.2), (3.0, 4.0, 0.6)]);
        let (_, prior) = hetero_condition(&joint, &Spread::Scalar(1.0)).unwrap();
        assert_eq!(prior, PriorSpec::atomic(&[(0.0, 0.5), (1.0, 0.5)]));
    }
}
