//! Direct Bayes ground truth: posterior functionals from the prior and the
//! noise density, seeded joint samplers, and the formula-versus-oracle runner.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::DENSITY_FLOOR;
use crate::densities::exact_density;
use crate::error::{Result, TweedieError};
use crate::evaluate::{evaluate, EvalOptions};
use crate::gaussian::{hetero_condition, HeteroJointSpec};
use crate::numerics::quad::integrate_with_breaks;
use crate::types::{validate_noise, FunctionalSpec, NoiseSpec, Point, PriorSpec, Spread, Value};

/// Half-width, in prior standard deviations, of the quadrature range for mixture priors.
const MIXTURE_SPAN: f64 = 12.0;

/// Ratio of the oracle's internal tolerance to the comparison tolerance.
const ORACLE_TOL_FACTOR: f64 = 0.1;

/// Noise density `f_V(v)` for a point of the noise's dimension.
pub fn noise_pdf(noise: &NoiseSpec, v: &[f64]) -> f64 {
    match noise {
        NoiseSpec::ProductLaplace { scale, .. } => v
            .iter()
            .map(|x| (-x.abs() / scale).exp() / (2.0 * scale))
            .product(),
        NoiseSpec::MultivariateGaussian { .. } => {
            let cov = noise.covariance_matrix().expect("covariance present");
            match cov.clone().cholesky() {
                Some(ch) => {
                    let d = v.len() as f64;
                    let z = ch
                        .l()
                        .solve_lower_triangular(&DVector::from_column_slice(v));
                    let Some(z) = z else { return f64::NAN };
                    let log_det: f64 = ch.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
                    (-0.5 * z.norm_squared()
                        - 0.5 * log_det
                        - 0.5 * d * (2.0 * std::f64::consts::PI).ln())
                    .exp()
                }
                None => f64::NAN,
            }
        }
        _ => v.first().map_or(f64::NAN, |x| noise.pdf(*x)),
    }
}

/// Posterior of `X` given `Y = y` in a form that supports expectations.
enum Posterior {
    Atoms {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Line {
        noise: NoiseSpec,
        y: f64,
        means: Vec<f64>,
        sds: Vec<f64>,
        weights: Vec<f64>,
        lo: f64,
        hi: f64,
        breaks: Vec<f64>,
        norm: f64,
        tol: f64,
    },
    Conjugate {
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covs: Vec<DMatrix<f64>>,
    },
}

fn gaussian_log_pdf(v: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let ch = cov
        .clone()
        .cholesky()
        .ok_or_else(|| TweedieError::InvalidPrior("covariance is not positive definite".into()))?;
    let z = ch
        .l()
        .solve_lower_triangular(v)
        .ok_or_else(|| TweedieError::InvalidPrior("singular covariance".into()))?;
    let log_det: f64 = ch.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
    Ok(-0.5 * z.norm_squared()
        - 0.5 * log_det
        - 0.5 * v.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

impl Posterior {
    fn build(prior: &PriorSpec, noise: &NoiseSpec, y: &[f64], tol: f64) -> Result<Posterior> {
        let noise = validate_noise(noise)?;
        let prior = prior.validate()?;
        let d = noise.dim();
        if y.len() != d || prior.dim() != d {
            return Err(TweedieError::DimensionMismatch {
                expected: d,
                found: if y.len() != d { y.len() } else { prior.dim() },
            });
        }
        match &prior {
            PriorSpec::Atomic { atoms } => {
                let mut points = Vec::with_capacity(atoms.len());
                let mut weights = Vec::with_capacity(atoms.len());
                for a in atoms {
                    let v: Vec<f64> = y
                        .iter()
                        .zip(a.location.as_slice())
                        .map(|(y, x)| y - x)
                        .collect();
                    points.push(a.location.0.clone());
                    weights.push(a.weight * noise_pdf(&noise, &v));
                }
                let total: f64 = weights.iter().sum();
                if !(total >= DENSITY_FLOOR) {
                    return Err(TweedieError::DensityTooSmall { density: total });
                }
                weights.iter_mut().for_each(|w| *w /= total);
                Ok(Posterior::Atoms { points, weights })
            }
            PriorSpec::GaussianMixture { components } if d == 1 => {
                let y = y[0];
                let means: Vec<f64> = components.iter().map(|c| c.mean.0[0]).collect();
                let sds: Vec<f64> = components
                    .iter()
                    .map(|c| c.covariance.to_matrix(1)[(0, 0)].sqrt())
                    .collect();
                let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
                let (slo, shi) = noise.support();
                let span_lo = means
                    .iter()
                    .zip(&sds)
                    .map(|(m, s)| m - MIXTURE_SPAN * s)
                    .fold(f64::INFINITY, f64::min);
                let span_hi = means
                    .iter()
                    .zip(&sds)
                    .map(|(m, s)| m + MIXTURE_SPAN * s)
                    .fold(f64::NEG_INFINITY, f64::max);
                let (lo, hi) = (span_lo.max(y - shi), span_hi.min(y - slo));
                if !(lo < hi) {
                    return Err(TweedieError::DensityTooSmall { density: 0.0 });
                }
                let mut breaks: Vec<f64> = noise.breakpoints().iter().map(|b| y - b).collect();
                breaks.extend(&means);
                let mut post = Posterior::Line {
                    noise,
                    y,
                    means,
                    sds,
                    weights,
                    lo,
                    hi,
                    breaks,
                    norm: 1.0,
                    tol,
                };
                let norm = post.line_integral(&|_| 1.0, None, 0.0)?;
                if !(norm >= DENSITY_FLOOR) {
                    return Err(TweedieError::DensityTooSmall { density: norm });
                }
                if let Posterior::Line { norm: n, .. } = &mut post {
                    *n = norm;
                }
                Ok(post)
            }
            PriorSpec::GaussianMixture { components } => {
                let NoiseSpec::MultivariateGaussian { .. } = noise else {
                    return Err(TweedieError::Unsupported {
                        family: noise.family_name().into(),
                        target: "oracle for multivariate Gaussian-mixture priors".into(),
                    });
                };
                let s0 = noise.covariance_matrix().expect("covariance present");
                let yv = DVector::from_column_slice(y);
                let mut log_w = Vec::with_capacity(components.len());
                let mut means = Vec::with_capacity(components.len());
                let mut covs = Vec::with_capacity(components.len());
                for c in components {
                    let m = DVector::from_column_slice(c.mean.as_slice());
                    let t = c.covariance.to_matrix(d);
                    let total = &t + &s0;
                    let inv = total.clone().try_inverse().ok_or_else(|| {
                        TweedieError::InvalidPrior("singular marginal covariance".into())
                    })?;
                    let gain = &t * inv;
                    log_w.push(c.weight.ln() + gaussian_log_pdf(&(&yv - &m), &total)?);
                    means.push(&m + &gain * (&yv - &m));
                    let p = &t - &gain * &t;
                    covs.push((&p + p.transpose()) * 0.5);
                }
                let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut weights: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = weights.iter().sum();
                if !(top.exp() * total >= DENSITY_FLOOR) {
                    return Err(TweedieError::DensityTooSmall {
                        density: top.exp() * total,
                    });
                }
                weights.iter_mut().for_each(|w| *w /= total);
                Ok(Posterior::Conjugate {
                    weights,
                    means,
                    covs,
                })
            }
            PriorSpec::SamplesOnly { .. } => Err(TweedieError::InvalidPrior(
                "the oracle needs an atomic or Gaussian-mixture prior".into(),
            )),
        }
    }

    /// `∫ g(x) p(x) dx` for the unnormalized 1-D posterior `p`.
    fn line_integral(
        &self,
        g: &dyn Fn(f64) -> f64,
        extra_break: Option<f64>,
        abs_tol: f64,
    ) -> Result<f64> {
        let Posterior::Line {
            noise,
            y,
            means,
            sds,
            weights,
            lo,
            hi,
            breaks,
            ..
        } = self
        else {
            unreachable!("line posterior only")
        };
        let mut breaks = breaks.clone();
        breaks.extend(extra_break);
        let density = |x: f64| {
            let prior: f64 = means
                .iter()
                .zip(sds)
                .zip(weights)
                .map(|((m, s), w)| {
                    let z = (x - m) / s;
                    w * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
                })
                .sum();
            prior * noise_pdf(noise, &[y - x])
        };
        let r = integrate_with_breaks(|x| g(x) * density(x), *lo, *hi, &breaks, abs_tol, 1e-13)?;
        Ok(r.value)
    }

    /// Posterior expectation of `g`; `edge` is a point where `g` is not smooth.
    fn expect(&self, g: &dyn Fn(&[f64]) -> f64, edge: Option<f64>) -> Result<f64> {
        match self {
            Posterior::Atoms { points, weights } => {
                Ok(points.iter().zip(weights).map(|(x, w)| w * g(x)).sum())
            }
            Posterior::Line { norm, tol, .. } => {
                let abs_tol = 0.5 * tol * norm;
                Ok(self.line_integral(&|x| g(&[x]), edge, abs_tol)? / norm)
            }
            Posterior::Conjugate { .. } => Err(TweedieError::Unsupported {
                family: "multivariate_gaussian".into(),
                target: "oracle expectation of an arbitrary function".into(),
            }),
        }
    }

    fn mean(&self, d: usize) -> Result<Vec<f64>> {
        if let Posterior::Conjugate { weights, means, .. } = self {
            let m = means
                .iter()
                .zip(weights)
                .fold(DVector::zeros(d), |acc, (m, w)| acc + m * *w);
            return Ok(m.iter().copied().collect());
        }
        (0..d).map(|j| self.expect(&|x| x[j], None)).collect()
    }

    fn covariance(&self, d: usize) -> Result<DMatrix<f64>> {
        let mean = self.mean(d)?;
        if let Posterior::Conjugate {
            weights,
            means,
            covs,
        } = self
        {
            let mu = DVector::from_column_slice(&mean);
            let mut out = DMatrix::zeros(d, d);
            for ((w, m), p) in weights.iter().zip(means).zip(covs) {
                let c = m - &mu;
                out += (p + &c * c.transpose()) * *w;
            }
            return Ok(out);
        }
        let mut out = DMatrix::zeros(d, d);
        for j in 0..d {
            for k in j..d {
                let v = self.expect(&|x| (x[j] - mean[j]) * (x[k] - mean[k]), None)?;
                out[(j, k)] = v;
                out[(k, j)] = v;
            }
        }
        Ok(out)
    }

    fn mgf(&self, t: &[f64]) -> Result<f64> {
        if let Posterior::Conjugate {
            weights,
            means,
            covs,
        } = self
        {
            let tv = DVector::from_column_slice(t);
            return Ok(weights
                .iter()
                .zip(means)
                .zip(covs)
                .map(|((w, m), p)| w * (tv.dot(m) + 0.5 * (tv.transpose() * p * &tv)[(0, 0)]).exp())
                .sum());
        }
        self.expect(
            &|x| x.iter().zip(t).map(|(a, b)| a * b).sum::<f64>().exp(),
            None,
        )
    }
}

fn univariate_only(fspec: &FunctionalSpec, d: usize) -> Result<()> {
    if d == 1 {
        Ok(())
    } else {
        Err(TweedieError::Unsupported {
            family: "oracle".into(),
            target: format!("{} in dimension {d}", fspec.label()),
        })
    }
}

/// Posterior functional `E[g(X) | Y = y]` computed directly from the prior.
/// Mixture priors use quadrature with internal tolerance `tol`.
pub fn oracle_posterior(
    prior: &PriorSpec,
    noise: &NoiseSpec,
    fspec: &FunctionalSpec,
    y: &[f64],
    tol: f64,
) -> Result<Value> {
    use FunctionalSpec as F;
    let post = Posterior::build(prior, noise, y, tol)?;
    let d = y.len();
    let scalar = |g: &dyn Fn(f64) -> f64, edge: Option<f64>| -> Result<Value> {
        univariate_only(fspec, d)?;
        Ok(Value::Scalar(post.expect(&|x| g(x[0]), edge)?))
    };
    match fspec {
        F::Mean => {
            let m = post.mean(d)?;
            Ok(if d == 1 {
                Value::Scalar(m[0])
            } else {
                Value::Vector(m)
            })
        }
        F::Variance => {
            let c = post.covariance(d)?;
            Ok(if d == 1 {
                Value::Scalar(c[(0, 0)])
            } else {
                Value::from_matrix(&c)
            })
        }
        F::Mgf { argument } => {
            if argument.dim() != d {
                return Err(TweedieError::DimensionMismatch {
                    expected: d,
                    found: argument.dim(),
                });
            }
            Ok(Value::Scalar(post.mgf(argument.as_slice())?))
        }
        F::SecondMoment => scalar(&|x| x * x, None),
        F::RawMoment { order } => scalar(&|x| x.powi(*order as i32), None),
        F::CenteredMoment { order } => {
            univariate_only(fspec, d)?;
            let kappa = post.mean(1)?[0];
            scalar(&|x| (x - kappa).powi(*order as i32), None)
        }
        F::Cdf { threshold } => scalar(
            &|x| if x <= *threshold { 1.0 } else { 0.0 },
            Some(*threshold),
        ),
        F::SquaredRisk { threshold } => scalar(&|x| (x - threshold).powi(2), None),
        F::EvenRisk {
            threshold,
            half_power,
        } => scalar(&|x| (x - threshold).powi(2 * *half_power as i32), None),
        F::HingeLoss { threshold } => scalar(&|x| (x - threshold).max(0.0), Some(*threshold)),
        F::PinballLoss {
            threshold,
            quantile_level,
        } => scalar(
            &|x| {
                quantile_level * (x - threshold).max(0.0)
                    + (1.0 - quantile_level) * (threshold - x).max(0.0)
            },
            Some(*threshold),
        ),
        F::AbsoluteRisk { threshold } => scalar(&|x| (x - threshold).abs(), Some(*threshold)),
    }
}

/// Posterior expectation of an arbitrary function of `X`.
pub fn oracle_expectation(
    prior: &PriorSpec,
    noise: &NoiseSpec,
    g: &dyn Fn(&[f64]) -> f64,
    y: &[f64],
    tol: f64,
) -> Result<f64> {
    Posterior::build(prior, noise, y, tol)?.expect(g, None)
}

/// Marginal density `f_Y(y) = ∫ f_V(y - x) dP_X(x)` by finite sum or quadrature.
pub fn oracle_marginal(prior: &PriorSpec, noise: &NoiseSpec, y: &[f64]) -> Result<f64> {
    let prior = prior.validate()?;
    match &prior {
        PriorSpec::Atomic { atoms } => Ok(atoms
            .iter()
            .map(|a| {
                let v: Vec<f64> = y
                    .iter()
                    .zip(a.location.as_slice())
                    .map(|(y, x)| y - x)
                    .collect();
                a.weight * noise_pdf(noise, &v)
            })
            .sum()),
        _ => match Posterior::build(&prior, noise, y, 1e-12)? {
            Posterior::Line { norm, .. } => Ok(norm),
            _ => Err(TweedieError::Unsupported {
                family: noise.family_name().into(),
                target: "oracle marginal in more than one dimension".into(),
            }),
        },
    }
}

/// Seeded draws of `(X, Y)`, stored row-major with `dim` coordinates per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl JointSample {
    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.dim..(i + 1) * self.dim]
    }
}

fn pick<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn standard_normals<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn lower_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| TweedieError::InvalidPrior("covariance is not positive definite".into()))
}

/// `n` draws of `Y = X + V` with `X ~ prior` and `V ~ noise`, deterministic in `seed`.
pub fn sample_joint(
    prior: &PriorSpec,
    noise: &NoiseSpec,
    n: usize,
    seed: u64,
) -> Result<JointSample> {
    if n == 0 {
        return Err(TweedieError::DomainError(
            "sample size must be at least 1".into(),
        ));
    }
    let noise = validate_noise(noise)?;
    let prior = prior.validate()?;
    let d = noise.dim();
    if prior.dim() != d {
        return Err(TweedieError::DimensionMismatch {
            expected: d,
            found: prior.dim(),
        });
    }
    let noise_factor = match &noise {
        NoiseSpec::MultivariateGaussian { .. } => Some(lower_factor(
            &noise.covariance_matrix().expect("covariance present"),
        )?),
        _ => None,
    };
    let factors = match &prior {
        PriorSpec::GaussianMixture { components } => components
            .iter()
            .map(|c| lower_factor(&c.covariance.to_matrix(d)))
            .collect::<Result<Vec<_>>>()?,
        _ => Vec::new(),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = JointSample {
        dim: d,
        x: Vec::with_capacity(n * d),
        y: Vec::with_capacity(n * d),
    };
    for _ in 0..n {
        let x: Vec<f64> = match &prior {
            PriorSpec::Atomic { atoms } => {
                let w: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
                atoms[pick(&mut rng, &w)].location.0.clone()
            }
            PriorSpec::GaussianMixture { components } => {
                let w: Vec<f64> = components.iter().map(|c| c.weight).collect();
                let i = pick(&mut rng, &w);
                let z = &factors[i] * standard_normals(&mut rng, d);
                components[i]
                    .mean
                    .as_slice()
                    .iter()
                    .zip(z.iter())
                    .map(|(m, z)| m + z)
                    .collect()
            }
            PriorSpec::SamplesOnly { .. } => {
                return Err(TweedieError::InvalidPrior(
                    "sampling needs an atomic or Gaussian-mixture prior".into(),
                ))
            }
        };
        let v: Vec<f64> = match &noise_factor {
            Some(l) => (l * standard_normals(&mut rng, d))
                .iter()
                .copied()
                .collect(),
            None => (0..d).map(|_| noise.sample(&mut rng)).collect(),
        };
        out.y.extend(x.iter().zip(&v).map(|(a, b)| a + b));
        out.x.extend(x);
    }
    Ok(out)
}

/// Draws of `(X, σ, Y)` from a univariate heteroskedastic joint, `Y = X + σ Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroSample {
    pub x: Vec<f64>,
    pub sigma: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn sample_hetero(joint: &HeteroJointSpec, n: usize, seed: u64) -> Result<HeteroSample> {
    if n == 0 {
        return Err(TweedieError::DomainError(
            "sample size must be at least 1".into(),
        ));
    }
    let joint = joint.validate()?;
    if joint.dim() != 1 {
        return Err(TweedieError::DimensionMismatch {
            expected: 1,
            found: joint.dim(),
        });
    }
    let weights: Vec<f64> = joint.atoms.iter().map(|a| a.weight).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = HeteroSample {
        x: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let a = &joint.atoms[pick(&mut rng, &weights)];
        let x = a.location.0[0];
        let sigma = a.variance.to_matrix(1)[(0, 0)].sqrt();
        let z: f64 = rng.sample(StandardNormal);
        out.x.push(x);
        out.sigma.push(sigma);
        out.y.push(x + sigma * z);
    }
    Ok(out)
}

/// One formula-versus-oracle comparison over a grid of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCase {
    /// Label grouping cases in the report summary.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    /// Heteroskedastic joint law; the prior is its conditional at the noise variance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<HeteroJointSpec>,
    pub noise: NoiseSpec,
    pub functional: FunctionalSpec,
    pub ys: Vec<Point>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub family: String,
    pub functional: String,
    pub y: Point,
    pub formula: Option<Value>,
    pub oracle: Option<Value>,
    pub abs_error: Option<f64>,
    pub tol: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub suite: String,
    pub seed: u64,
    pub cases: Vec<CaseRecord>,
    pub max_abs_error: Option<f64>,
    pub max_abs_error_by_family: BTreeMap<String, f64>,
}

impl OracleReport {
    pub fn all_pass(&self) -> bool {
        self.cases.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> usize {
        self.cases.iter().filter(|c| !c.pass).count()
    }
}

fn case_prior(case: &ValidationCase) -> Result<(crate::densities::DensityModel, PriorSpec)> {
    match (&case.prior, &case.joint) {
        (Some(prior), None) => Ok((exact_density(prior, &case.noise)?, prior.clone())),
        (None, Some(joint)) => {
            let d = case.noise.dim();
            let variance = match &case.noise {
                NoiseSpec::Gaussian { sd, .. } => Spread::Scalar(sd * sd),
                NoiseSpec::MultivariateGaussian { covariance } => {
                    Spread::Matrix(covariance.clone())
                }
                other => {
                    return Err(TweedieError::Unsupported {
                        family: other.family_name().into(),
                        target: "heteroskedastic joint".into(),
                    })
                }
            };
            if d != joint.dim() {
                return Err(TweedieError::DimensionMismatch {
                    expected: joint.dim(),
                    found: d,
                });
            }
            hetero_condition(joint, &variance)
        }
        _ => Err(TweedieError::InvalidPrior(
            "a case needs exactly one of a prior and a joint law".into(),
        )),
    }
}

fn run_one(case: &ValidationCase, y: &Point, opts: &EvalOptions) -> CaseRecord {
    let mut record = CaseRecord {
        family: case.family.clone(),
        functional: case.functional.label(),
        y: y.clone(),
        formula: None,
        oracle: None,
        abs_error: None,
        tol: case.tolerance,
        pass: false,
        error: None,
    };
    let outcome = (|| -> Result<(Value, Value)> {
        let (model, prior) = case_prior(case)?;
        let formula = evaluate(&case.noise, &model, y.as_slice(), &case.functional, opts)?.value;
        let oracle_tol = (ORACLE_TOL_FACTOR * case.tolerance).max(1e-13);
        let oracle = oracle_posterior(
            &prior,
            &case.noise,
            &case.functional,
            y.as_slice(),
            oracle_tol,
        )?;
        Ok((formula, oracle))
    })();
    match outcome {
        Ok((formula, oracle)) => {
            let (a, b) = (formula.flatten(), oracle.flatten());
            if a.len() == b.len() {
                let err = a
                    .iter()
                    .zip(&b)
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max);
                let finite = a.iter().chain(&b).all(|v| v.is_finite());
                record.abs_error = finite.then_some(err);
                record.pass = finite && err <= case.tolerance;
                if !finite {
                    record.error = Some("non-finite value".into());
                }
            } else {
                record.error = Some(format!(
                    "shape mismatch: formula {} values, oracle {}",
                    a.len(),
                    b.len()
                ));
            }
            record.formula = Some(formula);
            record.oracle = Some(oracle);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Evaluates every case at every grid point against the oracle. Case errors
/// are recorded, never propagated; record order follows the suite.
pub fn run_validation(
    suite: &str,
    seed: u64,
    cases: &[ValidationCase],
    opts: &EvalOptions,
) -> OracleReport {
    let tasks: Vec<(&ValidationCase, &Point)> = cases
        .iter()
        .flat_map(|c| c.ys.iter().map(move |y| (c, y)))
        .collect();
    let records: Vec<CaseRecord> = tasks.par_iter().map(|(c, y)| run_one(c, y, opts)).collect();
    let mut by_family: BTreeMap<String, f64> = BTreeMap::new();
    for r in &records {
        if let Some(e) = r.abs_error {
            let slot = by_family.entry(r.family.clone()).or_insert(0.0);
            *slot = slot.max(e);
        }
    }
    let max_abs_error = records.iter().filter_map(|r| r.abs_error).reduce(f64::max);
    OracleReport {
        suite: suite.to_string(),
        seed,
        cases: records,
        max_abs_error,
        max_abs_error_by_family: by_family,
    }
}

/// Names accepted by [`builtin_suite`].
pub const BUILTIN_SUITES: [&str; 4] = ["table1", "table2", "table3", "conjugate"];

pub fn builtin_suite(name: &str) -> Result<Vec<ValidationCase>> {
    match name {
        "table1" => table1_suite(),
        "table2" => Ok(table2_suite()),
        "table3" => Ok(table3_suite()),
        "conjugate" => Ok(conjugate_suite()),
        other => Err(TweedieError::DomainError(format!(
            "unknown suite {other}; expected one of {BUILTIN_SUITES:?}"
        ))),
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| Point(vec![lo + (hi - lo) * i as f64 / (n - 1) as f64]))
        .collect()
}

fn scalar_points(ys: &[f64]) -> Vec<Point> {
    ys.iter().map(|y| Point(vec![*y])).collect()
}

/// The eleven univariate noise laws of the posterior-mean catalogue, each
/// with its comparison tolerance.
pub fn table1_families() -> Vec<(NoiseSpec, f64)> {
    vec![
        (
            NoiseSpec::Gaussian {
                location: 0.0,
                sd: 1.0,
            },
            1e-6,
        ),
        (
            NoiseSpec::Laplace {
                location: 0.0,
                scale: 1.0,
            },
            1e-6,
        ),
        (
            NoiseSpec::AsymmetricLaplace {
                location: 0.0,
                left_scale: 1.0,
                right_scale: 2.0,
            },
            1e-6,
        ),
        (
            NoiseSpec::Logistic {
                location: 0.0,
                scale: 0.7,
            },
            1e-6,
        ),
        (
            NoiseSpec::Gumbel {
                location: 0.0,
                scale: 1.0,
            },
            1e-6,
        ),
        (
            NoiseSpec::Cauchy {
                location: 0.0,
                scale: 1.0,
            },
            1e-6,
        ),
        (
            NoiseSpec::HyperbolicSecant {
                location: 0.0,
                scale: 0.7,
            },
            1e-6,
        ),
        (
            NoiseSpec::Gamma {
                shape: 2.0,
                scale: 1.0,
            },
            1e-6,
        ),
        (
            NoiseSpec::GeneralizedLaplace {
                location: 0.0,
                scale: 1.0,
                shape: 1.5,
            },
            1e-4,
        ),
        (
            NoiseSpec::NoncentralChiSq {
                df: 4.0,
                noncentrality: 1.5,
            },
            1e-4,
        ),
        (
            NoiseSpec::InverseGaussian {
                mean: 1.0,
                shape: 2.0,
            },
            1e-4,
        ),
    ]
}

/// The three-atom prior shared by the posterior-mean and Gaussian suites.
pub fn three_atom_prior() -> PriorSpec {
    PriorSpec::atomic(&[(-1.0, 0.3), (0.0, 0.4), (2.0, 0.3)])
}

fn table1_suite() -> Result<Vec<ValidationCase>> {
    let prior = three_atom_prior();
    table1_families()
        .into_iter()
        .map(|(noise, tolerance)| {
            let model = exact_density(&prior, &noise)?;
            let (lo, hi) = (model.quantile(0.005)?, model.quantile(0.995)?);
            Ok(ValidationCase {
                family: noise.family_name().to_string(),
                prior: Some(prior.clone()),
                joint: None,
                noise,
                functional: FunctionalSpec::Mean,
                ys: grid(lo, hi, 21),
                tolerance,
            })
        })
        .collect()
}

fn table2_suite() -> Vec<ValidationCase> {
    use FunctionalSpec as F;
    let prior = PriorSpec::atomic(&[(0.0, 0.5), (1.0, 0.5)]);
    let noise = NoiseSpec::ProductLaplace { scale: 1.0, dim: 1 };
    let ys = scalar_points(&[-0.5, 0.3, 1.4]);
    let mut functionals: Vec<(F, f64)> = vec![
        (F::Mean, 1e-6),
        (F::SecondMoment, 1e-6),
        (F::Variance, 1e-6),
        (F::mgf(0.3), 1e-6),
        (F::mgf(-0.6), 1e-6),
    ];
    for &a in &[-0.2, 0.5, 1.2] {
        functionals.push((F::Cdf { threshold: a }, 1e-6));
        functionals.push((F::SquaredRisk { threshold: a }, 1e-6));
        functionals.push((F::HingeLoss { threshold: a }, 1e-5));
        functionals.push((
            F::PinballLoss {
                threshold: a,
                quantile_level: 0.3,
            },
            1e-5,
        ));
        functionals.push((F::AbsoluteRisk { threshold: a }, 1e-5));
    }
    let mut cases: Vec<ValidationCase> = functionals
        .into_iter()
        .map(|(functional, tolerance)| ValidationCase {
            family: "product_laplace".into(),
            prior: Some(prior.clone()),
            joint: None,
            noise: noise.clone(),
            functional,
            ys: ys.clone(),
            tolerance,
        })
        .collect();
    let prior2 = PriorSpec::atomic_vec(&[(vec![0.0, 0.0], 0.5), (vec![2.0, 1.0], 0.5)]);
    let noise2 = NoiseSpec::ProductLaplace { scale: 1.0, dim: 2 };
    let ys2 = vec![
        Point(vec![0.5, 0.5]),
        Point(vec![1.5, 0.2]),
        Point(vec![-0.3, 1.1]),
    ];
    for functional in [
        F::Mean,
        F::Variance,
        F::Mgf {
            argument: Point(vec![0.3, -0.2]),
        },
    ] {
        cases.push(ValidationCase {
            family: "product_laplace_d2".into(),
            prior: Some(prior2.clone()),
            joint: None,
            noise: noise2.clone(),
            functional,
            ys: ys2.clone(),
            tolerance: 1e-5,
        });
    }
    cases
}

/// Atomic joint law of (X, σ²) used by the heteroskedastic suite.
pub fn hetero_joint() -> HeteroJointSpec {
    HeteroJointSpec::univariate(&[(0.0, 0.25, 0.25), (1.0, 1.0, 0.5), (3.0, 4.0, 0.25)])
}

fn table3_suite() -> Vec<ValidationCase> {
    use FunctionalSpec as F;
    let joint = hetero_joint();
    let hetero_functionals = [
        F::Mean,
        F::Variance,
        F::mgf(0.4),
        F::RawMoment { order: 3 },
        F::EvenRisk {
            threshold: 0.5,
            half_power: 1,
        },
    ];
    let mut cases = Vec::new();
    for atom in &joint.atoms {
        let variance = atom.variance.to_matrix(1)[(0, 0)];
        let sd = variance.sqrt();
        let x = atom.location.0[0];
        for functional in &hetero_functionals {
            cases.push(ValidationCase {
                family: format!("hetero_sigma2_{variance}"),
                prior: None,
                joint: Some(joint.clone()),
                noise: NoiseSpec::Gaussian { location: 0.0, sd },
                functional: functional.clone(),
                ys: grid(x - 3.0 * sd, x + 3.0 * sd, 11),
                tolerance: 1e-6,
            });
        }
    }
    let prior = three_atom_prior();
    let noise = NoiseSpec::Gaussian {
        location: 0.0,
        sd: 1.0,
    };
    let ys = scalar_points(&[-1.0, 0.5, 2.0]);
    let gaussian_functionals = [
        (F::SecondMoment, 1e-8),
        (F::CenteredMoment { order: 3 }, 1e-8),
        (
            F::EvenRisk {
                threshold: 0.5,
                half_power: 2,
            },
            1e-8,
        ),
    ];
    for (functional, tolerance) in gaussian_functionals {
        cases.push(ValidationCase {
            family: "gaussian".into(),
            prior: Some(prior.clone()),
            joint: None,
            noise: noise.clone(),
            functional,
            ys: ys.clone(),
            tolerance,
        });
    }
    // The CDF and risk series converge within the default schedule only when
    // the prior has a Gaussian component.
    let mixture = PriorSpec::gaussian_mixture(&[(-1.0, 1.0, 0.4), (1.5, 2.0, 0.6)]);
    let series_functionals = [
        F::Cdf { threshold: 0.5 },
        F::HingeLoss { threshold: 0.5 },
        F::PinballLoss {
            threshold: 0.5,
            quantile_level: 0.3,
        },
        F::AbsoluteRisk { threshold: 0.5 },
    ];
    for functional in series_functionals {
        cases.push(ValidationCase {
            family: "gaussian_mixture".into(),
            prior: Some(mixture.clone()),
            joint: None,
            noise: noise.clone(),
            functional,
            ys: scalar_points(&[-2.0, 0.5, 3.0]),
            tolerance: 1e-4,
        });
    }
    let mv_prior = PriorSpec::GaussianMixture {
        components: vec![
            crate::types::MixtureComponent {
                mean: Point(vec![0.0, 0.0]),
                covariance: Spread::Matrix(vec![vec![1.0, 0.3], vec![0.3, 0.5]]),
                weight: 0.6,
            },
            crate::types::MixtureComponent {
                mean: Point(vec![2.0, -1.0]),
                covariance: Spread::Scalar(0.4),
                weight: 0.4,
            },
        ],
    };
    let mv_noise = NoiseSpec::MultivariateGaussian {
        covariance: vec![vec![0.5, 0.1], vec![0.1, 0.8]],
    };
    for functional in [
        F::Mean,
        F::Variance,
        F::Mgf {
            argument: Point(vec![0.3, -0.2]),
        },
    ] {
        cases.push(ValidationCase {
            family: "multivariate_gaussian".into(),
            prior: Some(mv_prior.clone()),
            joint: None,
            noise: mv_noise.clone(),
            functional,
            ys: vec![
                Point(vec![0.5, 0.5]),
                Point(vec![1.5, -0.5]),
                Point(vec![-1.0, 0.3]),
            ],
            tolerance: 1e-8,
        });
    }
    cases
}

fn conjugate_suite() -> Vec<ValidationCase> {
    use FunctionalSpec as F;
    let prior = PriorSpec::normal(0.0, 1.0);
    let noise = NoiseSpec::Gaussian {
        location: 0.0,
        sd: 1.0,
    };
    let ys = scalar_points(&[-2.0, 0.0, 2.0]);
    let mut functionals = vec![(F::Mean, 1e-8), (F::Variance, 1e-8), (F::mgf(0.5), 1e-8)];
    for a in [-1.0, 0.0, 1.0] {
        functionals.push((F::Cdf { threshold: a }, 1e-4));
    }
    functionals
        .into_iter()
        .map(|(functional, tolerance)| ValidationCase {
            family: "gaussian_conjugate".into(),
            prior: Some(prior.clone()),
            joint: None,
            noise: noise.clone(),
            functional,
            ys: ys.clone(),
            tolerance,
        })
        .collect()
}
