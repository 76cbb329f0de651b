//! The observed marginal density `f_Y`, either as an exact prior-noise
//! convolution or as a Gaussian-kernel density estimate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TweedieError};
use crate::noise::SMOOTH_MAX_ORDER;
use crate::numerics::quad::{integrate_with_breaks, QuadResult};
use crate::numerics::special::{hermite_sequence, INV_SQRT_2PI, K_MAX};
use crate::types::{validate_noise, NoiseSpec, PriorSpec, Spread};

/// Fewest samples accepted by [`kde_fit`].
pub const KDE_MIN_SAMPLES: usize = 10;

/// Kernels farther than this many standard deviations contribute nothing.
const KERNEL_WINDOW: f64 = 40.0;

/// Half-width, in prior standard deviations, of the convolution quadrature.
const MIXTURE_SPAN: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// `0.9 · min(sd, iqr/1.34) · n^(-1/5)`, tuned for the density itself.
    Silverman,
    /// Normal-reference rule for the first derivative:
    /// `min(sd, iqr/1.34) · (4/5)^(1/7) · n^(-1/7)`. Suits plug-in posterior means, which read `f'/f`.
    FirstDerivative,
    Fixed(f64),
}

/// Weighted univariate Gaussian kernels, sorted by centre.
#[derive(Debug, Clone)]
struct Kernels {
    centres: Vec<f64>,
    weights: Vec<f64>,
    sds: Vec<f64>,
    common_sd: Option<f64>,
}

impl Kernels {
    fn new(mut items: Vec<(f64, f64, f64)>) -> Kernels {
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        let common_sd = items
            .first()
            .map(|f| f.2)
            .filter(|sd| items.iter().all(|i| i.2 == *sd));
        Kernels {
            centres: items.iter().map(|i| i.0).collect(),
            weights: items.iter().map(|i| i.1).collect(),
            sds: items.iter().map(|i| i.2).collect(),
            common_sd,
        }
    }

    fn window(&self, y: f64) -> std::ops::Range<usize> {
        match self.common_sd {
            Some(sd) => {
                let lo = self
                    .centres
                    .partition_point(|c| *c < y - KERNEL_WINDOW * sd);
                let hi = self
                    .centres
                    .partition_point(|c| *c <= y + KERNEL_WINDOW * sd);
                lo..hi
            }
            None => 0..self.centres.len(),
        }
    }

    fn eval(&self, y: f64) -> f64 {
        let mut acc = 0.0;
        for i in self.window(y) {
            let z = (y - self.centres[i]) / self.sds[i];
            acc += self.weights[i] * (-0.5 * z * z).exp() / self.sds[i];
        }
        acc * INV_SQRT_2PI
    }

    /// Density and the ratios `f^{(k)}(y) / f(y)` for `k = 0..=kmax`,
    /// accumulated with a common exponent so far tails do not underflow.
    fn ratios(&self, y: f64, kmax: usize) -> (f64, Vec<f64>) {
        let range = self.window(y);
        let range = if range.is_empty() {
            0..self.centres.len()
        } else {
            range
        };
        let logs: Vec<f64> = range
            .clone()
            .map(|i| {
                let z = (y - self.centres[i]) / self.sds[i];
                self.weights[i].ln() - 0.5 * z * z - self.sds[i].ln()
            })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sums = vec![0.0; kmax + 1];
        let mut he = vec![0.0; kmax + 1];
        let mut total = 0.0;
        for (j, i) in range.enumerate() {
            let sd = self.sds[i];
            let z = (y - self.centres[i]) / sd;
            let w = (logs[j] - top).exp();
            total += w;
            hermite_sequence(z, &mut he);
            let mut scale = w;
            for k in 0..=kmax {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sums[k] += sign * he[k] * scale;
                scale /= sd;
            }
        }
        let density = INV_SQRT_2PI * top.exp() * total;
        let ratios = sums.iter().map(|s| s / total).collect();
        (density, ratios)
    }
}

/// Gaussian mixture in `d` dimensions with precomputed inverses.
#[derive(Debug, Clone)]
struct MvMixture {
    means: Vec<DVector<f64>>,
    inverses: Vec<DMatrix<f64>>,
    log_consts: Vec<f64>,
}

impl MvMixture {
    fn new(parts: Vec<(DVector<f64>, DMatrix<f64>, f64)>) -> Result<MvMixture> {
        let mut means = Vec::new();
        let mut inverses = Vec::new();
        let mut log_consts = Vec::new();
        for (m, s, w) in parts {
            let d = m.len();
            let chol = s.clone().cholesky().ok_or_else(|| {
                TweedieError::InvalidPrior("component covariance is not positive definite".into())
            })?;
            let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
            inverses.push(chol.inverse());
            log_consts
                .push(w.ln() - 0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det));
            means.push(m);
        }
        Ok(MvMixture {
            means,
            inverses,
            log_consts,
        })
    }

    fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Per-component log weights and score vectors at `y`.
    fn components(&self, y: &DVector<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
        let mut logs = Vec::with_capacity(self.means.len());
        let mut scores = Vec::with_capacity(self.means.len());
        for ((m, inv), c) in self.means.iter().zip(&self.inverses).zip(&self.log_consts) {
            let r = y - m;
            let g = -(inv * &r);
            logs.push(c + 0.5 * r.dot(&g));
            scores.push(g);
        }
        (logs, scores)
    }

    fn log_eval(&self, y: &DVector<f64>) -> f64 {
        let (logs, _) = self.components(y);
        log_sum_exp(&logs)
    }

    /// `(log f, ∇ log f, ∇² log f)` at `y`.
    fn log_derivs(&self, y: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let (logs, scores) = self.components(y);
        let lse = log_sum_exp(&logs);
        let mut grad = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        for ((l, g), inv) in logs.iter().zip(&scores).zip(&self.inverses) {
            let p = (l - lse).exp();
            grad += g * p;
            second += (g * g.transpose() - inv) * p;
        }
        let hess = second - &grad * grad.transpose();
        (lse, grad, hess)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone)]
enum Backend {
    Kernels(Kernels),
    Atomic {
        noise: NoiseSpec,
        locations: Vec<f64>,
        weights: Vec<f64>,
    },
    MixtureQuad {
        noise: NoiseSpec,
        means: Vec<f64>,
        variances: Vec<f64>,
        weights: Vec<f64>,
    },
    MvGaussian(MvMixture),
    ProductLaplace {
        scale: f64,
        locations: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

/// Evaluable observed marginal density.
#[derive(Debug, Clone)]
pub struct DensityModel {
    backend: Backend,
    noise: Option<NoiseSpec>,
    bandwidth: Option<f64>,
}

impl DensityModel {
    pub fn dim(&self) -> usize {
        match &self.backend {
            Backend::MvGaussian(m) => m.dim(),
            Backend::ProductLaplace { locations, .. } => locations[0].len(),
            _ => 1,
        }
    }

    /// Noise law of an exact backend; `None` for a KDE.
    pub fn noise(&self) -> Option<&NoiseSpec> {
        self.noise.as_ref()
    }

    /// Bandwidth of a KDE backend.
    pub fn bandwidth(&self) -> Option<f64> {
        self.bandwidth
    }

    pub fn is_kde(&self) -> bool {
        self.bandwidth.is_some()
    }

    /// Every density here is a probability density.
    pub fn l1_bound(&self) -> f64 {
        1.0
    }

    pub fn max_derivative_order(&self) -> usize {
        match &self.backend {
            Backend::Kernels(_) => K_MAX,
            Backend::Atomic { noise, .. } => noise.max_derivative_order(),
            Backend::MixtureQuad { .. } => SMOOTH_MAX_ORDER,
            Backend::MvGaussian(_) => 2,
            Backend::ProductLaplace { .. } => 0,
        }
    }

    fn require_univariate(&self) -> Result<()> {
        if self.dim() != 1 {
            return Err(TweedieError::DimensionMismatch {
                expected: 1,
                found: self.dim(),
            });
        }
        Ok(())
    }

    /// `f_Y(y)` in d=1.
    pub fn eval(&self, y: f64) -> f64 {
        match &self.backend {
            Backend::Kernels(k) => k.eval(y),
            Backend::Atomic {
                noise,
                locations,
                weights,
            } => locations
                .iter()
                .zip(weights)
                .map(|(x, w)| w * noise.pdf(y - x))
                .sum(),
            Backend::MixtureQuad { .. } => {
                self.mixture_derivs(y, 0).map(|d| d[0]).unwrap_or(f64::NAN)
            }
            _ => self.eval_point(&[y]),
        }
    }

    /// `f_Y(y)` at a point of any dimension.
    pub fn eval_point(&self, y: &[f64]) -> f64 {
        match &self.backend {
            Backend::MvGaussian(m) => m.log_eval(&DVector::from_column_slice(y)).exp(),
            Backend::ProductLaplace {
                scale,
                locations,
                weights,
            } => {
                let norm = (2.0 * scale).powi(y.len() as i32);
                locations
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| {
                        let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                        w * (-l1 / scale).exp()
                    })
                    .sum::<f64>()
                    / norm
            }
            _ => y.first().map_or(f64::NAN, |v| self.eval(*v)),
        }
    }

    fn mixture_derivs(&self, y: f64, kmax: usize) -> Result<Vec<f64>> {
        let Backend::MixtureQuad {
            noise,
            means,
            variances,
            weights,
        } = &self.backend
        else {
            unreachable!("mixture backend only")
        };
        let (slo, shi) = noise.support();
        let breaks = noise.breakpoints();
        let mut out = vec![0.0; kmax + 1];
        for ((m, v), w) in means.iter().zip(variances).zip(weights) {
            let sd = v.sqrt();
            let centre = y - m;
            let lo = (centre - MIXTURE_SPAN * sd).max(slo);
            let hi = (centre + MIXTURE_SPAN * sd).min(shi);
            if lo >= hi {
                continue;
            }
            let mut level = 0.0;
            for k in 0..=kmax {
                let integrand = |u: f64| {
                    let mut local = vec![0.0; k + 1];
                    crate::numerics::special::gaussian_density_derivs(
                        centre - u,
                        *v,
                        k,
                        &mut local,
                    );
                    noise.pdf(u) * local[k]
                };
                // Signed derivative integrands may cancel to zero, so they get an
                // absolute floor scaled from the order-0 value.
                let abs_tol = if k == 0 {
                    f64::MIN_POSITIVE
                } else {
                    (1e-13 * level / sd.powi(k as i32)).max(f64::MIN_POSITIVE)
                };
                let r = integrate_with_breaks(integrand, lo, hi, &breaks, abs_tol, 1e-12)?;
                if k == 0 {
                    level = r.value;
                }
                out[k] += w * r.value;
            }
        }
        Ok(out)
    }

    /// Derivatives `f_Y^{(0)}(y), …, f_Y^{(kmax)}(y)`.
    pub fn derivs(&self, y: f64, kmax: usize) -> Result<Vec<f64>> {
        self.require_univariate()?;
        if kmax > self.max_derivative_order() {
            return Err(self.unsupported_order(kmax));
        }
        match &self.backend {
            Backend::Kernels(k) => {
                let (f, r) = k.ratios(y, kmax);
                Ok(r.iter().map(|x| x * f).collect())
            }
            Backend::Atomic {
                noise,
                locations,
                weights,
            } => {
                let mut out = vec![0.0; kmax + 1];
                for (x, w) in locations.iter().zip(weights) {
                    for (o, d) in out.iter_mut().zip(noise.derivs(y - x, kmax)?) {
                        *o += w * d;
                    }
                }
                Ok(out)
            }
            Backend::MixtureQuad { .. } => self.mixture_derivs(y, kmax),
            Backend::ProductLaplace { .. } => Ok(vec![self.eval(y)]),
            Backend::MvGaussian(_) => unreachable!("univariate checked above"),
        }
    }

    /// Density together with `f^{(k)}/f` for `k ≤ kmax`; stable in the tails
    /// for Gaussian-kernel backends.
    pub fn ratios(&self, y: f64, kmax: usize) -> Result<(f64, Vec<f64>)> {
        if let Backend::Kernels(k) = &self.backend {
            if kmax > K_MAX {
                return Err(self.unsupported_order(kmax));
            }
            return Ok(k.ratios(y, kmax));
        }
        let d = self.derivs(y, kmax)?;
        let f = d[0];
        Ok((f, d.iter().map(|x| x / f).collect()))
    }

    fn unsupported_order(&self, k: usize) -> TweedieError {
        TweedieError::Unsupported {
            family: self
                .noise
                .as_ref()
                .map_or("kde", |n| n.family_name())
                .to_string(),
            target: format!("density derivative of order {k}"),
        }
    }

    pub fn deriv(&self, y: f64, k: usize) -> Result<f64> {
        Ok(self.derivs(y, k)?[k])
    }

    /// Right derivative `D₊f_Y(a)`.
    pub fn right_deriv(&self, a: f64) -> Result<f64> {
        self.require_univariate()?;
        match &self.backend {
            Backend::Atomic {
                noise,
                locations,
                weights,
            } => {
                let mut acc = 0.0;
                for (x, w) in locations.iter().zip(weights) {
                    acc += w * noise.right_deriv(a - x)?;
                }
                Ok(acc)
            }
            Backend::ProductLaplace {
                scale,
                locations,
                weights,
            } => Ok(locations
                .iter()
                .zip(weights)
                .map(|(x, w)| {
                    let u = a - x[0];
                    let f = (-u.abs() / scale).exp() / (2.0 * scale);
                    w * if u >= 0.0 { -f / scale } else { f / scale }
                })
                .sum()),
            _ => self.deriv(a, 1),
        }
    }

    /// Points in y where `f_Y` has a kink or its support begins.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match &self.backend {
            Backend::Atomic {
                noise, locations, ..
            } => {
                let offsets = noise.breakpoints();
                locations
                    .iter()
                    .flat_map(|x| offsets.iter().map(move |o| x + o))
                    .collect()
            }
            Backend::ProductLaplace { locations, .. } if locations[0].len() == 1 => {
                locations.iter().map(|x| x[0]).collect()
            }
            _ => Vec::new(),
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Kink coordinates of a product-Laplace density along axis `j`.
    pub fn axis_breakpoints(&self, j: usize) -> Vec<f64> {
        match &self.backend {
            Backend::ProductLaplace { locations, .. } => {
                let mut out: Vec<f64> = locations.iter().map(|x| x[j]).collect();
                out.sort_by(f64::total_cmp);
                out.dedup();
                out
            }
            _ => Vec::new(),
        }
    }

    /// Interval outside which `f_Y` vanishes (d=1).
    pub fn support(&self) -> (f64, f64) {
        match &self.backend {
            Backend::Atomic {
                noise, locations, ..
            } => {
                let (lo, hi) = noise.support();
                let min = locations.iter().copied().fold(f64::INFINITY, f64::min);
                let max = locations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (min + lo, max + hi)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `∇ log f`, `∇² log f` and `log f` of a multivariate Gaussian backend.
    pub fn log_derivatives(&self, y: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        match &self.backend {
            Backend::MvGaussian(m) => {
                if y.len() != m.dim() {
                    return Err(TweedieError::DimensionMismatch {
                        expected: m.dim(),
                        found: y.len(),
                    });
                }
                Ok(m.log_derivs(&DVector::from_column_slice(y)))
            }
            Backend::Kernels(k) if y.len() == 1 => {
                let (f, r) = k.ratios(y[0], 2);
                Ok((
                    f.ln(),
                    DVector::from_element(1, r[1]),
                    DMatrix::from_element(1, 1, r[2] - r[1] * r[1]),
                ))
            }
            _ => Err(TweedieError::Unsupported {
                family: self
                    .noise
                    .as_ref()
                    .map_or("kde", |n| n.family_name())
                    .to_string(),
                target: "closed-form gradient and Hessian".into(),
            }),
        }
    }

    /// `log f_Y(y)` at a point of any dimension.
    pub fn log_eval_point(&self, y: &[f64]) -> f64 {
        match &self.backend {
            Backend::MvGaussian(m) => m.log_eval(&DVector::from_column_slice(y)),
            _ => self.eval_point(y).ln(),
        }
    }

    /// The model of `Y + c` (d=1): the new density is `f(y - c)`.
    pub fn translate(&self, c: f64) -> Result<DensityModel> {
        self.require_univariate()?;
        let mut out = self.clone();
        match &mut out.backend {
            Backend::Kernels(k) => k.centres.iter_mut().for_each(|x| *x += c),
            Backend::Atomic { locations, .. } => locations.iter_mut().for_each(|x| *x += c),
            Backend::MixtureQuad { means, .. } => means.iter_mut().for_each(|x| *x += c),
            Backend::ProductLaplace { locations, .. } => {
                locations.iter_mut().for_each(|x| x[0] += c)
            }
            Backend::MvGaussian(_) => unreachable!("univariate checked above"),
        }
        Ok(out)
    }

    /// `P(Y ≤ y)` by quadrature (d=1).
    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.require_univariate()?;
        let (lo, _) = self.support();
        if y <= lo {
            return Ok(0.0);
        }
        let r = integrate_with_breaks(|z| self.eval(z), lo, y, &self.breakpoints(), 1e-12, 1e-10)?;
        Ok(r.value.clamp(0.0, 1.0))
    }

    /// The `p`-quantile of `f_Y` by bisection on [`DensityModel::cdf`].
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(TweedieError::DomainError(format!(
                "quantile level {p} outside (0, 1)"
            )));
        }
        let (slo, shi) = self.support();
        let mut lo = if slo.is_finite() { slo } else { -1.0 };
        let mut hi = if shi.is_finite() { shi } else { 1.0 };
        let mut step = 1.0;
        while self.cdf(lo)? > p {
            lo -= step;
            step *= 2.0;
        }
        step = 1.0;
        while self.cdf(hi)? < p {
            hi += step;
            step *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo < 1e-10 * (1.0 + mid.abs()) {
                break;
            }
            if self.cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Exact marginal density of `Y = X + V`.
pub fn exact_density(prior: &PriorSpec, noise: &NoiseSpec) -> Result<DensityModel> {
    let noise = validate_noise(noise)?;
    let prior = prior.validate()?;
    let d = noise.dim();
    if let PriorSpec::SamplesOnly { .. } = prior {
        return Err(TweedieError::Unsupported {
            family: noise.family_name().to_string(),
            target: "exact density from a samples-only prior (use kde_fit)".into(),
        });
    }
    if prior.dim() != d {
        return Err(TweedieError::DimensionMismatch {
            expected: d,
            found: prior.dim(),
        });
    }

    let backend = match (&noise, &prior) {
        (NoiseSpec::Gaussian { location, sd }, PriorSpec::Atomic { atoms }) => {
            Backend::Kernels(Kernels::new(
                atoms
                    .iter()
                    .map(|a| (a.location.0[0] + location, a.weight, *sd))
                    .collect(),
            ))
        }
        (NoiseSpec::Gaussian { location, sd }, PriorSpec::GaussianMixture { components }) => {
            Backend::Kernels(Kernels::new(
                components
                    .iter()
                    .map(|c| {
                        let tau2 = c.covariance.to_matrix(1)[(0, 0)];
                        (c.mean.0[0] + location, c.weight, (sd * sd + tau2).sqrt())
                    })
                    .collect(),
            ))
        }
        (NoiseSpec::MultivariateGaussian { .. }, _) => {
            let s0 = noise.covariance_matrix().expect("gaussian noise");
            let parts = match &prior {
                PriorSpec::Atomic { atoms } => atoms
                    .iter()
                    .map(|a| {
                        (
                            DVector::from_column_slice(&a.location.0),
                            s0.clone(),
                            a.weight,
                        )
                    })
                    .collect(),
                PriorSpec::GaussianMixture { components } => components
                    .iter()
                    .map(|c| {
                        (
                            DVector::from_column_slice(&c.mean.0),
                            &s0 + c.covariance.to_matrix(d),
                            c.weight,
                        )
                    })
                    .collect(),
                PriorSpec::SamplesOnly { .. } => unreachable!(),
            };
            Backend::MvGaussian(MvMixture::new(parts)?)
        }
        (NoiseSpec::ProductLaplace { scale, .. }, PriorSpec::Atomic { atoms }) => {
            Backend::ProductLaplace {
                scale: *scale,
                locations: atoms.iter().map(|a| a.location.0.clone()).collect(),
                weights: atoms.iter().map(|a| a.weight).collect(),
            }
        }
        (NoiseSpec::ProductLaplace { dim, .. }, PriorSpec::GaussianMixture { .. }) if *dim > 1 => {
            return Err(TweedieError::Unsupported {
                family: noise.family_name().to_string(),
                target: "multivariate Gaussian-mixture prior".into(),
            })
        }
        (_, PriorSpec::Atomic { atoms }) => Backend::Atomic {
            noise: noise.clone(),
            locations: atoms.iter().map(|a| a.location.0[0]).collect(),
            weights: atoms.iter().map(|a| a.weight).collect(),
        },
        (_, PriorSpec::GaussianMixture { components }) => Backend::MixtureQuad {
            noise: noise.clone(),
            means: components.iter().map(|c| c.mean.0[0]).collect(),
            variances: components
                .iter()
                .map(|c| match c.covariance {
                    Spread::Scalar(v) => v,
                    Spread::Matrix(ref m) => m[0][0],
                })
                .collect(),
            weights: components.iter().map(|c| c.weight).collect(),
        },
        (_, PriorSpec::SamplesOnly { .. }) => unreachable!("rejected above"),
    };
    Ok(DensityModel {
        backend,
        noise: Some(noise),
        bandwidth: None,
    })
}

/// `f_Y^{(k)}(y)`.
pub fn density_deriv(model: &DensityModel, y: f64, k: usize) -> Result<f64> {
    model.deriv(y, k)
}

/// `D₊f_Y(a)`.
pub fn right_deriv(model: &DensityModel, a: f64) -> Result<f64> {
    model.right_deriv(a)
}

/// `∫_{lo}^{hi} kernel(z) f_Y(z) dz`, split at the kinks of `f_Y`.
pub fn integrate_kernel<K: Fn(f64) -> f64>(
    model: &DensityModel,
    kernel: K,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<QuadResult> {
    integrate_with_breaks(
        |z| kernel(z) * model.eval(z),
        lo,
        hi,
        &model.breakpoints(),
        tol,
        1e-12,
    )
}

fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Silverman's rule `0.9 · min(sd, IQR/1.34) · n^{-1/5}`.
/// Robust scale `min(sd, iqr/1.34)` used by the normal-reference rules.
fn reference_spread(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(TweedieError::TooFewSamples { n, min: 2 });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = sample_quantile(&sorted, 0.75) - sample_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if spread > 0.0 && spread.is_finite() {
        Ok(spread)
    } else {
        Err(TweedieError::DomainError(
            "samples have zero spread; give a fixed bandwidth".into(),
        ))
    }
}

pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    Ok(0.9 * reference_spread(samples)? * (samples.len() as f64).powf(-0.2))
}

pub fn first_derivative_bandwidth(samples: &[f64]) -> Result<f64> {
    let n = samples.len() as f64;
    Ok(reference_spread(samples)? * (0.8f64 * n.recip()).powf(1.0 / 7.0))
}

/// Univariate Gaussian-kernel density estimate.
pub fn kde_fit(samples: &[f64], rule: BandwidthRule) -> Result<DensityModel> {
    if samples.len() < KDE_MIN_SAMPLES {
        return Err(TweedieError::TooFewSamples {
            n: samples.len(),
            min: KDE_MIN_SAMPLES,
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(TweedieError::DomainError("non-finite sample".into()));
    }
    let h = match rule {
        BandwidthRule::Silverman => silverman_bandwidth(samples)?,
        BandwidthRule::FirstDerivative => first_derivative_bandwidth(samples)?,
        BandwidthRule::Fixed(h) => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(TweedieError::DomainError(format!(
                    "bandwidth {h} must be positive"
                )));
            }
            h
        }
    };
    let w = 1.0 / samples.len() as f64;
    Ok(DensityModel {
        backend: Backend::Kernels(Kernels::new(samples.iter().map(|x| (*x, w, h)).collect())),
        noise: None,
        bandwidth: Some(h),
    })
}
