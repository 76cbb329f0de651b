//! Noise, prior and functional descriptions plus their validation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TweedieError};

const WEIGHT_TOL: f64 = 1e-12;

/// Highest moment order accepted by the Gaussian moment rows.
pub const MAX_MOMENT_ORDER: usize = 10;
/// Highest half power `m` accepted by `EvenRisk`.
pub const MAX_EVEN_RISK_POWER: usize = 5;

/// Additive noise law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseSpec {
    Gaussian {
        #[serde(default)]
        location: f64,
        sd: f64,
    },
    GeneralizedLaplace {
        #[serde(default)]
        location: f64,
        scale: f64,
        shape: f64,
    },
    Laplace {
        #[serde(default)]
        location: f64,
        scale: f64,
    },
    AsymmetricLaplace {
        #[serde(default)]
        location: f64,
        left_scale: f64,
        right_scale: f64,
    },
    Logistic {
        #[serde(default)]
        location: f64,
        scale: f64,
    },
    Gumbel {
        #[serde(default)]
        location: f64,
        scale: f64,
    },
    Cauchy {
        #[serde(default)]
        location: f64,
        scale: f64,
    },
    HyperbolicSecant {
        #[serde(default)]
        location: f64,
        scale: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    NoncentralChiSq {
        df: f64,
        noncentrality: f64,
    },
    InverseGaussian {
        mean: f64,
        shape: f64,
    },
    /// Independent Laplace(0, scale) noise on each of `dim` coordinates.
    ProductLaplace {
        scale: f64,
        dim: usize,
    },
    /// Centred Gaussian noise with a full covariance matrix.
    MultivariateGaussian {
        covariance: Vec<Vec<f64>>,
    },
}

impl NoiseSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            NoiseSpec::Gaussian { .. } => "gaussian",
            NoiseSpec::GeneralizedLaplace { .. } => "generalized_laplace",
            NoiseSpec::Laplace { .. } => "laplace",
            NoiseSpec::AsymmetricLaplace { .. } => "asymmetric_laplace",
            NoiseSpec::Logistic { .. } => "logistic",
            NoiseSpec::Gumbel { .. } => "gumbel",
            NoiseSpec::Cauchy { .. } => "cauchy",
            NoiseSpec::HyperbolicSecant { .. } => "hyperbolic_secant",
            NoiseSpec::Gamma { .. } => "gamma",
            NoiseSpec::NoncentralChiSq { .. } => "noncentral_chi_sq",
            NoiseSpec::InverseGaussian { .. } => "inverse_gaussian",
            NoiseSpec::ProductLaplace { .. } => "product_laplace",
            NoiseSpec::MultivariateGaussian { .. } => "multivariate_gaussian",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseSpec::ProductLaplace { dim, .. } => *dim,
            NoiseSpec::MultivariateGaussian { covariance } => covariance.len(),
            _ => 1,
        }
    }

    /// Covariance of multivariate Gaussian noise as a matrix.
    pub fn covariance_matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            NoiseSpec::MultivariateGaussian { covariance } => Some(rows_to_matrix(covariance)),
            NoiseSpec::Gaussian { sd, .. } => Some(DMatrix::from_element(1, 1, sd * sd)),
            _ => None,
        }
    }
}

/// A location in one or more dimensions. Serialized as a bare number in d=1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PointRepr", into = "PointRepr")]
pub struct Point(pub Vec<f64>);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PointRepr {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl From<PointRepr> for Point {
    fn from(r: PointRepr) -> Self {
        match r {
            PointRepr::Scalar(x) => Point(vec![x]),
            PointRepr::Vector(v) => Point(v),
        }
    }
}

impl From<Point> for PointRepr {
    fn from(p: Point) -> Self {
        if p.0.len() == 1 {
            PointRepr::Scalar(p.0[0])
        } else {
            PointRepr::Vector(p.0)
        }
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point(vec![x])
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl Point {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// The coordinate of a one-dimensional point.
    pub fn scalar(&self) -> Option<f64> {
        (self.0.len() == 1).then(|| self.0[0])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A variance (d=1) or covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Spread {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Spread {
    pub fn to_matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Spread::Scalar(v) => DMatrix::from_diagonal_element(dim, dim, *v),
            Spread::Matrix(rows) => rows_to_matrix(rows),
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Spread::Scalar(_) => None,
            Spread::Matrix(rows) => Some(rows.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Point,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Point,
    pub covariance: Spread,
    pub weight: f64,
}

/// Law of the latent signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorSpec {
    Atomic { atoms: Vec<Atom> },
    GaussianMixture { components: Vec<MixtureComponent> },
    SamplesOnly { samples: Vec<f64> },
}

impl PriorSpec {
    /// Univariate atomic prior from `(location, weight)` pairs.
    pub fn atomic(atoms: &[(f64, f64)]) -> PriorSpec {
        PriorSpec::Atomic {
            atoms: atoms
                .iter()
                .map(|&(x, w)| Atom {
                    location: Point(vec![x]),
                    weight: w,
                })
                .collect(),
        }
    }

    /// Multivariate atomic prior.
    pub fn atomic_vec(atoms: &[(Vec<f64>, f64)]) -> PriorSpec {
        PriorSpec::Atomic {
            atoms: atoms
                .iter()
                .map(|(x, w)| Atom {
                    location: Point(x.clone()),
                    weight: *w,
                })
                .collect(),
        }
    }

    pub fn point_mass(x: f64) -> PriorSpec {
        PriorSpec::atomic(&[(x, 1.0)])
    }

    /// Univariate Gaussian mixture from `(mean, variance, weight)` triples.
    pub fn gaussian_mixture(components: &[(f64, f64, f64)]) -> PriorSpec {
        PriorSpec::GaussianMixture {
            components: components
                .iter()
                .map(|&(m, v, w)| MixtureComponent {
                    mean: Point(vec![m]),
                    covariance: Spread::Scalar(v),
                    weight: w,
                })
                .collect(),
        }
    }

    pub fn normal(mean: f64, variance: f64) -> PriorSpec {
        PriorSpec::gaussian_mixture(&[(mean, variance, 1.0)])
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::Atomic { atoms } => atoms.first().map_or(1, |a| a.location.dim()),
            PriorSpec::GaussianMixture { components } => {
                components.first().map_or(1, |c| c.mean.dim())
            }
            PriorSpec::SamplesOnly { .. } => 1,
        }
    }

    /// Checks the invariants and returns a copy with weights renormalized.
    pub fn validate(&self) -> Result<PriorSpec> {
        match self {
            PriorSpec::Atomic { atoms } => {
                if atoms.is_empty() {
                    return Err(TweedieError::InvalidPrior("no atoms".into()));
                }
                let dim = atoms[0].location.dim();
                let weights: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
                let weights = normalize_weights(&weights)?;
                for (i, a) in atoms.iter().enumerate() {
                    check_point(&a.location, dim)?;
                    for b in &atoms[..i] {
                        if a.location == b.location {
                            return Err(TweedieError::InvalidPrior(format!(
                                "duplicate atom at {:?}",
                                a.location.0
                            )));
                        }
                    }
                }
                Ok(PriorSpec::Atomic {
                    atoms: atoms
                        .iter()
                        .zip(weights)
                        .map(|(a, weight)| Atom {
                            location: a.location.clone(),
                            weight,
                        })
                        .collect(),
                })
            }
            PriorSpec::GaussianMixture { components } => {
                if components.is_empty() {
                    return Err(TweedieError::InvalidPrior("no mixture components".into()));
                }
                let dim = components[0].mean.dim();
                let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
                let weights = normalize_weights(&weights)?;
                for c in components {
                    check_point(&c.mean, dim)?;
                    match &c.covariance {
                        Spread::Scalar(v) => {
                            if !(*v > 0.0 && v.is_finite()) {
                                return Err(TweedieError::InvalidPrior(format!(
                                    "component variance {v} must be positive"
                                )));
                            }
                        }
                        Spread::Matrix(rows) => {
                            if c.covariance.dim() != Some(dim) {
                                return Err(TweedieError::DimensionMismatch {
                                    expected: dim,
                                    found: rows.len(),
                                });
                            }
                            check_spd(rows, dim).map_err(|m| {
                                TweedieError::InvalidPrior(format!("component covariance {m}"))
                            })?;
                        }
                    }
                }
                Ok(PriorSpec::GaussianMixture {
                    components: components
                        .iter()
                        .zip(weights)
                        .map(|(c, weight)| MixtureComponent {
                            weight,
                            ..c.clone()
                        })
                        .collect(),
                })
            }
            PriorSpec::SamplesOnly { samples } => {
                if samples.iter().any(|x| !x.is_finite()) {
                    return Err(TweedieError::InvalidPrior("non-finite sample".into()));
                }
                Ok(self.clone())
            }
        }
    }
}

fn check_point(p: &Point, dim: usize) -> Result<()> {
    if p.dim() != dim {
        return Err(TweedieError::DimensionMismatch {
            expected: dim,
            found: p.dim(),
        });
    }
    if p.0.iter().any(|x| !x.is_finite()) {
        return Err(TweedieError::InvalidPrior("non-finite location".into()));
    }
    Ok(())
}

/// Strictly positive weights summing to one within 1e-12, renormalized.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(TweedieError::InvalidPrior(
            "weights must be strictly positive".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(TweedieError::InvalidPrior(format!(
            "weights sum to {total}, not 1"
        )));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN))
}

/// Symmetric positive definite check; the message explains a failure.
pub(crate) fn check_spd(rows: &[Vec<f64>], dim: usize) -> std::result::Result<(), String> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(format!("must be {dim}x{dim}"));
    }
    let m = rows_to_matrix(rows);
    if m.iter().any(|x| !x.is_finite()) {
        return Err("has non-finite entries".into());
    }
    for i in 0..dim {
        for j in 0..i {
            let scale = m[(i, j)].abs().max(m[(j, i)].abs()).max(1.0);
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err("is not symmetric".into());
            }
        }
    }
    if m.cholesky().is_none() {
        return Err("is not positive definite".into());
    }
    Ok(())
}

/// Posterior target `E[g(X) | Y = y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum FunctionalSpec {
    Mean,
    SecondMoment,
    Variance,
    RawMoment { order: usize },
    CenteredMoment { order: usize },
    Mgf { argument: Point },
    Cdf { threshold: f64 },
    SquaredRisk { threshold: f64 },
    EvenRisk { threshold: f64, half_power: usize },
    HingeLoss { threshold: f64 },
    PinballLoss { threshold: f64, quantile_level: f64 },
    AbsoluteRisk { threshold: f64 },
}

impl FunctionalSpec {
    pub fn mgf(t: f64) -> FunctionalSpec {
        FunctionalSpec::Mgf {
            argument: Point(vec![t]),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionalSpec::Mean => "mean",
            FunctionalSpec::SecondMoment => "second_moment",
            FunctionalSpec::Variance => "variance",
            FunctionalSpec::RawMoment { .. } => "raw_moment",
            FunctionalSpec::CenteredMoment { .. } => "centered_moment",
            FunctionalSpec::Mgf { .. } => "mgf",
            FunctionalSpec::Cdf { .. } => "cdf",
            FunctionalSpec::SquaredRisk { .. } => "squared_risk",
            FunctionalSpec::EvenRisk { .. } => "even_risk",
            FunctionalSpec::HingeLoss { .. } => "hinge_loss",
            FunctionalSpec::PinballLoss { .. } => "pinball_loss",
            FunctionalSpec::AbsoluteRisk { .. } => "absolute_risk",
        }
    }

    /// Short label including parameters, used for report rows and CSV headers.
    pub fn label(&self) -> String {
        let fmt_point = |p: &Point| {
            p.0.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        match self {
            FunctionalSpec::Mean | FunctionalSpec::SecondMoment | FunctionalSpec::Variance => {
                self.name().to_string()
            }
            FunctionalSpec::RawMoment { order } | FunctionalSpec::CenteredMoment { order } => {
                format!("{}[k={order}]", self.name())
            }
            FunctionalSpec::Mgf { argument } => format!("mgf[t={}]", fmt_point(argument)),
            FunctionalSpec::Cdf { threshold }
            | FunctionalSpec::SquaredRisk { threshold }
            | FunctionalSpec::HingeLoss { threshold }
            | FunctionalSpec::AbsoluteRisk { threshold } => {
                format!("{}[a={threshold}]", self.name())
            }
            FunctionalSpec::EvenRisk {
                threshold,
                half_power,
            } => format!("even_risk[a={threshold};m={half_power}]"),
            FunctionalSpec::PinballLoss {
                threshold,
                quantile_level,
            } => format!("pinball_loss[a={threshold};tau={quantile_level}]"),
        }
    }
}

/// Scalar, vector or matrix result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl Value {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    /// All entries in row-major order.
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            Value::Scalar(x) => vec![*x],
            Value::Vector(v) => v.clone(),
            Value::Matrix(m) => m.iter().flatten().copied().collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|x| x.is_finite())
    }

    /// Largest entrywise absolute difference; `None` if the shapes differ.
    pub fn max_abs_diff(&self, other: &Value) -> Option<f64> {
        let same_shape = match (self, other) {
            (Value::Scalar(_), Value::Scalar(_)) => true,
            (Value::Vector(a), Value::Vector(b)) => a.len() == b.len(),
            (Value::Matrix(a), Value::Matrix(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(r, s)| r.len() == s.len())
            }
            _ => false,
        };
        if !same_shape {
            return None;
        }
        Some(
            self.flatten()
                .iter()
                .zip(other.flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn from_vector(v: &DVector<f64>) -> Value {
        Value::Vector(v.iter().copied().collect())
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Value {
        Value::Matrix(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect(),
        )
    }
}

/// A computed posterior functional and its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub value: Value,
    pub density_at_point: f64,
    pub quadrature_error_estimate: f64,
    pub series_terms_used: usize,
    pub converged: bool,
}

impl EvalResult {
    pub fn scalar(value: f64, density: f64, error: f64) -> EvalResult {
        EvalResult {
            value: Value::Scalar(value),
            density_at_point: density,
            quadrature_error_estimate: error,
            series_terms_used: 0,
            converged: value.is_finite(),
        }
    }

    /// The scalar value; panics on vector or matrix results.
    pub fn value_f64(&self) -> f64 {
        self.value.as_scalar().expect("scalar-valued functional")
    }
}

fn positive(
    family: &'static str,
    parameter: &'static str,
    bound: &'static str,
    x: f64,
) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(TweedieError::ParamOutOfRange {
            family,
            parameter,
            bound,
        })
    }
}

fn finite(family: &'static str, parameter: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(TweedieError::ParamOutOfRange {
            family,
            parameter,
            bound: "a finite value",
        })
    }
}

/// Checks the family's parameter restrictions; boundary values are rejected.
pub fn validate_noise(spec: &NoiseSpec) -> Result<NoiseSpec> {
    let fam = spec.family_name();
    match *spec {
        NoiseSpec::Gaussian { location, sd } => {
            finite(fam, "location", location)?;
            positive(fam, "sd", "sd > 0", sd)?;
        }
        NoiseSpec::GeneralizedLaplace {
            location,
            scale,
            shape,
        } => {
            finite(fam, "location", location)?;
            positive(fam, "scale", "scale > 0", scale)?;
            if !(shape > 0.5 && shape.is_finite()) {
                return Err(TweedieError::ParamOutOfRange {
                    family: fam,
                    parameter: "shape",
                    bound: "shape > 1/2",
                });
            }
        }
        NoiseSpec::Laplace { location, scale }
        | NoiseSpec::Logistic { location, scale }
        | NoiseSpec::Gumbel { location, scale }
        | NoiseSpec::Cauchy { location, scale }
        | NoiseSpec::HyperbolicSecant { location, scale } => {
            finite(fam, "location", location)?;
            positive(fam, "scale", "scale > 0", scale)?;
        }
        NoiseSpec::AsymmetricLaplace {
            location,
            left_scale,
            right_scale,
        } => {
            finite(fam, "location", location)?;
            positive(fam, "left_scale", "left_scale > 0", left_scale)?;
            positive(fam, "right_scale", "right_scale > 0", right_scale)?;
        }
        NoiseSpec::Gamma { shape, scale } => {
            if !(shape > 1.0 && shape.is_finite()) {
                return Err(TweedieError::ParamOutOfRange {
                    family: fam,
                    parameter: "shape",
                    bound: "shape > 1",
                });
            }
            positive(fam, "scale", "scale > 0", scale)?;
        }
        NoiseSpec::NoncentralChiSq { df, noncentrality } => {
            if !(df > 2.0 && df.is_finite()) {
                return Err(TweedieError::ParamOutOfRange {
                    family: fam,
                    parameter: "df",
                    bound: "df > 2",
                });
            }
            if !(noncentrality >= 0.0 && noncentrality.is_finite()) {
                return Err(TweedieError::ParamOutOfRange {
                    family: fam,
                    parameter: "noncentrality",
                    bound: "noncentrality >= 0",
                });
            }
        }
        NoiseSpec::InverseGaussian { mean, shape } => {
            positive(fam, "mean", "mean > 0", mean)?;
            positive(fam, "shape", "shape > 0", shape)?;
        }
        NoiseSpec::ProductLaplace { scale, dim } => {
            positive(fam, "scale", "scale > 0", scale)?;
            if dim == 0 {
                return Err(TweedieError::ParamOutOfRange {
                    family: fam,
                    parameter: "dim",
                    bound: "dim >= 1",
                });
            }
        }
        NoiseSpec::MultivariateGaussian { ref covariance } => {
            if covariance.is_empty() || check_spd(covariance, covariance.len()).is_err() {
                return Err(TweedieError::ParamOutOfRange {
                    family: fam,
                    parameter: "covariance",
                    bound: "a symmetric positive definite matrix",
                });
            }
        }
    }
    Ok(spec.clone())
}

fn unsupported(noise: &NoiseSpec, f: &FunctionalSpec) -> TweedieError {
    TweedieError::Unsupported {
        family: noise.family_name().to_string(),
        target: f.label(),
    }
}

/// Rejects (noise, functional) pairs outside the supported catalogue.
pub fn validate_functional(fspec: &FunctionalSpec, noise: &NoiseSpec) -> Result<FunctionalSpec> {
    use FunctionalSpec as F;
    let d = noise.dim();

    // Parameter sanity first, independent of the family.
    match fspec {
        F::Mgf { argument } => {
            if argument.dim() != d {
                return Err(TweedieError::DimensionMismatch {
                    expected: d,
                    found: argument.dim(),
                });
            }
            if argument.0.iter().any(|t| !t.is_finite()) {
                return Err(TweedieError::DomainError(
                    "mgf argument must be finite".into(),
                ));
            }
        }
        F::Cdf { threshold }
        | F::SquaredRisk { threshold }
        | F::HingeLoss { threshold }
        | F::AbsoluteRisk { threshold }
        | F::EvenRisk { threshold, .. } => {
            if !threshold.is_finite() {
                return Err(TweedieError::DomainError("threshold must be finite".into()));
            }
        }
        F::PinballLoss {
            threshold,
            quantile_level,
        } => {
            if !threshold.is_finite() {
                return Err(TweedieError::DomainError("threshold must be finite".into()));
            }
            if !(*quantile_level > 0.0 && *quantile_level < 1.0) {
                return Err(TweedieError::DomainError(format!(
                    "pinball quantile level {quantile_level} must lie in (0, 1)"
                )));
            }
        }
        _ => {}
    }

    let ok = match noise {
        NoiseSpec::Gaussian { .. } => match fspec {
            F::RawMoment { order } | F::CenteredMoment { order } => *order <= MAX_MOMENT_ORDER,
            F::EvenRisk { half_power, .. } => *half_power <= MAX_EVEN_RISK_POWER,
            _ => true,
        },
        NoiseSpec::ProductLaplace { scale, dim } => {
            let table = if *dim == 1 {
                matches!(
                    fspec,
                    F::Mean
                        | F::SecondMoment
                        | F::Variance
                        | F::Mgf { .. }
                        | F::Cdf { .. }
                        | F::SquaredRisk { .. }
                        | F::HingeLoss { .. }
                        | F::PinballLoss { .. }
                        | F::AbsoluteRisk { .. }
                )
            } else {
                match fspec {
                    F::Mean => *dim <= 5,
                    F::Variance | F::Mgf { .. } => *dim <= 3,
                    _ => false,
                }
            };
            if table {
                if let F::Mgf { argument } = fspec {
                    let t_max = argument.0.iter().fold(0.0f64, |m, t| m.max(t.abs()));
                    if t_max >= 1.0 / scale {
                        return Err(TweedieError::MgfDomain {
                            t_max,
                            limit: 1.0 / scale,
                        });
                    }
                }
            }
            table
        }
        NoiseSpec::MultivariateGaussian { .. } => {
            d <= 5 && matches!(fspec, F::Mean | F::Variance | F::Mgf { .. })
        }
        _ => matches!(fspec, F::Mean),
    };
    if ok {
        Ok(fspec.clone())
    } else {
        Err(unsupported(noise, fspec))
    }
}
