//! Single entry point routing a (noise, functional) pair to its formula module.

use serde::{Deserialize, Serialize};

use crate::catalog::posterior_mean;
use crate::densities::DensityModel;
use crate::error::{Result, TweedieError};
use crate::gaussian::{gauss_functional_with, gauss_multivariate, MvTarget, SeriesOptions};
use crate::laplace_mech::{lm_cov, lm_functional_1d, lm_mean_vec, lm_mgf};
use crate::types::{validate_functional, validate_noise, EvalResult, FunctionalSpec, NoiseSpec};

/// Accuracy settings shared by every formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Absolute tolerance on the returned value for quadrature-based formulas.
    pub tol: f64,
    pub series: SeriesOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            tol: 1e-9,
            series: SeriesOptions::default(),
        }
    }
}

/// Evaluates `fspec` at `y` from the marginal density `model` under `noise`.
pub fn evaluate(
    noise: &NoiseSpec,
    model: &DensityModel,
    y: &[f64],
    fspec: &FunctionalSpec,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    let noise = validate_noise(noise)?;
    let fspec = validate_functional(fspec, &noise)?;
    let d = noise.dim();
    if y.len() != d || model.dim() != d {
        return Err(TweedieError::DimensionMismatch {
            expected: d,
            found: if y.len() != d { y.len() } else { model.dim() },
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(TweedieError::DomainError(
            "observation must be finite".into(),
        ));
    }
    match noise {
        NoiseSpec::Gaussian { location, sd } => {
            if location == 0.0 {
                gauss_functional_with(sd * sd, model, y[0], &fspec, &opts.series)
            } else {
                let centred = model.translate(-location)?;
                gauss_functional_with(sd * sd, &centred, y[0] - location, &fspec, &opts.series)
            }
        }
        NoiseSpec::ProductLaplace { scale, dim: 1 } => {
            lm_functional_1d(scale, model, y[0], &fspec, opts.tol)
        }
        NoiseSpec::ProductLaplace { scale, .. } => match &fspec {
            FunctionalSpec::Mean => lm_mean_vec(scale, model, y, opts.tol),
            FunctionalSpec::Variance => lm_cov(scale, model, y, opts.tol),
            FunctionalSpec::Mgf { argument } => {
                lm_mgf(scale, model, y, argument.as_slice(), opts.tol)
            }
            _ => unreachable!("rejected by validate_functional"),
        },
        NoiseSpec::MultivariateGaussian { .. } => {
            let cov = noise
                .covariance_matrix()
                .expect("multivariate noise has a covariance");
            let target = match &fspec {
                FunctionalSpec::Mean => MvTarget::Mean,
                FunctionalSpec::Variance => MvTarget::Cov,
                FunctionalSpec::Mgf { argument } => MvTarget::Mgf(argument.0.clone()),
                _ => unreachable!("rejected by validate_functional"),
            };
            gauss_multivariate(&cov, model, y, &target)
        }
        _ => posterior_mean(&noise, model, y[0], opts.tol),
    }
}
