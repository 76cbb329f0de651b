//! Principal-value Hilbert transform `𝓗[f](y) = (1/π) p.v.∫ f(y - t)/t dt`.

use std::f64::consts::PI;

use super::quad::{integrate_with_breaks, QuadResult};
use crate::error::{Result, TweedieError};

/// Inner cutoff below which the integrand is replaced by its t → 0 limit.
pub const INNER_CUTOFF: f64 = 1e-6;

/// Evaluates the Hilbert transform of `f` at `y`.
///
/// The folded integrand `(f(y - t) - f(y + t)) / t` has a removable singularity
/// at zero whose limit is `-2 f'(y)`; on `(0, INNER_CUTOFF)` that limit is used
/// directly. The tail beyond `T` is bounded by `l1_bound / (π T)` and `T` is
/// chosen so that this bound stays under a quarter of `abs_tol`.
pub fn hilbert_transform<F: Fn(f64) -> f64>(
    f: F,
    y: f64,
    l1_bound: f64,
    abs_tol: f64,
) -> Result<QuadResult> {
    if !(abs_tol > 0.0) || !(l1_bound > 0.0) {
        return Err(TweedieError::DomainError(
            "Hilbert transform needs a positive tolerance and L1 bound".into(),
        ));
    }
    let h = 1e-4;
    let slope = (f(y + h) - f(y - h)) / (2.0 * h);
    let inner = -2.0 * slope * INNER_CUTOFF / PI;

    let cutoff = (4.0 * l1_bound / (PI * abs_tol)).max(10.0);
    let tail_bound = l1_bound / (PI * cutoff);

    let mut breaks = Vec::new();
    let mut edge = 1e-3;
    while edge < cutoff {
        breaks.push(edge);
        edge *= 10.0;
    }
    let folded = |t: f64| (f(y - t) - f(y + t)) / (PI * t);
    let body = integrate_with_breaks(folded, INNER_CUTOFF, cutoff, &breaks, 0.5 * abs_tol, 1e-13)?;

    Ok(QuadResult {
        value: inner + body.value,
        error_estimate: body.error_estimate + tail_bound,
        evaluations: body.evaluations + 2,
    })
}
