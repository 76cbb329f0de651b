//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Infinite endpoints are mapped onto `[0, 1)` with `x = a + t/(1 - t)` (and
//! its mirror image), so the whole range is handled by a single panel queue.
//! Interior break points split the range before refinement starts; the queue
//! then always bisects the panel with the largest error estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Result, TweedieError};

/// Maximum number of panel rule applications per call.
pub const PANEL_BUDGET: usize = 20_000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Value of a one-dimensional integral together with its error bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

impl QuadResult {
    pub fn zero() -> Self {
        QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 1,
        }
    }

    /// Sum of two independent integrals; errors add.
    pub fn combine(self, other: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            evaluations: self.evaluations + other.evaluations,
        }
    }

    pub fn scaled(self, factor: f64) -> QuadResult {
        QuadResult {
            value: self.value * factor,
            error_estimate: self.error_estimate * factor.abs(),
            evaluations: self.evaluations,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Finite,
    UpperInfinite(f64),
    LowerInfinite(f64),
}

impl Segment {
    /// Maps the panel coordinate to `x` and returns the Jacobian alongside.
    #[inline]
    fn map(self, t: f64) -> (f64, f64) {
        match self {
            Segment::Finite => (t, 1.0),
            Segment::UpperInfinite(a) => {
                let s = 1.0 - t;
                (a + t / s, 1.0 / (s * s))
            }
            Segment::LowerInfinite(b) => {
                let s = 1.0 - t;
                (b - t / s, 1.0 / (s * s))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    segment: usize,
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_panel<F: Fn(f64) -> f64>(f: &F, seg: Segment, lo: f64, hi: f64) -> (f64, f64) {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let eval = |t: f64| -> f64 {
        let (x, jac) = seg.map(t);
        let v = f(x) * jac;
        if v.is_finite() {
            v
        } else if !x.is_finite() || !jac.is_finite() {
            // Only reachable at the image of an infinite endpoint.
            0.0
        } else {
            v
        }
    };

    let fc = eval(centre);
    let mut res_k = WGK[7] * fc;
    let mut res_g = WG[3] * fc;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(centre - dx);
        let f2 = eval(centre + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Integrates `f` over `(lo, hi)`; either endpoint may be infinite.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    integrate_with_breaks(f, lo, hi, &[], abs_tol, rel_tol)
}

/// Like [`adaptive_integrate`], but first splits the range at `breaks`
/// (points outside `(lo, hi)` are ignored). Use it for kinks and jumps.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    if lo.is_nan() || hi.is_nan() {
        return Err(TweedieError::DomainError(
            "integration limits must not be NaN".into(),
        ));
    }
    if !(abs_tol >= 0.0 && rel_tol >= 0.0 && (abs_tol > 0.0 || rel_tol > 0.0)) {
        return Err(TweedieError::DomainError(format!(
            "tolerances must be non-negative and not both zero (abs {abs_tol}, rel {rel_tol})"
        )));
    }
    if lo == hi {
        return Ok(QuadResult::zero());
    }
    if lo > hi {
        return integrate_with_breaks(f, hi, lo, breaks, abs_tol, rel_tol).map(|r| r.scaled(-1.0));
    }

    let mut points: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b > lo && *b < hi)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    if lo == f64::NEG_INFINITY && hi == f64::INFINITY && points.is_empty() {
        points.push(0.0);
    }
    let mut nodes = Vec::with_capacity(points.len() + 2);
    nodes.push(lo);
    nodes.extend(points);
    nodes.push(hi);

    let mut segments = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut panels_used = 0usize;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (seg, plo, phi) = match (a.is_finite(), b.is_finite()) {
            (true, true) => (Segment::Finite, a, b),
            (true, false) => (Segment::UpperInfinite(a), 0.0, 1.0),
            (false, true) => (Segment::LowerInfinite(b), 0.0, 1.0),
            (false, false) => unreachable!("doubly infinite ranges are split above"),
        };
        segments.push(seg);
        let (value, error) = kronrod_panel(&f, seg, plo, phi);
        panels_used += 1;
        heap.push(Panel {
            segment: segments.len() - 1,
            lo: plo,
            hi: phi,
            value,
            error,
        });
    }

    let totals = |heap: &BinaryHeap<Panel>| -> (f64, f64) {
        heap.iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
    };

    let (mut value, mut error) = totals(&heap);
    loop {
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target {
            break;
        }
        if panels_used + 2 > PANEL_BUDGET {
            return Err(TweedieError::NonConvergence {
                error_estimate: error,
                tolerance: target,
                evaluations: panels_used * 15,
            });
        }
        let worst = heap.pop().expect("panel queue is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) || !worst.error.is_finite() {
            // Panel can no longer be split in floating point.
            heap.push(worst);
            let (v, e) = totals(&heap);
            return Err(TweedieError::NonConvergence {
                error_estimate: e,
                tolerance: abs_tol.max(rel_tol * v.abs()),
                evaluations: panels_used * 15,
            });
        }
        let seg = segments[worst.segment];
        let (v1, e1) = kronrod_panel(&f, seg, worst.lo, mid);
        let (v2, e2) = kronrod_panel(&f, seg, mid, worst.hi);
        panels_used += 2;
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        heap.push(Panel {
            segment: worst.segment,
            lo: worst.lo,
            hi: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            segment: worst.segment,
            lo: mid,
            hi: worst.hi,
            value: v2,
            error: e2,
        });
        if panels_used.is_multiple_of(64) {
            // Running sums drift; resynchronise.
            let (v, e) = totals(&heap);
            value = v;
            error = e;
        }
    }
    let (value, error) = totals(&heap);
    if !value.is_finite() {
        return Err(TweedieError::NonConvergence {
            error_estimate: f64::INFINITY,
            tolerance: abs_tol,
            evaluations: panels_used * 15,
        });
    }
    Ok(QuadResult {
        value,
        error_estimate: error,
        evaluations: panels_used * 15,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_on_unit_interval() {
        let r = adaptive_integrate(|_| 1.0, 0.0, 1.0, 1e-12, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
        assert!(r.evaluations >= 1);
        assert!(r.error_estimate >= 0.0);
    }

    #[test]
    fn standard_normal_mass_over_real_line() {
        let r = adaptive_integrate(
            |x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-12,
            1e-12,
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-11, "{}", r.value);
    }

    #[test]
    fn exponential_tail_mass() {
        let r = adaptive_integrate(|x| (-x).exp(), 0.0, f64::INFINITY, 1e-12, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn lower_infinite_and_reversed_limits() {
        let r = adaptive_integrate(|x| x.exp(), f64::NEG_INFINITY, 0.0, 1e-12, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
        let r = adaptive_integrate(|x| x, 1.0, 0.0, 1e-12, 1e-12).unwrap();
        assert!((r.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn kink_is_handled_with_breaks() {
        let f = |x: f64| (-(x - 0.3).abs()).exp();
        let exact = 2.0 - (-1.3f64).exp() - (-0.7f64).exp();
        let r = integrate_with_breaks(f, -1.0, 1.0, &[0.3], 1e-13, 1e-13).unwrap();
        assert!((r.value - exact).abs() < 1e-13);
        // Without the break the rule still gets there, with more panels.
        let r2 = adaptive_integrate(f, -1.0, 1.0, 1e-11, 1e-11).unwrap();
        assert!((r2.value - exact).abs() < 1e-10);
        assert!(r2.evaluations > r.evaluations);
    }

    #[test]
    fn heavy_tail_cauchy_mass() {
        let r = adaptive_integrate(
            |x| 1.0 / (PI * (1.0 + x * x)),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-12,
            1e-12,
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn budget_exhaustion_reports_nonconvergence() {
        let r = adaptive_integrate(|x: f64| (1.0 / x).sin() / x, 1e-9, 1.0, 1e-15, 0.0);
        assert!(matches!(r, Err(TweedieError::NonConvergence { .. })));
    }

    #[test]
    fn rejects_bad_tolerances() {
        assert!(adaptive_integrate(|x| x, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(adaptive_integrate(|x| x, 0.0, 1.0, -1.0, 1e-3).is_err());
    }
}
