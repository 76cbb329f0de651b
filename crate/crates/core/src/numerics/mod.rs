//! Quadrature, singular-integral and special-function primitives.

pub mod hilbert;
pub mod quad;
pub mod special;

pub use hilbert::hilbert_transform;
pub use quad::{adaptive_integrate, integrate_with_breaks, QuadResult, PANEL_BUDGET};
pub use special::{hermite_he, phi_deriv, K_MAX};
