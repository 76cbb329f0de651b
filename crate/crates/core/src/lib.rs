// `!(x > 0.0)` deliberately rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod densities;
pub mod error;
pub mod evaluate;
pub mod gaussian;
pub mod laplace_mech;
pub mod noise;
pub mod numerics;
pub mod oracle;
pub mod types;

pub use densities::{exact_density, kde_fit, BandwidthRule, DensityModel};
pub use error::{Result, TweedieError};
pub use evaluate::{evaluate, EvalOptions};
pub use types::{
    validate_functional, validate_noise, EvalResult, FunctionalSpec, NoiseSpec, Point, PriorSpec,
    Value,
};
