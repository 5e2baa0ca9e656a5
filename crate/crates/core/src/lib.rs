//! Numerics for null controllability of the degenerate parabolic equation
//! ∂ₜφ − ∂θθφ − ∂ᵣ(r^α∂ᵣφ) = χ_D f on 𝕋×(0,1).

// Negated float comparisons are deliberate: they reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bessel;
pub mod carleman;
pub mod cli;
pub mod control;
pub mod error;
pub mod evolution;
pub mod hp;
pub mod intervals;
pub mod linalg;
pub mod measurable;
pub mod model;
pub mod radial;
pub mod scenarios;
pub mod spectral_obs;

pub use error::{Error, Result};
