//! Andreev levels of a one-dimensional SNS junction: semiclassical
//! quantization, finite-difference and shooting references, and the
//! scattering and special-function machinery around them.

// Validation compares with negated operators so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bs;
pub mod classical;
mod dd;
pub mod error;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod quadrature;
pub mod scattering;
pub mod specfun;

pub use error::{Error, Result};
pub use linalg::Matrix2C;
pub use model::{evaluate_profile, load_config, PotentialProfile, SimulationConfig};
pub use num_complex::Complex64;
