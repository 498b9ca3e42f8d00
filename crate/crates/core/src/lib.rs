//! Worst-case bounds for integrals of a CIR bridge under drift ambiguity.
//!
//! The benchmark model is a square-root diffusion pinned at zero at both ends of `[0, 1]`:
//!
//! ```text
//! dX_t = (a_t - r/(1-t) X_t) dt + sigma_t sqrt(r/(1-t) X_t) dB_t,   X_0 = X_1 = 0.
//! ```
//!
//! [`riccati`] solves the Riccati equation that characterises the worst-case drift,
//! [`bounds`] turns its solution into bound values and relative entropies,
//! [`montecarlo`] simulates benchmark and distorted paths, and [`calibration`] fits constant
//! coefficients to binned count data.

pub mod bounds;
pub mod calibration;
pub mod error;
pub mod exec;
pub mod moments;
pub mod montecarlo;
pub mod numerics;
pub mod params;
pub mod riccati;

pub use bounds::{compute_bound, compute_f, invert_kappa, sweep_psi, BoundResult};
pub use error::{BridgeError, Result};
pub use exec::Execution;
pub use params::{AmbiguityLevel, BridgeParams, Case, Curve, TimeGrid};
pub use riccati::{solve_a, RiccatiScheme, RiccatiSolution};
