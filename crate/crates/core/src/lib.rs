//! Numerical toolkit for polynomially ergodic gradient-drift diffusions
//!
//! The crate covers four pieces of machinery for the SDE
//! `dX_t = dB_t - ∇U(X_t) dt` in `R^d` whose potential grows logarithmically,
//! `U(x) ≈ (p + d) ln |x|` at infinity:
//!
//! - [`potential`]: built-in potential families, the radial profile `V`, and
//!   the reduced profile `V̄(y) = V(y) - d ln y` used by the 1-D comparison
//!   process.
//! - [`simulate`]: Euler–Maruyama paths of the full process and of the
//!   reflected radial process `dy = dw - V̄'(y) dt + dφ` on `[K, ∞)`, with
//!   Monte-Carlo hitting-time and state moments.
//! - [`quadrature`]: deterministic hitting-time moments `v^q(ξ) = E_ξ γ^q`
//!   through the nested-integral recursion, the invariant density of the
//!   radial process and its moments.
//! - [`analysis`]: power-law fits, polynomial bound checks, total-variation
//!   decay estimation and stochastic domination tests.

// `!(x > 0.0)` is how NaN gets rejected; index loops mirror the matrix algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod interp;
pub mod potential;
pub mod quadrature;
pub mod simulate;

mod numeric;

pub use numeric::log_space;

pub use analysis::{BoundReport, DecayFit};
pub use potential::{AngularPerturbation, PotentialSpec, ValidationReport};
pub use quadrature::{InvariantDensity, QuadratureConfig, VqStatus, VqTable};
pub use simulate::{MomentEstimate, PathSample, SimConfig};
