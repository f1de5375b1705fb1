//! Steady states of parameterized quantum master equations, exact
//! steady-state parameter derivatives via the implicit function theorem, and
//! gradient-based inverse design of open-system models.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: real-coordinate density matrices and deflated solves for
//!   singular generators;
//! - [`dual`]: forward-mode automatic differentiation (multi-tangent dual
//!   numbers);
//! - [`ode`]: adaptive Dormand–Prince integration and the fixed-point
//!   relaxation driver;
//! - [`model`]: the generator abstraction shared by the physical models;
//! - [`implicit`]: observable gradients through the steady state, with
//!   interchangeable direct and relaxation adjoint backends;
//! - [`redfield`]: the three-level quantum heat-transfer model;
//! - [`vsystem`]: the donor–acceptor energy-transfer model under incoherent
//!   light;
//! - [`optimizer`]: Adam with constrained parameter transforms and seeded
//!   restarts;
//! - [`oracle`]: independent finite-difference and null-space checks.

pub mod dual;
pub mod error;
pub mod implicit;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod optimizer;
pub mod oracle;
pub mod redfield;
pub mod vsystem;

pub use error::{CoreError, Result};
