//! Abstraction over parameterized dynamical generators `F(y; theta)`.
//!
//! Both physical models in this crate are (at most) affine in the state:
//! `F(y; theta) = A(theta) y + b(theta)`, where `A` is the state Jacobian.
//! The trait exposes exactly what the steady-state and implicit
//! differentiation machinery needs: fast real evaluation, the explicit
//! Jacobian with its gauge vectors, and the exact parameter derivative
//! `dF/dtheta` at a frozen state (obtained with forward-mode duals, never by
//! finite differences).

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::linalg::RealSuperOp;
use crate::ode::{evolve_to_steady, SteadyConfig, SteadyResult};

pub trait LiouvillianModel {
    /// Real state dimension (m^2 for an m-level density matrix).
    fn state_dim(&self) -> usize;

    /// Number of differentiable parameters.
    fn param_count(&self) -> usize;

    fn param_names(&self) -> Vec<&'static str>;

    /// Evaluate `F(y; theta)` into `dydt`.
    fn rhs(&self, theta: &[f64], y: &[f64], dydt: &mut [f64]);

    /// State Jacobian `A = dF/dy` with gauge (null) vectors when the
    /// generator is trace preserving.
    fn superop(&self, theta: &[f64]) -> Result<RealSuperOp>;

    /// Constant part `b = F(0; theta)`.
    fn affine_term(&self, theta: &[f64]) -> Vec<f64>;

    /// Exact `dF/dtheta` at frozen `y`: column j is the derivative of the
    /// right-hand side with respect to parameter j.
    fn dfdtheta(&self, theta: &[f64], y: &[f64]) -> Result<DMatrix<f64>>;

    /// Physical initial state for relaxation runs.
    fn initial_state(&self) -> Vec<f64>;

    /// Solver defaults appropriate for this model's rate scales.
    fn steady_config(&self) -> SteadyConfig;
}

fn affine_rhs(a: DMatrix<f64>, b: Vec<f64>) -> impl FnMut(&[f64], &mut [f64]) {
    let n = b.len();
    move |y, dy| {
        for i in 0..n {
            let mut acc = b[i];
            for j in 0..n {
                acc += a[(i, j)] * y[j];
            }
            dy[i] = acc;
        }
    }
}

/// Steady state by long-time relaxation of the model dynamics.
///
/// The generator is affine in the state, so `A` and `b` are assembled once
/// and the integrator only performs matrix-vector products.
pub fn ode_steady_state<M: LiouvillianModel>(
    model: &M,
    theta: &[f64],
    cfg: &SteadyConfig,
) -> Result<SteadyResult> {
    let y0 = model.initial_state();
    ode_steady_state_from(model, theta, &y0, cfg)
}

/// Relax from a caller-chosen initial state instead of the model default.
pub fn ode_steady_state_from<M: LiouvillianModel>(
    model: &M,
    theta: &[f64],
    y0: &[f64],
    cfg: &SteadyConfig,
) -> Result<SteadyResult> {
    let a = model.superop(theta)?.matrix;
    let b = model.affine_term(theta);
    evolve_to_steady(affine_rhs(a, b), y0, cfg)
}

/// Steady state by direct linear algebra.
///
/// For a trace-preserving generator (singular `A`, gauge vectors present) the
/// state solves `A x = 0`, `l . x = 1`, obtained from one LU solve of the
/// rank-one deflation `(A + l l^T) x = l`. For a nonsingular affine system it
/// is `x = -A^{-1} b`.
pub fn direct_steady_state<M: LiouvillianModel>(model: &M, theta: &[f64]) -> Result<Vec<f64>> {
    let op = model.superop(theta)?;
    match (&op.left_null, &op.right_null) {
        (Some(_), Some(r)) => {
            // with_trace_gauge already normalized l . r = 1
            Ok(r.as_slice().to_vec())
        }
        _ => {
            let b = DVector::from_vec(model.affine_term(theta));
            let x = op
                .matrix
                .clone()
                .lu()
                .solve(&(-b))
                .ok_or(CoreError::SingularMatrix { context: "affine steady state" })?;
            Ok(x.as_slice().to_vec())
        }
    }
}

/// Fixed-point residual `max |F(y)|`.
pub fn residual_inf<M: LiouvillianModel>(model: &M, theta: &[f64], y: &[f64]) -> f64 {
    let mut dy = vec![0.0; y.len()];
    model.rhs(theta, y, &mut dy);
    dy.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Scalar steady-state observable `g(y; theta)`.
///
/// Implementations must provide the value, the state cotangent
/// `dg/dy` at fixed parameters, and the explicit parameter partial
/// `dg/dtheta` at frozen state (dual-number exact).
pub trait SteadyObservable<M: LiouvillianModel> {
    fn name(&self) -> &'static str;
    fn value(&self, model: &M, theta: &[f64], y: &[f64]) -> f64;
    fn cotangent(&self, model: &M, theta: &[f64], y: &[f64]) -> Vec<f64>;
    fn param_partial(&self, model: &M, theta: &[f64], y: &[f64]) -> Result<Vec<f64>>;
}
