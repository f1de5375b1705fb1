//! Exact steady-state parameter derivatives via the implicit function
//! theorem.
//!
//! Differentiating the fixed-point condition `F(y_ss; theta) = 0` gives
//!
//! ```text
//! dy_ss/dtheta = -A^{-1} (dF/dtheta),        A = dF/dy at the fixed point,
//! ```
//!
//! and an observable cotangent `v = dg/dy` therefore needs only the single
//! adjoint solve `A^T w = v`, after which `v . dy_ss/dtheta = -w . dF/dtheta`
//! for every parameter at once. Two interchangeable adjoint backends are
//! provided: a direct (LU, gauge-deflated) solve and the relaxation ODE
//! `dw/dt = A^T w - v`, whose fixed point solves the same system.
//!
//! Trace-preserving generators have a singular `A`: the trace functional `l`
//! spans the left null space and the steady state `r` the right one. The
//! adjoint system is then solvable only for cotangents orthogonal to `r`, so
//! every cotangent is first replaced by `v - (r . v) l`. This leaves the
//! gradient unchanged because `l . dy_ss/dtheta = d(tr y_ss)/dtheta = 0`;
//! without it the relaxation ODE drifts linearly along the zero mode and
//! never converges.

use nalgebra::DVector;

use crate::error::Result;
use crate::model::{direct_steady_state, ode_steady_state, LiouvillianModel, SteadyObservable};
use crate::ode::SteadyConfig;

/// How steady states and adjoint systems are solved.
///
/// `Relaxation` runs the paper-style protocol: two fixed-point relaxations
/// per gradient (forward state, then adjoint state), never touching a matrix
/// factorization. `Direct` solves both by LU with gauge deflation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Relaxation,
    Direct,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Relaxation => "relaxation",
            Backend::Direct => "direct",
        }
    }
}

/// Adjoint linear system `A^T w = v'` with optional gauge handling.
pub struct AdjointProblem<'a> {
    pub op: &'a crate::linalg::RealSuperOp,
    pub v: DVector<f64>,
}

/// Remove the right-null component of a cotangent:
/// `v' = v - (r . v) l`, which satisfies `r . v' = 0` given `l . r = 1`.
pub fn project_cotangent(
    v: &DVector<f64>,
    left_null: &DVector<f64>,
    right_null: &DVector<f64>,
) -> DVector<f64> {
    v - left_null * right_null.dot(v)
}

fn projected_cotangent(problem: &AdjointProblem<'_>) -> DVector<f64> {
    match (&problem.op.left_null, &problem.op.right_null) {
        (Some(l), Some(r)) => project_cotangent(&problem.v, l, r),
        _ => problem.v.clone(),
    }
}

/// Solve the adjoint system by LU (deflated when the generator has a zero
/// mode).
pub fn adjoint_direct(problem: &AdjointProblem<'_>) -> Result<DVector<f64>> {
    let v = projected_cotangent(problem);
    problem.op.solve_adjoint_deflated(&v)
}

/// Solve the adjoint system as the fixed point of `dw/dt = A^T w - v'`,
/// starting from `w = 0` (any start works up to gauge; zero gives the
/// minimum-norm transient).
pub fn adjoint_relaxation(problem: &AdjointProblem<'_>, cfg: &SteadyConfig) -> Result<DVector<f64>> {
    let v = projected_cotangent(problem);
    let n = v.len();
    let result = crate::ode::evolve_to_steady(
        |w, dw| {
            let aw = problem.op.apply_transpose(w);
            for i in 0..n {
                dw[i] = aw[i] - v[i];
            }
        },
        &vec![0.0; n],
        cfg,
    )?;
    if !result.converged {
        return Err(crate::error::CoreError::ResidualStalled {
            residual: result.residual,
            blocks: result.blocks_used,
        });
    }
    Ok(DVector::from_vec(result.state))
}

/// Residual `max |A^T w - v'|` of an adjoint solution.
pub fn adjoint_residual(problem: &AdjointProblem<'_>, w: &DVector<f64>) -> f64 {
    let v = projected_cotangent(problem);
    let aw = problem.op.apply_transpose(w.as_slice());
    aw.iter()
        .zip(v.iter())
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
}

/// Vector–Jacobian product `v . dy_ss/dtheta`, returned as one entry per
/// parameter: `-w . dF/dtheta` with `A^T w = v'`.
pub fn steady_state_vjp<M: LiouvillianModel>(
    model: &M,
    theta: &[f64],
    y_ss: &[f64],
    v: &DVector<f64>,
    backend: Backend,
    cfg: &SteadyConfig,
) -> Result<Vec<f64>> {
    let op = model.superop(theta)?;
    let problem = AdjointProblem { op: &op, v: v.clone() };
    let w = match backend {
        Backend::Direct => adjoint_direct(&problem)?,
        Backend::Relaxation => adjoint_relaxation(&problem, &adjoint_config(cfg))?,
    };
    let dfdtheta = model.dfdtheta(theta, y_ss)?;
    let grad = -dfdtheta.tr_mul(&w);
    Ok(grad.as_slice().to_vec())
}

// The adjoint state lives on a different scale than the physical state, so
// the absolute step tolerance follows the cotangent instead of the density
// coordinates.
fn adjoint_config(cfg: &SteadyConfig) -> SteadyConfig {
    SteadyConfig { abs_tol: 1e-14, ..cfg.clone() }
}

/// Full gradient report for one observable at one parameter point.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub observable: &'static str,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub backend: Backend,
    /// `max |A^T w - v'|` of the adjoint solution actually used.
    pub adjoint_residual: f64,
    /// Forward-state fixed-point residual.
    pub forward_residual: f64,
    /// `evolve_to_steady` invocations consumed by this gradient.
    pub steady_solves: u64,
}

/// Gradient of a steady-state observable with respect to every model
/// parameter: explicit partial at frozen state plus the implicit part through
/// the steady state. With the relaxation backend this performs exactly two
/// fixed-point relaxations (forward and adjoint), independent of the number
/// of parameters.
pub fn observable_gradient<M, O>(
    model: &M,
    obs: &O,
    theta: &[f64],
    backend: Backend,
    cfg: &SteadyConfig,
) -> Result<GradientReport>
where
    M: LiouvillianModel,
    O: SteadyObservable<M>,
{
    let solves_before = crate::ode::steady_solve_count();
    let y_ss = match backend {
        Backend::Relaxation => {
            let res = ode_steady_state(model, theta, cfg)?;
            if !res.converged {
                return Err(crate::error::CoreError::ResidualStalled {
                    residual: res.residual,
                    blocks: res.blocks_used,
                });
            }
            res.state
        }
        Backend::Direct => direct_steady_state(model, theta)?,
    };
    let forward_residual = crate::model::residual_inf(model, theta, &y_ss);

    let value = obs.value(model, theta, &y_ss);
    let explicit = obs.param_partial(model, theta, &y_ss)?;
    let v = DVector::from_vec(obs.cotangent(model, theta, &y_ss));

    let op = model.superop(theta)?;
    let problem = AdjointProblem { op: &op, v };
    let w = match backend {
        Backend::Direct => adjoint_direct(&problem)?,
        Backend::Relaxation => adjoint_relaxation(&problem, &adjoint_config(cfg))?,
    };
    let adj_res = adjoint_residual(&problem, &w);
    let dfdtheta = model.dfdtheta(theta, &y_ss)?;
    let implicit = -dfdtheta.tr_mul(&w);

    let gradient: Vec<f64> = explicit
        .iter()
        .zip(implicit.iter())
        .map(|(e, i)| e + i)
        .collect();
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(crate::error::CoreError::NonFiniteGradient);
    }

    Ok(GradientReport {
        observable: obs.name(),
        value,
        gradient,
        backend,
        adjoint_residual: adj_res,
        forward_residual,
        steady_solves: crate::ode::steady_solve_count() - solves_before,
    })
}

/// One column of the steady-state Jacobian: `dy_ss/dtheta_i`, from
/// `A x = -dF/dtheta_i` with the trace gauge `l . x = 0` (trace-preserving
/// case) or a plain LU solve (nonsingular case).
pub fn steady_state_jacobian_column<M: LiouvillianModel>(
    model: &M,
    theta: &[f64],
    y_ss: &[f64],
    param_index: usize,
) -> Result<Vec<f64>> {
    let op = model.superop(theta)?;
    let dfdtheta = model.dfdtheta(theta, y_ss)?;
    let b = -dfdtheta.column(param_index);
    let x = op.solve_primal_deflated(&b.into_owned())?;
    Ok(x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RealSuperOp;
    use crate::model::LiouvillianModel;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    /// F(y; k, c) = -k y + c, fixed point c / k.
    struct ScalarModel;

    impl LiouvillianModel for ScalarModel {
        fn state_dim(&self) -> usize {
            1
        }
        fn param_count(&self) -> usize {
            2
        }
        fn param_names(&self) -> Vec<&'static str> {
            vec!["k", "c"]
        }
        fn rhs(&self, theta: &[f64], y: &[f64], dydt: &mut [f64]) {
            dydt[0] = -theta[0] * y[0] + theta[1];
        }
        fn superop(&self, theta: &[f64]) -> crate::error::Result<RealSuperOp> {
            Ok(RealSuperOp::without_gauge(DMatrix::from_element(1, 1, -theta[0])))
        }
        fn affine_term(&self, theta: &[f64]) -> Vec<f64> {
            vec![theta[1]]
        }
        fn dfdtheta(&self, theta: &[f64], y: &[f64]) -> crate::error::Result<DMatrix<f64>> {
            crate::dual::jacobian_forward(
                |t| Ok(vec![-t[0] * y[0] + t[1]]),
                theta,
            )
        }
        fn initial_state(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn steady_config(&self) -> SteadyConfig {
            SteadyConfig { t_block: 5.0, ..SteadyConfig::default() }
        }
    }

    struct Identity;
    impl SteadyObservable<ScalarModel> for Identity {
        fn name(&self) -> &'static str {
            "y"
        }
        fn value(&self, _m: &ScalarModel, _t: &[f64], y: &[f64]) -> f64 {
            y[0]
        }
        fn cotangent(&self, _m: &ScalarModel, _t: &[f64], _y: &[f64]) -> Vec<f64> {
            vec![1.0]
        }
        fn param_partial(
            &self,
            _m: &ScalarModel,
            t: &[f64],
            _y: &[f64],
        ) -> crate::error::Result<Vec<f64>> {
            Ok(vec![0.0; t.len()])
        }
    }

    #[test]
    fn scalar_adjoint_both_backends() {
        // k = 2, v = 1: w solves A^T w = v with A = -2, so w = -0.5
        let model = ScalarModel;
        let theta = [2.0, 4.0];
        let op = model.superop(&theta).unwrap();
        let problem = AdjointProblem { op: &op, v: DVector::from_column_slice(&[1.0]) };
        let direct = adjoint_direct(&problem).unwrap();
        assert_relative_eq!(direct[0], -0.5, epsilon = 1e-12);
        let relaxed =
            adjoint_relaxation(&problem, &model.steady_config()).unwrap();
        assert_relative_eq!(relaxed[0], -0.5, epsilon = 1e-9);
    }

    #[test]
    fn scalar_vjp_closed_form() {
        // y_ss = c / k; d y_ss / dk = -c / k^2 = -1 at (k, c) = (2, 4);
        // d y_ss / dc = 1 / k = 0.5
        let model = ScalarModel;
        let theta = [2.0, 4.0];
        let y_ss = [2.0];
        for backend in [Backend::Direct, Backend::Relaxation] {
            let g = steady_state_vjp(
                &model,
                &theta,
                &y_ss,
                &DVector::from_column_slice(&[1.0]),
                backend,
                &model.steady_config(),
            )
            .unwrap();
            assert_relative_eq!(g[0], -1.0, epsilon = 1e-8);
            assert_relative_eq!(g[1], 0.5, epsilon = 1e-8);
        }
    }

    #[test]
    fn gradient_report_counts_relaxation_solves() {
        let model = ScalarModel;
        let report = observable_gradient(
            &model,
            &Identity,
            &[2.0, 4.0],
            Backend::Relaxation,
            &model.steady_config(),
        )
        .unwrap();
        assert_eq!(report.steady_solves, 2);
        assert_relative_eq!(report.value, 2.0, epsilon = 1e-9);
        assert_relative_eq!(report.gradient[0], -1.0, epsilon = 1e-7);
        assert!(report.adjoint_residual < 1e-8);

        let direct = observable_gradient(
            &model,
            &Identity,
            &[2.0, 4.0],
            Backend::Direct,
            &model.steady_config(),
        )
        .unwrap();
        assert_eq!(direct.steady_solves, 0);
        assert_relative_eq!(direct.gradient[0], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn projection_identities() {
        let l = DVector::from_column_slice(&[1.0, 1.0, 0.0]);
        let r = DVector::from_column_slice(&[0.25, 0.75, 0.1]);
        // l . r = 1 by construction
        assert_relative_eq!(l.dot(&r), 1.0, epsilon = 1e-15);

        // a cotangent already orthogonal to r is untouched
        let v = DVector::from_column_slice(&[0.4, -1.0, 3.5]);
        let v_perp = &v - &r * (r.dot(&v) / r.dot(&r));
        let p = project_cotangent(&v_perp, &l, &r);
        // r-component is annihilated
        assert_relative_eq!(r.dot(&p), 0.0, epsilon = 1e-12);

        // projecting the r direction itself kills its r-component
        let p2 = project_cotangent(&r, &l, &r);
        assert_relative_eq!(r.dot(&p2), 0.0, epsilon = 1e-12);
    }
}
