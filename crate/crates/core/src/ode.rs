//! Adaptive Dormand–Prince 5(4) integration and the block-and-check
//! steady-state driver.
//!
//! The driver integrates in blocks of `t_block` model time units and checks
//! the fixed-point residual `max |F(y)|` after each block, stopping at the
//! first block that meets `residual_tol`. Convergence is judged on the
//! residual of the generator, not on state increments, so slow manifolds do
//! not cause premature exits; a residual that stops decreasing while still
//! above tolerance aborts the run instead of spinning forever.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{CoreError, Result};

/// Tolerances and horizon controls for steady-state evolution.
#[derive(Debug, Clone)]
pub struct SteadyConfig {
    /// Absolute local-error tolerance per step.
    pub abs_tol: f64,
    /// Relative local-error tolerance per step.
    pub rel_tol: f64,
    /// Fixed-point residual `max |F(y)|` at which the state counts as steady.
    pub residual_tol: f64,
    /// Integration block length between residual checks.
    pub t_block: f64,
    /// Maximum number of blocks before giving up.
    pub max_blocks: u64,
    /// Initial step size.
    pub h_init: f64,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            residual_tol: 1e-10,
            t_block: 1e4,
            max_blocks: 1_000_000,
            h_init: 1e-3,
        }
    }
}

impl SteadyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
            ("residual_tol", self.residual_tol),
            ("t_block", self.t_block),
            ("h_init", self.h_init),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(CoreError::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if self.max_blocks < 1 {
            return Err(CoreError::InvalidParameter {
                name: "max_blocks",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Outcome of a steady-state evolution.
#[derive(Debug, Clone)]
pub struct SteadyResult {
    pub state: Vec<f64>,
    /// `max |F(state)|` at exit.
    pub residual: f64,
    /// Total model time integrated.
    pub elapsed_time: f64,
    pub blocks_used: u64,
    /// When false the caller must not treat `state` as a steady state.
    pub converged: bool,
}

/// Step statistics for one integration span.
#[derive(Debug, Clone, Copy, Default)]
pub struct RkStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
}

// Dormand-Prince 5(4) tableau. Stage times are omitted: every right-hand
// side in this crate is autonomous.
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights equal the last A row (FSAL); E holds b5 - b4.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Integrate `dy/dt = f(y)` from `t0` to `t1` (autonomous right-hand side).
///
/// Returns the final state and step statistics. Fails on step-size underflow
/// (stiffness) and on non-finite right-hand sides.
pub fn rk45_integrate<F>(
    mut f: F,
    y0: &[f64],
    t_span: (f64, f64),
    abs_tol: f64,
    rel_tol: f64,
    h_init: f64,
) -> Result<(Vec<f64>, RkStats)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(CoreError::InvalidParameter {
            name: "t_span",
            reason: format!("need t1 > t0, got ({t0}, {t1})"),
        });
    }
    let n = y0.len();
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = h_init.min(span);
    let mut stats = RkStats::default();

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut y_stage = vec![0.0; n];
    let mut y_next = vec![0.0; n];

    f(&y, &mut k[0]);
    stats.rhs_evals += 1;

    while t < t1 {
        if h < 1e-14 * span {
            return Err(CoreError::StepSizeUnderflow { t, h });
        }
        if t + h > t1 {
            h = t1 - t;
        }

        for stage in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    let a = A[stage][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            f(&y_stage, &mut k[stage]);
            stats.rhs_evals += 1;
        }
        // 5th-order solution is stage 7's argument (A row 6 = b coefficients)
        y_next.copy_from_slice(&y_stage);

        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    e += E[j] * kj[i];
                }
            }
            e *= h;
            let scale = abs_tol + rel_tol * y[i].abs().max(y_next[i].abs());
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            return Err(CoreError::Divergence { what: "non-finite right-hand side", t });
        }

        if err <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut y_next);
            // FSAL: k7 of the accepted step is k1 of the next
            k.swap(0, 6);
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }

        let factor = if err == 0.0 {
            FAC_MAX
        } else {
            (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
        };
        h *= factor;
    }

    Ok((y, stats))
}

static STEADY_SOLVES: AtomicU64 = AtomicU64::new(0);

/// Number of `evolve_to_steady` invocations since process start. The
/// gradient-cost contract (two steady-state evaluations per observable
/// gradient with the relaxation backend) is asserted against this counter.
pub fn steady_solve_count() -> u64 {
    STEADY_SOLVES.load(Ordering::Relaxed)
}

/// Relax `dy/dt = f(y)` to its fixed point.
///
/// Integrates in blocks of `cfg.t_block`, checking `max |f(y)|` after each
/// block. Exhausting `max_blocks` yields `converged = false` rather than a
/// silently wrong state. A plateaued residual is an error: it indicates a
/// zero-mode drift (unprojected adjoint cotangent) or non-contracting
/// dynamics.
pub fn evolve_to_steady<F>(mut f: F, y0: &[f64], cfg: &SteadyConfig) -> Result<SteadyResult>
where
    F: FnMut(&[f64], &mut [f64]),
{
    cfg.validate()?;
    STEADY_SOLVES.fetch_add(1, Ordering::Relaxed);

    let n = y0.len();
    let mut y = y0.to_vec();
    let mut rhs = vec![0.0; n];
    let mut elapsed = 0.0;
    let mut h = cfg.h_init;

    // residual a number of blocks ago, for stall detection
    const STALL_WINDOW: u64 = 25;
    let mut window_best = f64::INFINITY;
    let mut last_window_best = f64::INFINITY;

    for block in 1..=cfg.max_blocks {
        let (y_new, stats) = rk45_integrate(
            &mut f,
            &y,
            (elapsed, elapsed + cfg.t_block),
            cfg.abs_tol,
            cfg.rel_tol,
            h,
        )?;
        y = y_new;
        elapsed += cfg.t_block;
        // carry a reasonable step guess into the next block
        h = (cfg.t_block / (stats.accepted.max(1) as f64)).min(cfg.t_block);

        let sup = y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if sup > 1e6 {
            return Err(CoreError::Divergence { what: "state norm exceeded 1e6", t: elapsed });
        }

        f(&y, &mut rhs);
        let residual = rhs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if residual <= cfg.residual_tol {
            return Ok(SteadyResult {
                state: y,
                residual,
                elapsed_time: elapsed,
                blocks_used: block,
                converged: true,
            });
        }

        window_best = window_best.min(residual);
        if block % STALL_WINDOW == 0 {
            if window_best >= 0.999 * last_window_best {
                return Err(CoreError::ResidualStalled { residual, blocks: block });
            }
            last_window_best = window_best;
            window_best = f64::INFINITY;
        }
    }

    f(&y, &mut rhs);
    let residual = rhs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    Ok(SteadyResult {
        state: y,
        residual,
        elapsed_time: elapsed,
        blocks_used: cfg.max_blocks,
        converged: false,
    })
}
