//! Three-level quantum heat-transfer model under Markovian Redfield theory.
//!
//! The system is a ground state `|g>` at zero energy plus two sites
//! `|1>, |2>` with on-site energies theta_1, theta_2 and hopping J. Three
//! independent bosonic baths couple through
//!
//! ```text
//! S^H = a0 |g><1| + a1 |g><2| + h.c.      (hot,   T_H)
//! S^C = b0 |g><1| + b1 |g><2| + h.c.      (cold,  T_C)
//! S^D = |1><2| + h.c.                     (decoherence probe, T_D)
//! ```
//!
//! In the eigenbasis `{|g>, |e->, |e+>}` the generator is
//!
//! ```text
//! d rho_{mu nu}/dt = -i w_{mu nu} rho_{mu nu}
//!                    + sum_alpha sum_{kappa lambda} R^alpha_{mu nu, kappa lambda} rho_{kappa lambda},
//! R^alpha_{mu nu, kappa lambda} = G+_{lambda nu, mu kappa} + G-_{lambda nu, mu kappa}
//!     - delta_{nu lambda} sum_l G+_{mu l, l kappa}
//!     - delta_{mu kappa}  sum_l G-_{lambda l, l nu},
//! G+_{lambda nu, mu kappa} = S_{lambda nu} S_{mu kappa} W(w_{kappa mu}),
//! G-_{lambda nu, mu kappa} = S_{lambda nu} S_{mu kappa} W(w_{lambda nu}),
//! ```
//!
//! with Ohmic spectral density `G(w) = gamma w exp(-w / w_c)` and the
//! golden-rule rate `W(w) = G(w)(n(w) + 1)` for `w > 0`, `G(|w|) n(|w|)` for
//! `w < 0`, and the continuous limit `gamma T` at `w = 0`. The frequency
//! arguments of `G+-` are fixed by requiring that a single bath thermalizes
//! the system to its Gibbs state (the opposite assignment produces inverted
//! populations and is rejected by the thermalization test). The Lamb shift is
//! dropped, so the whole tensor is real and the generator closes over the
//! real density-matrix coordinates.
//!
//! Heat currents are `J_alpha = Tr[H_S (R^alpha rho_ss)]`; at the steady
//! state they sum to zero. The rectification coefficient compares `|J_H|`
//! before and after exchanging the hot and cold bath temperatures.

use nalgebra::{DMatrix, DVector};

use crate::dual::{jacobian_forward, seed, Scalar};
use crate::error::{CoreError, Result};
use crate::linalg::{eig_herm_2x2, RealSuperOp};
use crate::model::{LiouvillianModel, SteadyObservable};
use crate::ode::SteadyConfig;

/// Default bath temperatures (hot, cold, decoherence).
pub const DEFAULT_TEMPS: [f64; 3] = [0.15, 0.10, 0.12];
/// Weak-coupling bound on every friction coefficient.
pub const GAMMA_MAX: f64 = 0.0025;
/// Default Ohmic cutoff. Large against every transition frequency in this
/// model family (|w| < ~1), so the spectral density is essentially linear
/// over the active band.
pub const DEFAULT_OMEGA_C: f64 = 30.0;

const DIM: usize = 9;
const LEVELS: usize = 3;

/// Physical parameters of the heat-transfer model.
#[derive(Debug, Clone)]
pub struct HeatModelParams {
    pub theta1: f64,
    pub theta2: f64,
    pub j: f64,
    /// Hot-bath site couplings (a0, a1).
    pub a: [f64; 2],
    /// Cold-bath site couplings (b0, b1).
    pub b: [f64; 2],
    /// Friction coefficients (gamma_H, gamma_C, gamma_D).
    pub gamma: [f64; 3],
    pub temps: [f64; 3],
    pub omega_c: f64,
}

impl HeatModelParams {
    /// Degenerate-site model (theta1 = theta2 = theta).
    pub fn degenerate(theta: f64, j: f64, a: [f64; 2], b: [f64; 2], gamma: [f64; 3]) -> Self {
        HeatModelParams {
            theta1: theta,
            theta2: theta,
            j,
            a,
            b,
            gamma,
            temps: DEFAULT_TEMPS,
            omega_c: DEFAULT_OMEGA_C,
        }
    }

    /// Site-to-bath wiring used for rectification: hot on site 1, cold on
    /// site 2.
    pub fn rectifier(theta: f64, j: f64, gamma: [f64; 3]) -> Self {
        Self::degenerate(theta, j, [1.0, 0.0], [0.0, 1.0], gamma)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v, lo, hi) in [
            ("a0", self.a[0], 0.0, 1.0),
            ("a1", self.a[1], 0.0, 1.0),
            ("b0", self.b[0], 0.0, 1.0),
            ("b1", self.b[1], 0.0, 1.0),
            ("gamma_H", self.gamma[0], 0.0, GAMMA_MAX),
            ("gamma_C", self.gamma[1], 0.0, GAMMA_MAX),
            ("gamma_D", self.gamma[2], 0.0, GAMMA_MAX),
        ] {
            if !(lo..=hi).contains(&v) {
                return Err(CoreError::InvalidParameter {
                    name,
                    reason: format!("{v} outside [{lo}, {hi}]"),
                });
            }
        }
        for (name, v) in [("T_H", self.temps[0]), ("T_C", self.temps[1]), ("T_D", self.temps[2])] {
            if !(v > 0.0) {
                return Err(CoreError::InvalidParameter { name, reason: format!("{v} must be positive") });
            }
        }
        if !(self.omega_c > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "omega_c",
                reason: format!("{} must be positive", self.omega_c),
            });
        }
        if self.j < 0.0 {
            return Err(CoreError::InvalidParameter {
                name: "j",
                reason: format!("{} must be nonnegative", self.j),
            });
        }
        Ok(())
    }

    /// Differentiable parameter vector in the layout expected by
    /// [`HeatModel`] with the matching variant.
    pub fn theta_vec(&self, variant: HeatVariant) -> Vec<f64> {
        match variant {
            HeatVariant::Degenerate => vec![
                self.theta1, self.j, self.a[0], self.a[1], self.b[0], self.b[1],
                self.gamma[0], self.gamma[1], self.gamma[2],
            ],
            HeatVariant::NonDegenerate => vec![
                self.theta1, self.theta2, self.j, self.a[0], self.a[1], self.b[0], self.b[1],
                self.gamma[0], self.gamma[1], self.gamma[2],
            ],
        }
    }
}

/// Which sites are independently parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatVariant {
    /// One shared on-site energy: `theta = [theta, J, a0, a1, b0, b1, gH, gC, gD]`.
    Degenerate,
    /// Independent site energies: `theta = [theta1, theta2, J, a0, a1, b0, b1, gH, gC, gD]`.
    NonDegenerate,
}

/// One of the three baths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bath {
    Hot = 0,
    Cold = 1,
    Decoherence = 2,
}

impl Bath {
    pub const ALL: [Bath; 3] = [Bath::Hot, Bath::Cold, Bath::Decoherence];

    pub fn as_str(self) -> &'static str {
        match self {
            Bath::Hot => "J_H",
            Bath::Cold => "J_C",
            Bath::Decoherence => "J_D",
        }
    }
}

/// Half-sided bath integral
/// `Upsilon(w) = G(w)[n(w) + 1]/2` for `w > 0`, `G(|w|) n(|w|)/2` for
/// `w < 0`, and the continuous limit `gamma T / 2` at `w = 0`, with
/// `G(w) = gamma w exp(-w/w_c)`.
pub fn upsilon<S: Scalar>(omega: S, gamma: S, temp: f64, omega_c: f64) -> S {
    let half = S::constant(0.5);
    if omega.value().abs() < 1e-13 {
        return gamma * S::constant(temp) * half;
    }
    let absw = if omega.value() > 0.0 { omega } else { -omega };
    let spectral = gamma * absw * (-absw * S::constant(1.0 / omega_c)).exp();
    let occupation = S::constant(1.0) / (absw * S::constant(1.0 / temp)).exp_m1();
    if omega.value() > 0.0 {
        half * spectral * (occupation + S::constant(1.0))
    } else {
        half * spectral * occupation
    }
}

/// Golden-rule transition rate: the full Fourier transform of the bath
/// correlation function, i.e. twice the one-sided [`upsilon`] integral.
fn bath_rate<S: Scalar>(omega: S, gamma: S, temp: f64, omega_c: f64) -> S {
    S::constant(2.0) * upsilon(omega, gamma, temp, omega_c)
}

/// Eigensystem data: energies `(0, e-, e+)`, mixing angle, and the three
/// bath-coupling operators rotated into the eigenbasis.
pub struct EigenSystem<S: Scalar> {
    pub energies: [S; LEVELS],
    pub theta_mix: S,
    /// `s_ops[alpha][i][j]`, real symmetric.
    pub s_ops: [[[S; LEVELS]; LEVELS]; 3],
}

/// The heat-transfer model as a differentiable generator. Temperatures and
/// cutoff are fixed configuration; everything in the parameter vector is
/// differentiated.
#[derive(Debug, Clone)]
pub struct HeatModel {
    pub temps: [f64; 3],
    pub omega_c: f64,
    pub variant: HeatVariant,
}

impl HeatModel {
    pub fn degenerate() -> Self {
        HeatModel { temps: DEFAULT_TEMPS, omega_c: DEFAULT_OMEGA_C, variant: HeatVariant::Degenerate }
    }

    pub fn non_degenerate() -> Self {
        HeatModel { temps: DEFAULT_TEMPS, omega_c: DEFAULT_OMEGA_C, variant: HeatVariant::NonDegenerate }
    }

    pub fn for_params(params: &HeatModelParams, variant: HeatVariant) -> Self {
        HeatModel { temps: params.temps, omega_c: params.omega_c, variant }
    }

    fn unpack<S: Scalar>(&self, theta: &[S]) -> (S, S, S, [S; 2], [S; 2], [S; 3]) {
        match self.variant {
            HeatVariant::Degenerate => (
                theta[0], theta[0], theta[1],
                [theta[2], theta[3]],
                [theta[4], theta[5]],
                [theta[6], theta[7], theta[8]],
            ),
            HeatVariant::NonDegenerate => (
                theta[0], theta[1], theta[2],
                [theta[3], theta[4]],
                [theta[5], theta[6]],
                [theta[7], theta[8], theta[9]],
            ),
        }
    }

    /// Diagonalize the excited block and rotate the coupling operators.
    pub fn eigensystem<S: Scalar>(&self, theta: &[S]) -> EigenSystem<S> {
        let (t1, t2, j, a, b, _) = self.unpack(theta);
        let (e_minus, e_plus, mix) = eig_herm_2x2(t1, t2, j);
        let zero = S::constant(0.0);
        let (c, s) = (mix.cos(), mix.sin());

        // |1> = c |e+> - s |e->,  |2> = s |e+> + c |e->
        let mut ops = [[[zero; LEVELS]; LEVELS]; 3];
        for (op, x) in ops.iter_mut().take(2).zip([a, b]) {
            let plus = x[0] * c + x[1] * s; // <g|S|e+>
            let minus = x[1] * c - x[0] * s; // <g|S|e->
            op[0][2] = plus;
            op[2][0] = plus;
            op[0][1] = minus;
            op[1][0] = minus;
        }
        let two_sc = S::constant(2.0) * s * c;
        let c2 = c * c - s * s;
        ops[2][2][2] = two_sc;
        ops[2][1][1] = -two_sc;
        ops[2][1][2] = c2;
        ops[2][2][1] = c2;

        EigenSystem { energies: [zero, e_minus, e_plus], theta_mix: mix, s_ops: ops }
    }

    /// Redfield tensor of one bath over the eigenbasis,
    /// `R[mu][nu][kappa][lambda]`.
    pub fn redfield_tensor<S: Scalar>(
        &self,
        eig: &EigenSystem<S>,
        theta: &[S],
        bath: Bath,
    ) -> [[[[S; LEVELS]; LEVELS]; LEVELS]; LEVELS] {
        let (_, _, _, _, _, gammas) = self.unpack(theta);
        let idx = bath as usize;
        let gamma = gammas[idx];
        let temp = self.temps[idx];
        let s_op = &eig.s_ops[idx];
        let zero = S::constant(0.0);

        let mut w = [[zero; LEVELS]; LEVELS];
        let mut rate = [[zero; LEVELS]; LEVELS];
        for i in 0..LEVELS {
            for j in 0..LEVELS {
                w[i][j] = eig.energies[i] - eig.energies[j];
                rate[i][j] = bath_rate(w[i][j], gamma, temp, self.omega_c);
            }
        }

        let mut r = [[[[zero; LEVELS]; LEVELS]; LEVELS]; LEVELS];
        for mu in 0..LEVELS {
            for nu in 0..LEVELS {
                for ka in 0..LEVELS {
                    for la in 0..LEVELS {
                        let mut val = s_op[la][nu] * s_op[mu][ka] * (rate[ka][mu] + rate[la][nu]);
                        if nu == la {
                            for l in 0..LEVELS {
                                val = val - s_op[mu][l] * s_op[l][ka] * rate[ka][l];
                            }
                        }
                        if mu == ka {
                            for l in 0..LEVELS {
                                val = val - s_op[la][l] * s_op[l][nu] * rate[la][l];
                            }
                        }
                        r[mu][nu][ka][la] = val;
                    }
                }
            }
        }
        r
    }

    /// Dense generator over the nine real coordinates, row-major.
    pub fn liouvillian_dense<S: Scalar>(&self, theta: &[S]) -> Vec<S> {
        let eig = self.eigensystem(theta);
        let tensors: Vec<_> = Bath::ALL
            .iter()
            .map(|&b| self.redfield_tensor(&eig, theta, b))
            .collect();
        let zero = S::constant(0.0);

        let mut l = vec![zero; DIM * DIM];
        for col in 0..DIM {
            let (x, y) = basis_matrices(col);
            // F_X = w o Y + sum_alpha R X ; F_Y = -w o X + sum_alpha R Y
            let mut fx = [[zero; LEVELS]; LEVELS];
            let mut fy = [[zero; LEVELS]; LEVELS];
            for mu in 0..LEVELS {
                for nu in 0..LEVELS {
                    let w_mn = eig.energies[mu] - eig.energies[nu];
                    let mut sx = zero;
                    let mut sy = zero;
                    for r in &tensors {
                        for ka in 0..LEVELS {
                            for la in 0..LEVELS {
                                if x[ka][la] != 0.0 {
                                    sx = sx + r[mu][nu][ka][la] * S::constant(x[ka][la]);
                                }
                                if y[ka][la] != 0.0 {
                                    sy = sy + r[mu][nu][ka][la] * S::constant(y[ka][la]);
                                }
                            }
                        }
                    }
                    fx[mu][nu] = w_mn * S::constant(y[mu][nu]) + sx;
                    fy[mu][nu] = -w_mn * S::constant(x[mu][nu]) + sy;
                }
            }
            for row in 0..DIM {
                l[row * DIM + col] = read_coord(&fx, &fy, row);
            }
        }
        l
    }

    /// Linear functional giving the heat current of one bath:
    /// `J_alpha(rho) = sum_mu eps_mu (R^alpha rho)_{mu mu} = w . coords`.
    pub fn heat_current_weights<S: Scalar>(&self, theta: &[S], bath: Bath) -> [S; DIM] {
        let eig = self.eigensystem(theta);
        let r = self.redfield_tensor(&eig, theta, bath);
        let zero = S::constant(0.0);
        let mut weights = [zero; DIM];
        for (col, wcol) in weights.iter_mut().enumerate() {
            let (x, y) = basis_matrices(col);
            let mut acc = zero;
            for mu in 0..LEVELS {
                for ka in 0..LEVELS {
                    for la in 0..LEVELS {
                        if x[ka][la] != 0.0 {
                            acc = acc + eig.energies[mu] * r[mu][mu][ka][la] * S::constant(x[ka][la]);
                        }
                        if y[ka][la] != 0.0 {
                            acc = acc + eig.energies[mu] * r[mu][mu][ka][la] * S::constant(y[ka][la]);
                        }
                    }
                }
            }
            *wcol = acc;
        }
        weights
    }
}

/// Real/imaginary basis patterns of coordinate `j` as 3x3 arrays.
fn basis_matrices(j: usize) -> ([[f64; LEVELS]; LEVELS], [[f64; LEVELS]; LEVELS]) {
    let mut x = [[0.0; LEVELS]; LEVELS];
    let mut y = [[0.0; LEVELS]; LEVELS];
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    if j < LEVELS {
        x[j][j] = 1.0;
    } else if j < LEVELS + 3 {
        let (i, k) = PAIRS[j - LEVELS];
        x[i][k] = 1.0;
        x[k][i] = 1.0;
    } else {
        let (i, k) = PAIRS[j - LEVELS - 3];
        y[i][k] = 1.0;
        y[k][i] = -1.0;
    }
    (x, y)
}

/// Read coordinate `row` from the (symmetric, antisymmetric) output pair.
fn read_coord<S: Scalar>(fx: &[[S; LEVELS]; LEVELS], fy: &[[S; LEVELS]; LEVELS], row: usize) -> S {
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    if row < LEVELS {
        fx[row][row]
    } else if row < LEVELS + 3 {
        let (i, k) = PAIRS[row - LEVELS];
        fx[i][k]
    } else {
        let (i, k) = PAIRS[row - LEVELS - 3];
        fy[i][k]
    }
}

impl LiouvillianModel for HeatModel {
    fn state_dim(&self) -> usize {
        DIM
    }

    fn param_count(&self) -> usize {
        match self.variant {
            HeatVariant::Degenerate => 9,
            HeatVariant::NonDegenerate => 10,
        }
    }

    fn param_names(&self) -> Vec<&'static str> {
        match self.variant {
            HeatVariant::Degenerate => {
                vec!["theta", "j", "a0", "a1", "b0", "b1", "gamma_h", "gamma_c", "gamma_d"]
            }
            HeatVariant::NonDegenerate => vec![
                "theta1", "theta2", "j", "a0", "a1", "b0", "b1", "gamma_h", "gamma_c", "gamma_d",
            ],
        }
    }

    fn rhs(&self, theta: &[f64], y: &[f64], dydt: &mut [f64]) {
        let l = self.liouvillian_dense::<f64>(theta);
        for i in 0..DIM {
            let mut acc = 0.0;
            for j in 0..DIM {
                acc += l[i * DIM + j] * y[j];
            }
            dydt[i] = acc;
        }
    }

    fn superop(&self, theta: &[f64]) -> Result<RealSuperOp> {
        let l = self.liouvillian_dense::<f64>(theta);
        let matrix = DMatrix::from_row_slice(DIM, DIM, &l);
        let mut trace = DVector::zeros(DIM);
        for i in 0..LEVELS {
            trace[i] = 1.0;
        }
        RealSuperOp::with_trace_gauge(matrix, trace)
    }

    fn affine_term(&self, _theta: &[f64]) -> Vec<f64> {
        vec![0.0; DIM]
    }

    fn dfdtheta(&self, theta: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        jacobian_forward(
            |t| {
                let l = self.liouvillian_dense(t);
                let mut out = Vec::with_capacity(DIM);
                for i in 0..DIM {
                    let mut acc = crate::dual::Dual::constant(0.0);
                    for j in 0..DIM {
                        acc = acc + l[i * DIM + j] * y[j];
                    }
                    out.push(acc);
                }
                Ok(out)
            },
            theta,
        )
    }

    fn initial_state(&self) -> Vec<f64> {
        crate::linalg::DensityState::maximally_mixed(LEVELS).into_coords()
    }

    fn steady_config(&self) -> SteadyConfig {
        // slowest rates ~ gamma * T ~ 1e-8..3e-4; blocks of 1e4 with a tight
        // residual keep the state accurate to ~1e-8 against the direct solve
        SteadyConfig { residual_tol: 1e-13, t_block: 1e4, ..SteadyConfig::default() }
    }
}

/// Heat current of one bath as a steady-state observable.
#[derive(Debug, Clone, Copy)]
pub struct HeatCurrent(pub Bath);

impl SteadyObservable<HeatModel> for HeatCurrent {
    fn name(&self) -> &'static str {
        self.0.as_str()
    }

    fn value(&self, model: &HeatModel, theta: &[f64], y: &[f64]) -> f64 {
        let w = model.heat_current_weights::<f64>(theta, self.0);
        w.iter().zip(y).map(|(wi, yi)| wi * yi).sum()
    }

    fn cotangent(&self, model: &HeatModel, theta: &[f64], _y: &[f64]) -> Vec<f64> {
        model.heat_current_weights::<f64>(theta, self.0).to_vec()
    }

    fn param_partial(&self, model: &HeatModel, theta: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let duals = seed(theta)?;
        let w = model.heat_current_weights(&duals, self.0);
        let mut acc = crate::dual::Dual::constant(0.0);
        for (wi, yi) in w.iter().zip(y) {
            acc = acc + *wi * *yi;
        }
        Ok((0..theta.len()).map(|j| acc.tangent(j)).collect())
    }
}

/// Trace functional; its gradient vanishes identically because the dynamics
/// preserves normalization.
#[derive(Debug, Clone, Copy)]
pub struct TraceObservable;

impl SteadyObservable<HeatModel> for TraceObservable {
    fn name(&self) -> &'static str {
        "trace"
    }
    fn value(&self, _m: &HeatModel, _t: &[f64], y: &[f64]) -> f64 {
        y[..LEVELS].iter().sum()
    }
    fn cotangent(&self, _m: &HeatModel, _t: &[f64], _y: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; DIM];
        for vi in v.iter_mut().take(LEVELS) {
            *vi = 1.0;
        }
        v
    }
    fn param_partial(&self, _m: &HeatModel, t: &[f64], _y: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; t.len()])
    }
}

/// How a steady state is produced for plain (non-gradient) evaluations.
#[derive(Debug, Clone)]
pub enum SteadySolver {
    /// Long-time relaxation with the given configuration.
    Ode(SteadyConfig),
    /// Deflated linear solve.
    Direct,
}

fn solve_steady(model: &HeatModel, theta: &[f64], solver: &SteadySolver) -> Result<Vec<f64>> {
    match solver {
        SteadySolver::Ode(cfg) => {
            let res = crate::model::ode_steady_state(model, theta, cfg)?;
            if !res.converged {
                return Err(CoreError::ResidualStalled {
                    residual: res.residual,
                    blocks: res.blocks_used,
                });
            }
            Ok(res.state)
        }
        SteadySolver::Direct => crate::model::direct_steady_state(model, theta),
    }
}

/// Heat current `J_alpha` at the steady state of `params`.
pub fn heat_current(params: &HeatModelParams, bath: Bath, solver: &SteadySolver) -> Result<f64> {
    params.validate()?;
    let model = HeatModel::for_params(params, HeatVariant::NonDegenerate);
    let theta = params.theta_vec(HeatVariant::NonDegenerate);
    let y = solve_steady(&model, &theta, solver)?;
    Ok(HeatCurrent(bath).value(&model, &theta, &y))
}

/// Rectification coefficient `(|J_H| - |J'_H|) / (|J_H| + |J'_H|)`, where
/// the primed current is recomputed with the hot and cold temperatures
/// exchanged (two steady-state solves).
pub fn rectification(params: &HeatModelParams, solver: &SteadySolver) -> Result<f64> {
    let forward = heat_current(params, Bath::Hot, solver)?;
    let mut swapped = params.clone();
    swapped.temps = [params.temps[1], params.temps[0], params.temps[2]];
    let reversed = heat_current(&swapped, Bath::Hot, solver)?;
    let denom = forward.abs() + reversed.abs();
    if denom == 0.0 {
        return Err(CoreError::UndefinedObservable {
            name: "rectification",
            reason: "both heat currents vanish".into(),
        });
    }
    Ok((forward.abs() - reversed.abs()) / denom)
}

/// Rectification plus its gradient with respect to
/// `[theta, J, gamma_H, gamma_C, gamma_D]` (couplings pinned to the
/// hot-on-1 / cold-on-2 wiring). Uses one observable gradient per
/// temperature ordering and the chain rule of the normalized asymmetry.
pub fn rectification_with_gradient(
    theta5: &[f64],
    temps: [f64; 3],
    omega_c: f64,
    backend: crate::implicit::Backend,
) -> Result<(f64, Vec<f64>)> {
    let full = |t5: &[f64]| -> Vec<f64> {
        vec![t5[0], t5[1], 1.0, 0.0, 0.0, 1.0, t5[2], t5[3], t5[4]]
    };
    let reduce = |g9: &[f64]| -> Vec<f64> { vec![g9[0], g9[1], g9[6], g9[7], g9[8]] };

    let theta9 = full(theta5);
    let grad_of = |model: &HeatModel| -> Result<(f64, Vec<f64>)> {
        let report = crate::implicit::observable_gradient(
            model,
            &HeatCurrent(Bath::Hot),
            &theta9,
            backend,
            &model.steady_config(),
        )?;
        Ok((report.value, reduce(&report.gradient)))
    };

    let fwd_model = HeatModel { temps, omega_c, variant: HeatVariant::Degenerate };
    let rev_model = HeatModel {
        temps: [temps[1], temps[0], temps[2]],
        omega_c,
        variant: HeatVariant::Degenerate,
    };
    let (jf, gf) = grad_of(&fwd_model)?;
    let (jr, gr) = grad_of(&rev_model)?;

    let denom = jf.abs() + jr.abs();
    if denom == 0.0 {
        return Err(CoreError::UndefinedObservable {
            name: "rectification",
            reason: "both heat currents vanish".into(),
        });
    }
    let r = (jf.abs() - jr.abs()) / denom;
    // dR/d|J_f| = 2 |J_r| / denom^2 ; dR/d|J_r| = -2 |J_f| / denom^2
    let df = 2.0 * jr.abs() / (denom * denom) * jf.signum();
    let dr = -2.0 * jf.abs() / (denom * denom) * jr.signum();
    let grad = gf
        .iter()
        .zip(gr.iter())
        .map(|(a, b)| df * a + dr * b)
        .collect();
    Ok((r, grad))
}
