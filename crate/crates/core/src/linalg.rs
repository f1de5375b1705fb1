//! Real-coordinate representation of density matrices and the dense linear
//! algebra used by the steady-state and adjoint solvers.
//!
//! An m-level density matrix is stored as m^2 real coordinates, ordered as
//! the m diagonal populations, then the upper-triangle real parts (row-major),
//! then the upper-triangle imaginary parts in the same order. Hermiticity is
//! built into the reconstruction, so every superoperator in this crate is a
//! plain real m^2 x m^2 matrix and all adjoint algebra stays real.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dual::Scalar;
use crate::error::{CoreError, Result};

/// Hermitian density matrix in real coordinates.
///
/// Ordering for m = 3: `[d0, d1, d2, Re(0,1), Re(0,2), Re(1,2), Im(0,1),
/// Im(0,2), Im(1,2)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    dim: usize,
    coords: Vec<f64>,
}

/// Index of Re(i,j) (i < j) within the coordinate vector.
pub fn real_index(m: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < m);
    // row-major position of (i, j) in the strict upper triangle
    let pos = i * m - i * (i + 1) / 2 + (j - i - 1);
    m + pos
}

/// Index of Im(i,j) (i < j) within the coordinate vector.
pub fn imag_index(m: usize, i: usize, j: usize) -> usize {
    real_index(m, i, j) + m * (m - 1) / 2
}

impl DensityState {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != dim * dim {
            return Err(CoreError::InvalidParameter {
                name: "coords",
                reason: format!("expected {} coordinates for m = {}, got {}", dim * dim, dim, coords.len()),
            });
        }
        Ok(DensityState { dim, coords })
    }

    /// Maximally mixed state, trace one.
    pub fn maximally_mixed(dim: usize) -> Self {
        let mut coords = vec![0.0; dim * dim];
        for c in coords.iter_mut().take(dim) {
            *c = 1.0 / dim as f64;
        }
        DensityState { dim, coords }
    }

    /// Pure population in level `i`.
    pub fn level(dim: usize, i: usize) -> Self {
        let mut coords = vec![0.0; dim * dim];
        coords[i] = 1.0;
        DensityState { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn trace(&self) -> f64 {
        self.coords[..self.dim].iter().sum()
    }

    /// Reconstruct the (exactly Hermitian) complex matrix.
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        let m = self.dim;
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            out[(i, i)] = Complex64::new(self.coords[i], 0.0);
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let re = self.coords[real_index(m, i, j)];
                let im = self.coords[imag_index(m, i, j)];
                out[(i, j)] = Complex64::new(re, im);
                out[(j, i)] = Complex64::new(re, -im);
            }
        }
        out
    }

    /// Project a complex matrix onto coordinates, rejecting non-Hermitian
    /// input.
    pub fn from_matrix(mat: &DMatrix<Complex64>) -> Result<Self> {
        let m = mat.nrows();
        let tol = 1e-10;
        let mut deviation: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                deviation = deviation.max((mat[(i, j)] - mat[(j, i)].conj()).norm());
            }
        }
        if deviation >= tol {
            return Err(CoreError::NotHermitian { deviation, tol });
        }
        let mut coords = vec![0.0; m * m];
        for i in 0..m {
            coords[i] = mat[(i, i)].re;
        }
        for i in 0..m {
            for j in (i + 1)..m {
                coords[real_index(m, i, j)] = mat[(i, j)].re;
                coords[imag_index(m, i, j)] = mat[(i, j)].im;
            }
        }
        Ok(DensityState { dim: m, coords })
    }

    /// Smallest eigenvalue of the reconstructed matrix; physical states
    /// satisfy `min_eigenvalue() >= -1e-8`.
    pub fn min_eigenvalue(&self) -> f64 {
        let eig = nalgebra::SymmetricEigen::new(self.to_matrix());
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Eigendecomposition of the symmetric 2x2 block `[[h11, h12], [h12, h22]]`.
///
/// Returns `(e_minus, e_plus, theta)` with
/// `e_pm = (h11 + h22)/2 pm sqrt(((h11 - h22)/2)^2 + h12^2)` and
/// `theta = atan2(2 h12, h11 - h22) / 2`, so the e_plus eigenvector is
/// `(cos theta, sin theta)`. Degenerate zero input yields theta = 0 by the
/// atan2 convention.
pub fn eig_herm_2x2<S: Scalar>(h11: S, h22: S, h12: S) -> (S, S, S) {
    let half = S::constant(0.5);
    let mean = (h11 + h22) * half;
    let d = (h11 - h22) * half;
    let rad = (d * d + h12 * h12).sqrt();
    let theta = (S::constant(2.0) * h12).atan2(h11 - h22) * half;
    (mean - rad, mean + rad, theta)
}

/// Dense real superoperator acting on [`DensityState`] coordinates, with the
/// gauge vectors of a trace-preserving generator: `left_null` is the trace
/// functional (a row null vector), `right_null` the steady-state direction
/// (a column null vector), normalized so that `left . right = 1`.
#[derive(Debug, Clone)]
pub struct RealSuperOp {
    pub matrix: DMatrix<f64>,
    pub left_null: Option<DVector<f64>>,
    pub right_null: Option<DVector<f64>>,
}

impl RealSuperOp {
    pub fn without_gauge(matrix: DMatrix<f64>) -> Self {
        RealSuperOp { matrix, left_null: None, right_null: None }
    }

    /// Attach the trace functional as the left null vector and compute the
    /// steady-state direction by one deflated solve: with
    /// `M = A + l l^T`, the solution of `M x = l` satisfies `A x = 0` and
    /// `l . x = 1` exactly when the zero eigenvalue is simple.
    pub fn with_trace_gauge(matrix: DMatrix<f64>, left_null: DVector<f64>) -> Result<Self> {
        let m = &matrix + &left_null * left_null.transpose();
        let right = m
            .lu()
            .solve(&left_null)
            .ok_or(CoreError::NonUniqueSteadyState { context: "steady-state direction" })?;
        Ok(RealSuperOp { matrix, left_null: Some(left_null), right_null: Some(right) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(y)).data.into()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        (self.matrix.tr_mul(&DVector::from_column_slice(y))).data.into()
    }

    fn gauge(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        match (&self.left_null, &self.right_null) {
            (Some(l), Some(r)) => Some((l, r)),
            _ => None,
        }
    }

    /// Solve `A^T y = b` for a singular trace-preserving generator by LU on
    /// the rank-one deflation `A^T + l r^T`.
    ///
    /// Requires `b` orthogonal to the right null vector (the caller projects
    /// the cotangent first); the returned solution carries the gauge
    /// `r . y = 0` and satisfies the original system to < 1e-9.
    pub fn solve_adjoint_deflated(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let y = match self.gauge() {
            Some((l, r)) => {
                let deflated = self.matrix.transpose() + l * r.transpose();
                deflated
                    .lu()
                    .solve(b)
                    .ok_or(CoreError::NonUniqueSteadyState { context: "deflated adjoint solve" })?
            }
            None => self
                .matrix
                .transpose()
                .lu()
                .solve(b)
                .ok_or(CoreError::SingularMatrix { context: "adjoint solve" })?,
        };
        let residual = (self.matrix.tr_mul(&y) - b).amax();
        if residual >= 1e-9 * b.amax().max(1.0) {
            return Err(CoreError::SingularMatrix { context: "adjoint solve residual check" });
        }
        Ok(y)
    }

    /// Solve `A x = b` with the gauge `l . x = 0`, via LU on `A + r l^T`.
    /// Solvability needs `l . b = 0`, which holds automatically when `b` is a
    /// parameter derivative of a trace-preserving generator.
    pub fn solve_primal_deflated(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let x = match self.gauge() {
            Some((l, r)) => {
                let deflated = &self.matrix + r * l.transpose();
                deflated
                    .lu()
                    .solve(b)
                    .ok_or(CoreError::NonUniqueSteadyState { context: "deflated primal solve" })?
            }
            None => self
                .matrix
                .clone()
                .lu()
                .solve(b)
                .ok_or(CoreError::SingularMatrix { context: "primal solve" })?,
        };
        let residual = (&self.matrix * &x - b).amax();
        if residual >= 1e-9 * b.amax().max(1.0) {
            return Err(CoreError::SingularMatrix { context: "primal solve residual check" });
        }
        Ok(x)
    }
}
