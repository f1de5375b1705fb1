//! Forward-mode automatic differentiation with multi-tangent dual numbers.
//!
//! A [`Dual`] carries a value together with up to [`MAX_TANGENTS`] partial
//! derivatives, so the Jacobian of a function of k parameters is built in a
//! single forward pass. All model builders in this crate are generic over
//! [`Scalar`], which is implemented for both `f64` (plain evaluation) and
//! [`Dual`] (evaluation plus exact derivatives).
//!
//! Constants are tangent-free (`k = 0`) and broadcast against any operand;
//! combining two seeded duals of different tangent dimension is a programming
//! error and panics.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{CoreError, Result};

/// Maximum number of simultaneously active parameters.
///
/// The largest computation graph in this crate differentiates the
/// non-degenerate heat model (10 parameters).
pub const MAX_TANGENTS: usize = 12;

/// Numeric type that supports the elementary operations used by the model
/// builders. Implemented for `f64` and [`Dual`].
pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(x: f64) -> Self;
    /// Primal value, ignoring tangents.
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn exp_m1(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Four-quadrant arctangent of `self / x`.
    fn atan2(self, x: Self) -> Self;
}

impl Scalar for f64 {
    fn constant(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

/// Value plus tangent vector. `k = 0` denotes a constant that broadcasts
/// against any tangent dimension.
#[derive(Debug, Clone, Copy)]
pub struct Dual {
    value: f64,
    k: usize,
    tangents: [f64; MAX_TANGENTS],
}

impl Dual {
    /// Seed parameter `slot` of `k` as an active variable with value `x`.
    pub fn lift(x: f64, slot: usize, k: usize) -> Result<Self> {
        if k > MAX_TANGENTS || slot >= k {
            return Err(CoreError::SlotOutOfRange { slot, total: k });
        }
        let mut tangents = [0.0; MAX_TANGENTS];
        tangents[slot] = 1.0;
        Ok(Dual { value: x, k, tangents })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Tangent components (length = tangent dimension; empty for constants).
    pub fn tangents(&self) -> &[f64] {
        &self.tangents[..self.k]
    }

    pub fn tangent(&self, slot: usize) -> f64 {
        if slot < self.k {
            self.tangents[slot]
        } else {
            0.0
        }
    }

    fn join(a: &Dual, b: &Dual) -> usize {
        match (a.k, b.k) {
            (0, k) | (k, 0) => k,
            (ka, kb) if ka == kb => ka,
            (ka, kb) => panic!(
                "{}",
                CoreError::TangentMismatch { left: ka, right: kb }
            ),
        }
    }

    /// Apply the chain rule for a univariate primitive: value `f`, local
    /// derivative `dfdx`.
    fn unary(self, f: f64, dfdx: f64) -> Dual {
        let mut tangents = [0.0; MAX_TANGENTS];
        for i in 0..self.k {
            tangents[i] = dfdx * self.tangents[i];
        }
        Dual { value: f, k: self.k, tangents }
    }
}

impl Scalar for Dual {
    fn constant(x: f64) -> Self {
        Dual { value: x, k: 0, tangents: [0.0; MAX_TANGENTS] }
    }

    fn value(self) -> f64 {
        self.value
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    fn exp_m1(self) -> Self {
        self.unary(self.value.exp_m1(), self.value.exp())
    }

    fn ln(self) -> Self {
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.unary(s, 0.5 / s)
    }

    fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }

    fn atan2(self, x: Self) -> Self {
        let k = Dual::join(&self, &x);
        let y = self;
        let denom = x.value * x.value + y.value * y.value;
        let mut tangents = [0.0; MAX_TANGENTS];
        for i in 0..k {
            tangents[i] = (x.value * y.tangent(i) - y.value * x.tangent(i)) / denom;
        }
        Dual { value: y.value.atan2(x.value), k, tangents }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        let k = Dual::join(&self, &rhs);
        let mut tangents = [0.0; MAX_TANGENTS];
        for i in 0..k {
            tangents[i] = self.tangent(i) + rhs.tangent(i);
        }
        Dual { value: self.value + rhs.value, k, tangents }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        let k = Dual::join(&self, &rhs);
        let mut tangents = [0.0; MAX_TANGENTS];
        for i in 0..k {
            tangents[i] = self.tangent(i) - rhs.tangent(i);
        }
        Dual { value: self.value - rhs.value, k, tangents }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let k = Dual::join(&self, &rhs);
        let mut tangents = [0.0; MAX_TANGENTS];
        for i in 0..k {
            tangents[i] = self.tangent(i) * rhs.value + self.value * rhs.tangent(i);
        }
        Dual { value: self.value * rhs.value, k, tangents }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let k = Dual::join(&self, &rhs);
        let inv = 1.0 / rhs.value;
        let mut tangents = [0.0; MAX_TANGENTS];
        for i in 0..k {
            tangents[i] = (self.tangent(i) - self.value * inv * rhs.tangent(i)) * inv;
        }
        Dual { value: self.value * inv, k, tangents }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.unary(-self.value, -1.0)
    }
}

macro_rules! dual_f64_ops {
    ($($trait:ident $method:ident),*) => {$(
        impl $trait<f64> for Dual {
            type Output = Dual;
            fn $method(self, rhs: f64) -> Dual {
                self.$method(Dual::constant(rhs))
            }
        }
        impl $trait<Dual> for f64 {
            type Output = Dual;
            fn $method(self, rhs: Dual) -> Dual {
                Dual::constant(self).$method(rhs)
            }
        }
    )*};
}
dual_f64_ops!(Add add, Sub sub, Mul mul, Div div);

/// Logistic sigmoid 1 / (1 + e^{-x}).
pub fn logistic<S: Scalar>(x: S) -> S {
    S::constant(1.0) / (S::constant(1.0) + (-x).exp())
}

/// Two-component softmax, (e^a, e^b) / (e^a + e^b), computed with the usual
/// max-shift for overflow safety. The outputs sum to one exactly.
pub fn softmax_pair<S: Scalar>(a: S, b: S) -> (S, S) {
    let shift = S::constant(a.value().max(b.value()));
    let ea = (a - shift).exp();
    let eb = (b - shift).exp();
    let z = ea + eb;
    (ea / z, eb / z)
}

/// Bose–Einstein occupation 1 / (e^x - 1) for x = omega / T.
///
/// The argument must be nonzero; the x -> 0 divergence is handled upstream by
/// the spectral-rate limit, not here.
pub fn bose<S: Scalar>(x: S) -> Result<S> {
    if x.value() == 0.0 {
        return Err(CoreError::Domain { primitive: "bose", argument: 0.0 });
    }
    Ok(S::constant(1.0) / x.exp_m1())
}

/// `ln` with an explicit domain check, for inputs that are not known positive.
pub fn try_ln(x: Dual) -> Result<Dual> {
    if x.value() <= 0.0 {
        return Err(CoreError::Domain { primitive: "ln", argument: x.value() });
    }
    Ok(x.ln())
}

/// `sqrt` with an explicit domain check.
pub fn try_sqrt(x: Dual) -> Result<Dual> {
    if x.value() < 0.0 {
        return Err(CoreError::Domain { primitive: "sqrt", argument: x.value() });
    }
    Ok(x.sqrt())
}

/// Seed all of `theta` as active parameters.
pub fn seed(theta: &[f64]) -> Result<Vec<Dual>> {
    let k = theta.len();
    theta
        .iter()
        .enumerate()
        .map(|(i, &x)| Dual::lift(x, i, k))
        .collect()
}

/// Dense Jacobian of a vector-valued function by one forward sweep:
/// row i, column j holds the exact derivative of output i with respect to
/// parameter j.
pub fn jacobian_forward<F>(f: F, theta: &[f64]) -> Result<nalgebra::DMatrix<f64>>
where
    F: FnOnce(&[Dual]) -> Result<Vec<Dual>>,
{
    let k = theta.len();
    let out = f(&seed(theta)?)?;
    let mut jac = nalgebra::DMatrix::zeros(out.len(), k);
    for (i, o) in out.iter().enumerate() {
        for j in 0..k {
            jac[(i, j)] = o.tangent(j);
        }
    }
    Ok(jac)
}

/// Value and gradient of a scalar function in one forward sweep.
pub fn gradient_forward<F>(f: F, theta: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[Dual]) -> Result<Dual>,
{
    let k = theta.len();
    let out = f(&seed(theta)?)?;
    Ok((out.value(), (0..k).map(|j| out.tangent(j)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lift_is_unit_tangent() {
        let x = Dual::lift(2.0, 0, 3).unwrap();
        assert_eq!(x.value(), 2.0);
        assert_eq!(x.tangents(), &[1.0, 0.0, 0.0]);
        let sq = x * x;
        assert_eq!(sq.value(), 4.0);
        assert_eq!(sq.tangent(0), 4.0);
    }

    #[test]
    fn lift_rejects_bad_slot() {
        assert!(matches!(
            Dual::lift(1.0, 3, 3),
            Err(CoreError::SlotOutOfRange { slot: 3, total: 3 })
        ));
    }

    #[test]
    fn constant_broadcasts() {
        let x = Dual::lift(3.0, 0, 2).unwrap();
        let y = Dual::constant(5.0) * x;
        assert_eq!(y.value(), 15.0);
        assert_eq!(y.tangents(), &[5.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "mixed tangent dimensions")]
    fn mixed_k_panics() {
        let a = Dual::lift(1.0, 0, 2).unwrap();
        let b = Dual::lift(1.0, 0, 3).unwrap();
        let _ = a + b;
    }

    #[test]
    fn logistic_at_zero() {
        let x = Dual::lift(0.0, 0, 1).unwrap();
        let s = logistic(x);
        assert_relative_eq!(s.value(), 0.5);
        assert_relative_eq!(s.tangent(0), 0.25);
    }

    #[test]
    fn softmax_pair_symmetric() {
        let (a, b) = softmax_pair(0.0_f64, 0.0_f64);
        assert_relative_eq!(a, 0.5);
        assert_relative_eq!(b, 0.5);
    }

    #[test]
    fn bose_closed_form() {
        let n: f64 = bose(1.0_f64).unwrap();
        assert_relative_eq!(n, 1.0 / (std::f64::consts::E - 1.0), epsilon = 1e-12);
        assert_relative_eq!(n, 0.581_977, epsilon = 1e-6);
        assert!(bose(Dual::constant(0.0)).is_err());
    }

    #[test]
    fn jacobian_hand_example() {
        // f(t) = (t0 t1, t0 + t1) at (2, 3) -> [[3, 2], [1, 1]]
        let jac = jacobian_forward(
            |t| Ok(vec![t[0] * t[1], t[0] + t[1]]),
            &[2.0, 3.0],
        )
        .unwrap();
        assert_eq!(jac[(0, 0)], 3.0);
        assert_eq!(jac[(0, 1)], 2.0);
        assert_eq!(jac[(1, 0)], 1.0);
        assert_eq!(jac[(1, 1)], 1.0);
    }

    #[test]
    fn jacobian_of_constant_is_zero() {
        let jac = jacobian_forward(
            |_| Ok(vec![Dual::constant(7.0), Dual::constant(-1.0)]),
            &[0.3, 0.7, 1.1],
        )
        .unwrap();
        assert_eq!(jac.amax(), 0.0);
    }

    fn central_fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn primitives_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let cases: Vec<(&str, fn(Dual) -> Dual, fn(f64) -> f64, fn(&mut rand_chacha::ChaCha8Rng) -> f64)> = vec![
            ("exp", |x| x.exp(), |x| x.exp(), |r| r.gen_range(-2.0..2.0)),
            ("ln", |x| x.ln(), |x| x.ln(), |r| r.gen_range(0.1..5.0)),
            ("sqrt", |x| x.sqrt(), |x| x.sqrt(), |r| r.gen_range(0.1..5.0)),
            ("sin", |x| x.sin(), |x| x.sin(), |r| r.gen_range(-3.0..3.0)),
            ("cos", |x| x.cos(), |x| x.cos(), |r| r.gen_range(-3.0..3.0)),
            ("logistic", logistic, |x| 1.0 / (1.0 + (-x).exp()), |r| r.gen_range(-4.0..4.0)),
            (
                "bose",
                |x| bose(x).unwrap(),
                |x| 1.0 / x.exp_m1(),
                |r| r.gen_range(0.2..4.0),
            ),
        ];
        for (name, fd_dual, fd_f64, sample) in cases {
            for _ in 0..100 {
                let x0 = sample(&mut rng);
                let d = fd_dual(Dual::lift(x0, 0, 1).unwrap()).tangent(0);
                let fd = central_fd(fd_f64, x0);
                let denom = fd.abs().max(1.0);
                assert!(
                    ((d - fd) / denom).abs() < 1e-6,
                    "{name} at {x0}: dual {d} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn atan2_matches_fd_in_both_arguments() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let y0: f64 = rng.gen_range(-2.0..2.0);
            let x0: f64 = rng.gen_range(0.2..2.0);
            let y = Dual::lift(y0, 0, 2).unwrap();
            let x = Dual::lift(x0, 1, 2).unwrap();
            let a = y.atan2(x);
            let fdy = central_fd(|t| t.atan2(x0), y0);
            let fdx = central_fd(|t| y0.atan2(t), x0);
            assert_relative_eq!(a.tangent(0), fdy, epsilon = 1e-6);
            assert_relative_eq!(a.tangent(1), fdx, epsilon = 1e-6);
        }
    }

    #[test]
    fn composition_matches_fd() {
        // d/dx sigma(exp(sin x))
        let f_dual = |x: Dual| logistic(x.sin().exp());
        let f = |x: f64| 1.0 / (1.0 + (-x.sin().exp()).exp());
        for &x0 in &[-1.3, -0.2, 0.4, 1.9] {
            let d = f_dual(Dual::lift(x0, 0, 1).unwrap()).tangent(0);
            let fd = central_fd(f, x0);
            assert_relative_eq!(d, fd, epsilon = 1e-6);
        }
    }
}
