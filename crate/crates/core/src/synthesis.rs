//! LQR feedback, observer and feedforward gains.

use crate::dynamics::{ClosedLoop, LinearSystem};
use crate::error::{dim_err, Error, Result};
use crate::numerics::linalg::{ensure_schur, inverse, solve};
use crate::numerics::solve_dare;
use crate::Matrix;

/// State-feedback gain `K` (with `u = Kx`) from the Riccati solution.
pub fn lqr_gain(a: &Matrix, b: &Matrix, q_k: &Matrix, r_k: &Matrix) -> Result<Matrix> {
    let sol = solve_dare(a, b, q_k, r_k)?;
    ensure_schur(&(a + b * &sol.k), "A + BK")?;
    Ok(sol.k)
}

/// Observer gain for `x̂⁺ = Ax̂ + Bu + L(Cx̂ − y)`, so the error matrix is `A + LC`.
///
/// Uses the dual Riccati equation on `(Aᵀ, Cᵀ)` with `(Q_L, R_L)` as design
/// weights: `L = −APCᵀ(CPCᵀ + R_L)⁻¹`.
pub fn observer_gain(a: &Matrix, c: &Matrix, q_l: &Matrix, r_l: &Matrix) -> Result<Matrix> {
    let sol = solve_dare(&a.transpose(), &c.transpose(), q_l, r_l)?;
    let p = &sol.p;
    let innovation = c * p * c.transpose() + r_l;
    let rhs = c * p * a.transpose();
    let l = -solve(&innovation, &rhs, "observer innovation covariance")?.transpose();
    ensure_schur(&(a + &l * c), "A + LC")?;
    Ok(l)
}

/// `G = (C(I − A − BK)⁻¹B)⁻¹`, making `y = r` at the disturbance-free equilibrium.
pub fn feedforward_gain(a: &Matrix, b: &Matrix, c: &Matrix, k: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if c.ncols() != n || b.nrows() != n || k.shape() != (b.ncols(), n) {
        return Err(dim_err("feedforward_gain", (n, n), (c.nrows(), c.ncols())));
    }
    let inner = solve(&(Matrix::identity(n, n) - a - b * k), b, "I - A - BK")
        .map_err(|_| Error::Synthesis("I - A - BK is singular".into()))?;
    let dc = c * inner;
    if dc.nrows() != dc.ncols() {
        return Err(Error::Synthesis(alloc::format!(
            "DC gain C(I-A-BK)^-1 B is {}x{}, must be square",
            dc.nrows(),
            dc.ncols()
        )));
    }
    inverse(&dc, "DC gain").map_err(|_| Error::Synthesis("set-point not trackable: DC gain singular".into()))
}

/// Riccati weights for the feedback and observer gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainWeights {
    pub q_k: Matrix,
    pub r_k: Matrix,
    pub q_l: Matrix,
    pub r_l: Matrix,
}

impl GainWeights {
    /// `Q_K = Q_L = 1e-7·I₆`, `R_K = 10·I₃`, `R_L = I₃`.
    pub fn cwh_default() -> Self {
        Self {
            q_k: Matrix::identity(6, 6) * 1e-7,
            r_k: Matrix::identity(3, 3) * 10.0,
            q_l: Matrix::identity(6, 6) * 1e-7,
            r_l: Matrix::identity(3, 3),
        }
    }
}

/// Computes `K`, `L`, `G` and assembles the closed loop.
pub fn synthesize(sys: LinearSystem, weights: &GainWeights) -> Result<ClosedLoop> {
    let k = lqr_gain(&sys.a, &sys.b, &weights.q_k, &weights.r_k)?;
    let l = observer_gain(&sys.a, &sys.c, &weights.q_l, &weights.r_l)?;
    let g = feedforward_gain(&sys.a, &sys.b, &sys.c, &k)?;
    ClosedLoop::assemble(sys, k, l, g)
}
