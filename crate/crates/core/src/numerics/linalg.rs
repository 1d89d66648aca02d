//! Dense matrix routines on top of `nalgebra`'s dynamically sized storage.

use crate::error::{dim_err, Error, Result};
use crate::{Matrix, Vector};

/// Taylor degree used after scaling; with `‖M‖ ≤ 1/2` the truncation error is
/// below `0.5^19 / 19!`.
const EXP_TAYLOR_DEGREE: usize = 18;

/// Iteration cap for the Riccati recursion.
pub const DARE_MAX_ITERATIONS: usize = 1_000_000;

/// Normalized fixed-point tolerance for the Riccati recursion.
pub const DARE_TOLERANCE: f64 = 1e-12;

/// Slack below one used by every Schur-stability check.
pub const SCHUR_SLACK: f64 = 1e-6;

pub(crate) fn require_square(m: &Matrix, context: &'static str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(dim_err(context, (m.nrows(), m.nrows()), m.shape()));
    }
    Ok(m.nrows())
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn mat_exp(m: &Matrix) -> Result<Matrix> {
    let n = require_square(m, "mat_exp")?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("mat_exp: non-finite entry".into()));
    }
    let norm = one_norm(m);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = libm::ceil(libm::log2(norm / 0.5)) as u32;
    }
    let scaled = m * libm::ldexp(1.0, -(squarings as i32));

    let mut result = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=EXP_TAYLOR_DEGREE {
        term = &term * &scaled / (k as f64);
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Maximum absolute column sum.
pub fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| libm::fabs(*v)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral radius estimated from `‖A^k‖^{1/k}` with `k = 2^j`, using normalized
/// repeated squaring so nothing overflows.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    require_square(a, "spectral_radius")?;
    let norm = a.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let mut b = a / norm;
    let mut log_rho = libm::log(norm);
    let mut weight = 0.5;
    for _ in 0..64 {
        let sq = &b * &b;
        let sq_norm = sq.norm();
        if sq_norm == 0.0 || !sq_norm.is_finite() {
            return Ok(if sq_norm == 0.0 { 0.0 } else { f64::INFINITY });
        }
        let increment = weight * libm::log(sq_norm);
        log_rho += increment;
        b = sq / sq_norm;
        weight *= 0.5;
        if libm::fabs(increment) < 1e-17 {
            break;
        }
    }
    Ok(libm::exp(log_rho))
}

/// True when the spectral radius is below `1 - SCHUR_SLACK`.
pub fn is_schur(a: &Matrix) -> Result<bool> {
    Ok(spectral_radius(a)? < 1.0 - SCHUR_SLACK)
}

pub(crate) fn ensure_schur(a: &Matrix, what: &'static str) -> Result<f64> {
    let rho = spectral_radius(a)?;
    if rho < 1.0 - SCHUR_SLACK {
        Ok(rho)
    } else {
        Err(Error::Stability {
            what,
            spectral_radius: rho,
        })
    }
}

/// Symmetric part `(M + Mᵀ)/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Solution of the discrete algebraic Riccati equation
/// `P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA` with its gain.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: Matrix,
    /// `K = −(R + BᵀPB)⁻¹BᵀPA`, so that `A + BK` is the closed loop.
    pub k: Matrix,
    pub iterations: usize,
    /// `‖P − Ric(P)‖_F / ‖P‖_F` at the returned iterate.
    pub residual: f64,
}

/// One step of the Riccati recursion; returns the next iterate and the gain
/// computed from the current one.
fn riccati_step(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<(Matrix, Matrix)> {
    let pa = p * a;
    let btpa = b.transpose() * &pa;
    let s = r + b.transpose() * p * b;
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("R + BᵀPB lost positive definiteness".into()))?;
    let k = -chol.solve(&btpa);
    let next = q + a.transpose() * &pa + btpa.transpose() * &k;
    Ok((symmetrize(&next), k))
}

/// Riccati-recursion fixed point iteration from `P = 0`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<DareSolution> {
    let n = require_square(a, "solve_dare: A")?;
    let m = b.ncols();
    if b.nrows() != n {
        return Err(dim_err("solve_dare: B", (n, m), b.shape()));
    }
    if q.shape() != (n, n) {
        return Err(dim_err("solve_dare: Q", (n, n), q.shape()));
    }
    if r.shape() != (m, m) {
        return Err(dim_err("solve_dare: R", (m, m), r.shape()));
    }
    if m > 0 && r.clone().cholesky().is_none() {
        return Err(Error::Input("solve_dare: R must be symmetric positive definite".into()));
    }

    let mut p = Matrix::zeros(n, n);
    for iteration in 1..=DARE_MAX_ITERATIONS {
        let (next, _) = riccati_step(a, b, q, r, &p)?;
        let delta = (&next - &p).norm();
        let scale = next.norm();
        p = next;
        if delta <= DARE_TOLERANCE * scale || scale == 0.0 && delta == 0.0 {
            let (check, k) = riccati_step(a, b, q, r, &p)?;
            let residual = if scale == 0.0 {
                0.0
            } else {
                (&check - &p).norm() / scale
            };
            return Ok(DareSolution {
                p,
                k,
                iterations: iteration,
                residual,
            });
        }
        if !scale.is_finite() {
            break;
        }
    }
    Err(Error::NotConverged {
        what: "Riccati recursion",
        iterations: DARE_MAX_ITERATIONS,
    })
}

/// Solves `P = A P Aᵀ + W` for Schur `A` with Smith's doubling iteration.
pub fn solve_dlyap(a: &Matrix, w: &Matrix) -> Result<Matrix> {
    let n = require_square(a, "solve_dlyap: A")?;
    if w.shape() != (n, n) {
        return Err(dim_err("solve_dlyap: W", (n, n), w.shape()));
    }
    ensure_schur(a, "solve_dlyap: A")?;

    let mut p = symmetrize(w);
    let mut ak = a.clone();
    for _ in 0..64 {
        let increment = &ak * &p * ak.transpose();
        p = symmetrize(&(&p + &increment));
        ak = &ak * &ak;
        if increment.norm() <= 1e-17 * p.norm() || ak.norm() == 0.0 {
            break;
        }
    }
    // One polishing sweep of the plain fixed point removes doubling round-off.
    p = symmetrize(&(a * &p * a.transpose() + w));
    Ok(p)
}

/// Solves `M x = rhs` by LU, failing on (near-)singular `M`.
pub fn solve(m: &Matrix, rhs: &Matrix, context: &'static str) -> Result<Matrix> {
    require_square(m, context)?;
    m.clone()
        .lu()
        .solve(rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numeric(alloc::format!("{context}: singular matrix")))
}

/// Inverse with a singularity check.
pub fn inverse(m: &Matrix, context: &'static str) -> Result<Matrix> {
    let n = require_square(m, context)?;
    solve(m, &Matrix::identity(n, n), context)
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &Matrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Lower Cholesky-like factor of a symmetric psd matrix. Eigenvalues below
/// `tol·‖M‖` are clamped to zero, so rank-deficient covariances are accepted.
pub fn psd_factor(m: &Matrix, tol: f64) -> Result<Matrix> {
    let n = require_square(m, "psd_factor")?;
    let sym = symmetrize(m);
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = sym.clone().symmetric_eigen();
    let floor = tol * sym.norm().max(1.0);
    let mut factor = Matrix::zeros(n, n);
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda < -floor {
            return Err(Error::Numeric(alloc::format!(
                "psd_factor: eigenvalue {lambda} is not psd within tolerance"
            )));
        }
        let s = libm::sqrt(lambda.max(0.0));
        factor.set_column(j, &(eig.eigenvectors.column(j) * s));
    }
    Ok(factor)
}

/// Dot product of a row slice with a vector.
#[inline]
pub(crate) fn dot(row: &[f64], x: &Vector) -> f64 {
    row.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn exp_of_zero_is_identity() {
        let e = mat_exp(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(e, Matrix::identity(3, 3));
    }

    #[test]
    fn exp_of_diagonal() {
        let e = mat_exp(&dmatrix![1.0, 0.0; 0.0, -1.0]).unwrap();
        assert_relative_eq!(e[(0, 0)], core::f64::consts::E, max_relative = 1e-14);
        assert_relative_eq!(e[(1, 1)], 1.0 / core::f64::consts::E, max_relative = 1e-14);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exp_of_nilpotent_terminates() {
        let e = mat_exp(&dmatrix![0.0, 1.0; 0.0, 0.0]).unwrap();
        assert_eq!(e, dmatrix![1.0, 1.0; 0.0, 1.0]);
    }

    #[test]
    fn exp_rejects_non_square() {
        assert!(matches!(mat_exp(&Matrix::zeros(2, 3)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn exp_matches_pade_reference() {
        let m = dmatrix![0.3, -1.2, 0.5; 2.0, -0.7, 0.1; -0.4, 0.9, 1.5] * 3.0;
        let ours = mat_exp(&m).unwrap();
        let reference = m.exp();
        assert_relative_eq!(ours, reference, max_relative = 1e-10, epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_of_rotation_and_jordan() {
        let (s, c) = (libm::sin(0.3), libm::cos(0.3));
        let rot = dmatrix![c, -s; s, c] * 0.8;
        assert_relative_eq!(spectral_radius(&rot).unwrap(), 0.8, max_relative = 1e-12);
        let jordan = dmatrix![0.9, 1.0; 0.0, 0.9];
        assert_relative_eq!(spectral_radius(&jordan).unwrap(), 0.9, max_relative = 1e-9);
        assert_eq!(spectral_radius(&dmatrix![0.0, 1.0; 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn dare_scalar_golden_ratio() {
        let one = dmatrix![1.0];
        let sol = solve_dare(&one, &one, &one, &one).unwrap();
        let phi = (1.0 + libm::sqrt(5.0)) / 2.0;
        assert_relative_eq!(sol.p[(0, 0)], phi, max_relative = 1e-10);
        assert_relative_eq!(sol.k[(0, 0)], -phi / (1.0 + phi), max_relative = 1e-10);
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn dare_without_input_is_lyapunov_sum() {
        let a = dmatrix![0.5, 0.2; 0.0, -0.3];
        let b = Matrix::zeros(2, 1);
        let q = Matrix::identity(2, 2);
        let sol = solve_dare(&a, &b, &q, &dmatrix![1.0]).unwrap();
        let mut series = Matrix::zeros(2, 2);
        let mut at = Matrix::identity(2, 2);
        for _ in 0..200 {
            series += at.transpose() * &at;
            at = &at * &a;
        }
        assert_relative_eq!(sol.p, series, max_relative = 1e-10);
        assert!(sol.k.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dare_rejects_singular_r() {
        let one = dmatrix![1.0];
        let err = solve_dare(&one, &one, &one, &dmatrix![0.0]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn dlyap_scalar_and_zero() {
        let p = solve_dlyap(&dmatrix![0.5], &dmatrix![1.0]).unwrap();
        assert_relative_eq!(p[(0, 0)], 4.0 / 3.0, max_relative = 1e-14);
        let w = dmatrix![2.0, 0.5; 0.5, 1.0];
        assert_eq!(solve_dlyap(&Matrix::zeros(2, 2), &w).unwrap(), w);
    }

    #[test]
    fn dlyap_rejects_unstable() {
        let err = solve_dlyap(&dmatrix![1.0], &dmatrix![1.0]).unwrap_err();
        assert!(matches!(err, Error::Stability { .. }));
    }

    #[test]
    fn psd_factor_handles_rank_deficiency() {
        let m = dmatrix![1.0, 1.0; 1.0, 1.0];
        let f = psd_factor(&m, 1e-12).unwrap();
        assert_relative_eq!(&f * f.transpose(), m, epsilon = 1e-12);
        assert!(psd_factor(&dmatrix![1.0, 0.0; 0.0, -1.0], 1e-12).is_err());
    }
}
