//! CWH relative-motion model, zero-order-hold discretization and the
//! closed-loop/augmented systems used for covariance prediction.

use crate::error::{dim_err, Error, Result};
use crate::numerics::linalg::{ensure_schur, mat_exp, require_square, solve};
use crate::numerics::solve_dlyap;
use crate::{Matrix, Vector};

/// Number of position coordinates in the CWH state `[x₁ x₂ x₃ ẋ₁ ẋ₂ ẋ₃]`.
pub const POSITION_DIM: usize = 3;
/// CWH state dimension.
pub const CWH_STATE_DIM: usize = 6;

/// Discrete-time plant `x⁺ = Ax + Bu + Γw`, `y = Cx + Fv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub gamma: Matrix,
    pub c: Matrix,
    pub f: Matrix,
    /// Sampling period in seconds.
    pub dt: f64,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, gamma: Matrix, c: Matrix, f: Matrix, dt: f64) -> Result<Self> {
        let n = require_square(&a, "LinearSystem: A")?;
        if b.nrows() != n {
            return Err(dim_err("LinearSystem: B", (n, b.ncols()), b.shape()));
        }
        if gamma.nrows() != n {
            return Err(dim_err("LinearSystem: Gamma", (n, gamma.ncols()), gamma.shape()));
        }
        if c.ncols() != n {
            return Err(dim_err("LinearSystem: C", (c.nrows(), n), c.shape()));
        }
        if f.nrows() != c.nrows() {
            return Err(dim_err("LinearSystem: F", (c.nrows(), f.ncols()), f.shape()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Domain {
                what: "sampling period",
                value: dt,
            });
        }
        Ok(Self { a, b, gamma, c, f, dt })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_w(&self) -> usize {
        self.gamma.ncols()
    }
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
    pub fn n_v(&self) -> usize {
        self.f.ncols()
    }
}

/// Continuous-time CWH matrices for orbital rate `n` (rad/s).
pub fn cwh_continuous(n: f64) -> (Matrix, Matrix) {
    let mut a = Matrix::zeros(6, 6);
    for i in 0..3 {
        a[(i, i + 3)] = 1.0;
    }
    a[(3, 0)] = 3.0 * n * n;
    a[(3, 4)] = 2.0 * n;
    a[(4, 3)] = -2.0 * n;
    a[(5, 2)] = -n * n;
    let mut b = Matrix::zeros(6, 3);
    for i in 0..3 {
        b[(i + 3, i)] = 1.0;
    }
    (a, b)
}

/// Zero-order-hold discretization through the exponential of
/// `[[A_ct, B_ct], [0, 0]]·dt`, whose top blocks are `(A, B)`.
pub fn discretize(a_ct: &Matrix, b_ct: &Matrix, dt: f64) -> Result<(Matrix, Matrix)> {
    let n = require_square(a_ct, "discretize: A_ct")?;
    if b_ct.nrows() != n {
        return Err(dim_err("discretize: B_ct", (n, b_ct.ncols()), b_ct.shape()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain {
            what: "sampling period",
            value: dt,
        });
    }
    let m = b_ct.ncols();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_ct * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b_ct * dt));
    let e = mat_exp(&aug)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

/// Disturbance, measurement-noise and output matrices of the CWH setup.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub gamma: Matrix,
    pub f: Matrix,
    pub c: Matrix,
}

/// `Γ = 0.01·[0; I₃]`, `F = 0.01·I₃`, `C = [I₃ 0]`.
pub fn default_noise_model() -> NoiseModel {
    let mut gamma = Matrix::zeros(6, 3);
    let mut c = Matrix::zeros(3, 6);
    for i in 0..3 {
        gamma[(i + 3, i)] = 0.01;
        c[(i, i)] = 1.0;
    }
    NoiseModel {
        gamma,
        f: Matrix::identity(3, 3) * 0.01,
        c,
    }
}

/// Discretized CWH plant with the default noise model.
pub fn cwh_system(n: f64, dt: f64) -> Result<LinearSystem> {
    let (a_ct, b_ct) = cwh_continuous(n);
    let (a, b) = discretize(&a_ct, &b_ct, dt)?;
    let noise = default_noise_model();
    LinearSystem::new(a, b, noise.gamma, noise.c, noise.f, dt)
}

/// Plant closed with `u = Kx̂ + Gr` and a Luenberger observer
/// `x̂⁺ = Ax̂ + Bu + L(Cx̂ − y)`, plus everything derived from it.
///
/// Immutable once assembled.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    sys: LinearSystem,
    k: Matrix,
    l: Matrix,
    g: Matrix,
    a_c: Matrix,
    b_c: Matrix,
    gamma_c: Matrix,
    a_o: Matrix,
    b_o: Matrix,
    a_aug: Matrix,
    b_aug: Matrix,
    gamma_aug: Matrix,
    p_inf: Matrix,
    eq_map: Matrix,
    rho_c: f64,
    rho_o: f64,
}

impl ClosedLoop {
    /// Fails with a stability error unless both `A + BK` and `A + LC` are Schur.
    pub fn assemble(sys: LinearSystem, k: Matrix, l: Matrix, g: Matrix) -> Result<Self> {
        let (nx, nu, ny) = (sys.n_x(), sys.n_u(), sys.n_y());
        if k.shape() != (nu, nx) {
            return Err(dim_err("ClosedLoop: K", (nu, nx), k.shape()));
        }
        if l.shape() != (nx, ny) {
            return Err(dim_err("ClosedLoop: L", (nx, ny), l.shape()));
        }
        if g.shape() != (nu, ny) {
            return Err(dim_err("ClosedLoop: G", (nu, ny), g.shape()));
        }
        let a_c = &sys.a + &sys.b * &k;
        let a_o = &sys.a + &l * &sys.c;
        let rho_c = ensure_schur(&a_c, "A + BK")?;
        let rho_o = ensure_schur(&a_o, "A + LC")?;

        let b_c = &sys.b * &g;
        let lc = &l * &sys.c;
        let lf = &l * &sys.f;
        let (nw, nv) = (sys.n_w(), sys.n_v());

        let mut gamma_c = Matrix::zeros(nx, nx + nv);
        gamma_c.view_mut((0, 0), (nx, nx)).copy_from(&(-&lc));
        gamma_c.view_mut((0, nx), (nx, nv)).copy_from(&(-&lf));

        let mut b_o = Matrix::zeros(nx, nw + nv);
        b_o.view_mut((0, 0), (nx, nw)).copy_from(&sys.gamma);
        b_o.view_mut((0, nw), (nx, nv)).copy_from(&lf);

        let mut a_aug = Matrix::zeros(2 * nx, 2 * nx);
        a_aug.view_mut((0, 0), (nx, nx)).copy_from(&a_c);
        a_aug.view_mut((0, nx), (nx, nx)).copy_from(&(-&lc));
        a_aug.view_mut((nx, nx), (nx, nx)).copy_from(&a_o);

        let mut b_aug = Matrix::zeros(2 * nx, nv);
        b_aug.view_mut((0, 0), (nx, nv)).copy_from(&(-&lf));
        b_aug.view_mut((nx, 0), (nx, nv)).copy_from(&lf);

        let mut gamma_aug = Matrix::zeros(2 * nx, nw);
        gamma_aug.view_mut((nx, 0), (nx, nw)).copy_from(&sys.gamma);

        let p_inf = solve_dlyap(&a_o, &(&b_o * b_o.transpose()))?;
        let eq_map = solve(&(Matrix::identity(nx, nx) - &a_c), &b_c, "I - A_c").map_err(|_| Error::Stability {
            what: "I - A_c (singular)",
            spectral_radius: rho_c,
        })?;

        Ok(Self {
            sys,
            k,
            l,
            g,
            a_c,
            b_c,
            gamma_c,
            a_o,
            b_o,
            a_aug,
            b_aug,
            gamma_aug,
            p_inf,
            eq_map,
            rho_c,
            rho_o,
        })
    }

    pub fn sys(&self) -> &LinearSystem {
        &self.sys
    }
    pub fn k(&self) -> &Matrix {
        &self.k
    }
    pub fn l(&self) -> &Matrix {
        &self.l
    }
    pub fn g(&self) -> &Matrix {
        &self.g
    }
    pub fn a_c(&self) -> &Matrix {
        &self.a_c
    }
    pub fn b_c(&self) -> &Matrix {
        &self.b_c
    }
    /// `[−LC  −LF]`, driving the shifted estimate from `[e; v]`.
    pub fn gamma_c(&self) -> &Matrix {
        &self.gamma_c
    }
    pub fn a_o(&self) -> &Matrix {
        &self.a_o
    }
    /// `[Γ  LF]`.
    pub fn b_o(&self) -> &Matrix {
        &self.b_o
    }
    /// `[[A_c, −LC], [0, A_o]]` acting on `[x̃; e]`.
    pub fn a_aug(&self) -> &Matrix {
        &self.a_aug
    }
    /// `[−LF; LF]`.
    pub fn b_aug(&self) -> &Matrix {
        &self.b_aug
    }
    /// `[0; Γ]`.
    pub fn gamma_aug(&self) -> &Matrix {
        &self.gamma_aug
    }
    /// Steady-state estimation error covariance.
    pub fn p_inf(&self) -> &Matrix {
        &self.p_inf
    }
    /// `(I − A_c)⁻¹ B_c`, mapping a set-point to its forced equilibrium.
    pub fn equilibrium_map(&self) -> &Matrix {
        &self.eq_map
    }
    pub fn spectral_radius_control(&self) -> f64 {
        self.rho_c
    }
    pub fn spectral_radius_observer(&self) -> f64 {
        self.rho_o
    }
    pub fn n_x(&self) -> usize {
        self.sys.n_x()
    }

    /// Forced equilibrium `(I − A_c)⁻¹ B_c r`.
    pub fn equilibrium_state(&self, r: &Vector) -> Result<Vector> {
        if r.len() != self.eq_map.ncols() {
            return Err(dim_err("equilibrium_state: r", (self.eq_map.ncols(), 1), (r.len(), 1)));
        }
        Ok(&self.eq_map * r)
    }

    /// Total per-step noise input covariance of the augmented system,
    /// `B_aug B_augᵀ + Γ_aug Γ_augᵀ`.
    pub fn augmented_noise_covariance(&self) -> Matrix {
        &self.b_aug * self.b_aug.transpose() + &self.gamma_aug * self.gamma_aug.transpose()
    }
}

pub fn assemble_closed_loop(sys: LinearSystem, k: Matrix, l: Matrix, g: Matrix) -> Result<ClosedLoop> {
    ClosedLoop::assemble(sys, k, l, g)
}

pub fn equilibrium_state(cl: &ClosedLoop, r: &Vector) -> Result<Vector> {
    cl.equilibrium_state(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn cwh_entries() {
        let n = 0.0013;
        let (a, b) = cwh_continuous(n);
        assert_relative_eq!(a[(3, 0)], 5.07e-6, max_relative = 1e-12);
        assert_eq!(a[(3, 4)], 0.0026);
        assert_eq!(a[(4, 3)], -0.0026);
        assert_relative_eq!(a[(5, 2)], -1.69e-6, max_relative = 1e-12);
        assert!(b.rows(0, 3).iter().all(|v| *v == 0.0));
        assert_eq!(b.rows(3, 3).into_owned(), Matrix::identity(3, 3));
    }

    #[test]
    fn cwh_without_rotation_is_double_integrator() {
        let (a, _) = cwh_continuous(0.0);
        let mut expected = Matrix::zeros(6, 6);
        expected.view_mut((0, 3), (3, 3)).fill_with_identity();
        assert_eq!(a, expected);
    }

    #[test]
    fn double_integrator_discretization() {
        let (a_ct, b_ct) = cwh_continuous(0.0);
        let (a, b) = discretize(&a_ct, &b_ct, 10.0).unwrap();
        let mut a_want = Matrix::identity(6, 6);
        a_want
            .view_mut((0, 3), (3, 3))
            .copy_from(&(Matrix::identity(3, 3) * 10.0));
        let mut b_want = Matrix::zeros(6, 3);
        b_want
            .view_mut((0, 0), (3, 3))
            .copy_from(&(Matrix::identity(3, 3) * 50.0));
        b_want
            .view_mut((3, 0), (3, 3))
            .copy_from(&(Matrix::identity(3, 3) * 10.0));
        assert_relative_eq!(a, a_want, epsilon = 1e-12);
        assert_relative_eq!(b, b_want, epsilon = 1e-12);
    }

    #[test]
    fn vanishing_hold_interval() {
        let (a_ct, b_ct) = cwh_continuous(0.0013);
        let (a, b) = discretize(&a_ct, &b_ct, 1e-9).unwrap();
        assert!((a - Matrix::identity(6, 6)).norm() <= 1e-8);
        assert!(b.norm() <= 1e-8);
    }

    #[test]
    fn noise_model_entries() {
        let nm = default_noise_model();
        assert_eq!(nm.gamma[(3, 0)], 0.01);
        assert_eq!(nm.f, Matrix::identity(3, 3) * 0.01);
        let x = dvector![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(&nm.c * x, dvector![1.0, 2.0, 3.0]);
    }

    fn scalar_loop(gamma: f64, f: f64) -> ClosedLoop {
        let sys = LinearSystem::new(
            dmatrix![0.5],
            dmatrix![1.0],
            dmatrix![gamma],
            dmatrix![1.0],
            dmatrix![f],
            1.0,
        )
        .unwrap();
        ClosedLoop::assemble(sys, dmatrix![0.0], dmatrix![-0.25], dmatrix![0.5]).unwrap()
    }

    #[test]
    fn scalar_closed_loop_closed_forms() {
        let (gamma, f) = (0.3, 0.7);
        let cl = scalar_loop(gamma, f);
        assert_eq!(cl.a_c()[(0, 0)], 0.5);
        assert_eq!(cl.a_o()[(0, 0)], 0.25);
        let want = (gamma * gamma + 0.0625 * f * f) / (1.0 - 0.0625);
        assert_relative_eq!(cl.p_inf()[(0, 0)], want, max_relative = 1e-14);
        assert_eq!(cl.a_aug(), &dmatrix![0.5, 0.25; 0.0, 0.25]);
        assert_eq!(cl.b_aug(), &dmatrix![0.25 * f; -0.25 * f]);
        assert_eq!(cl.gamma_aug(), &dmatrix![0.0; gamma]);
    }

    #[test]
    fn zero_gain_keeps_open_loop() {
        let cl = scalar_loop(0.1, 0.1);
        assert_eq!(cl.a_c(), &cl.sys().a);
    }

    #[test]
    fn unstable_observer_rejected() {
        let sys = LinearSystem::new(
            dmatrix![0.5],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            1.0,
        )
        .unwrap();
        let err = ClosedLoop::assemble(sys, dmatrix![0.0], dmatrix![0.8], dmatrix![0.5]).unwrap_err();
        assert!(matches!(err, Error::Stability { .. }));
    }

    #[test]
    fn equilibrium_linear_and_zero() {
        let cl = scalar_loop(0.1, 0.1);
        assert_eq!(cl.equilibrium_state(&dvector![0.0]).unwrap(), dvector![0.0]);
        let a = cl.equilibrium_state(&dvector![1.5]).unwrap();
        let b = cl.equilibrium_state(&dvector![-0.4]).unwrap();
        let ab = cl.equilibrium_state(&dvector![1.1]).unwrap();
        assert_relative_eq!(ab, a + b, epsilon = 1e-14);
    }

    #[test]
    fn dimension_checks() {
        assert!(LinearSystem::new(
            Matrix::identity(2, 2),
            Matrix::zeros(3, 1),
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 1),
            1.0
        )
        .is_err());
        assert!(discretize(&Matrix::identity(2, 2), &Matrix::zeros(2, 1), 0.0).is_err());
    }
}
