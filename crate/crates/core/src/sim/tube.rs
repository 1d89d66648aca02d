use alloc::vec::Vec;

use super::{MonteCarloSummary, Trace};
use crate::dynamics::{ClosedLoop, POSITION_DIM};
use crate::error::{dim_err, Error, Result};
use crate::numerics::{chi2_quantile, symmetrize};
use crate::{Matrix, Vector};

const REGULARIZATION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TubeMode {
    Empirical,
    Analytic,
}

impl TubeMode {
    pub fn label(self) -> &'static str {
        match self {
            TubeMode::Empirical => "empirical",
            TubeMode::Analytic => "analytic",
        }
    }
}

/// `{ω : (ω − c)ᵀ S⁻¹ (ω − c) ≤ radius²}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeEllipsoid {
    pub center: Vector,
    pub shape: Matrix,
    pub radius_sq: f64,
    chol: Matrix,
}

impl TubeEllipsoid {
    /// Adds `1e-12·I` once if `shape` is not positive definite.
    pub fn new(center: Vector, shape: Matrix, radius_sq: f64) -> Result<Self> {
        if shape.shape() != (center.len(), center.len()) {
            return Err(dim_err("TubeEllipsoid", (center.len(), center.len()), shape.shape()));
        }
        if !(radius_sq > 0.0) {
            return Err(Error::Domain {
                what: "tube radius squared",
                value: radius_sq,
            });
        }
        let mut shape = symmetrize(&shape);
        let chol = match shape.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                shape += Matrix::identity(center.len(), center.len()) * REGULARIZATION;
                shape
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numeric("tube covariance is not positive definite".into()))?
                    .l()
            }
        };
        Ok(Self {
            center,
            shape,
            radius_sq,
            chol,
        })
    }

    /// `(ω − c)ᵀ S⁻¹ (ω − c)`.
    pub fn mahalanobis_sq(&self, point: &Vector) -> f64 {
        let d = point - &self.center;
        match self.chol.solve_lower_triangular(&d) {
            Some(y) => y.norm_squared(),
            None => f64::INFINITY,
        }
    }

    pub fn contains(&self, point: &Vector) -> bool {
        self.mahalanobis_sq(point) <= self.radius_sq
    }
}

/// Per-step position tubes from Monte Carlo moments.
pub fn beta_tube_empirical(summary: &MonteCarloSummary, beta: f64) -> Result<Vec<TubeEllipsoid>> {
    let c2 = chi2_quantile(POSITION_DIM as u32, beta)?;
    summary
        .position_mean
        .iter()
        .zip(&summary.position_covariance)
        .map(|(m, p)| TubeEllipsoid::new(m.clone(), p.clone(), c2))
        .collect()
}

/// Per-step position tubes from the predicted mean and covariance of `x_t` under a
/// constant set-point `r`, starting from the shift `x̃₀` with `e₀ ~ N(0, P∞)`.
pub fn beta_tube_analytic(
    cl: &ClosedLoop,
    r: &Vector,
    x_tilde0: &Vector,
    steps: usize,
    beta: f64,
) -> Result<Vec<TubeEllipsoid>> {
    let n = cl.n_x();
    if x_tilde0.len() != n {
        return Err(dim_err("beta_tube_analytic", (n, 1), (x_tilde0.len(), 1)));
    }
    let c2 = chi2_quantile(POSITION_DIM as u32, beta)?;
    let x_eq = cl.equilibrium_state(r)?;
    let a = cl.a_aug();
    let w = cl.augmented_noise_covariance();
    let mut mean = Vector::zeros(2 * n);
    mean.rows_mut(0, n).copy_from(x_tilde0);
    let mut cov = Matrix::zeros(2 * n, 2 * n);
    cov.view_mut((n, n), (n, n)).copy_from(cl.p_inf());
    let p = POSITION_DIM;
    let mut out = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        let center = x_eq.rows(0, p) + mean.rows(0, p) + mean.rows(n, p);
        let shape =
            cov.view((0, 0), (p, p)) + cov.view((0, n), (p, p)) + cov.view((n, 0), (p, p)) + cov.view((n, n), (p, p));
        out.push(TubeEllipsoid::new(center, shape, c2)?);
        mean = a * mean;
        cov = a * &cov * a.transpose() + &w;
    }
    Ok(out)
}

/// Unbiased covariance of `e_k = x_k − x̂_k` pooled over every record of every trace.
pub fn empirical_error_covariance(traces: &[Trace]) -> Result<Matrix> {
    let mut count = 0usize;
    let mut sum = Vector::zeros(0);
    let mut outer = Matrix::zeros(0, 0);
    for rec in traces.iter().flat_map(|t| &t.records) {
        if count == 0 {
            let n = rec.x.len();
            sum = Vector::zeros(n);
            outer = Matrix::zeros(n, n);
        }
        let e = &rec.x - &rec.x_hat;
        sum += &e;
        outer.ger(1.0, &e, &e, 1.0);
        count += 1;
    }
    if count < 2 {
        return Err(Error::Input("error covariance needs at least two samples".into()));
    }
    let m = count as f64;
    let mean = sum / m;
    Ok((outer - &mean * mean.transpose() * m) / (m - 1.0))
}
