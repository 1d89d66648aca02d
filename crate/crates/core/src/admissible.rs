//! Chance-constrained admissible sets: the initial estimate shifts `x̃₀ = x̂₀ − x_eq(r)`
//! for which every constraint row of a convex region holds with probability at least
//! `1 − α/n_h` at every future step under a constant set-point `r`.
//!
//! Rows are `g_{t,i}·x̃₀ ≤ b_{t,i}` with `g_{t,i}` the estimate block of
//! `[H_i H_i] A_aug^t` and `b_{t,i} = h_i − H_i x_eq(r) − √(2Σ_{t,i})·erf⁻¹(1 − 2α′)`.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use crate::dynamics::ClosedLoop;
use crate::error::{dim_err, Error, Result};
use crate::geometry::Polytope;
use crate::numerics::linalg::dot;
use crate::numerics::{erf_inv, normal_cdf, solve_dlyap, symmetrize, RngStream};
use crate::{Matrix, Vector};

/// Relative convergence threshold of the covariance recursion.
pub const COVARIANCE_TOL: f64 = 1e-10;
/// Default cap on the truncation horizon.
pub const MAX_HORIZON: usize = 10_000;
/// Relative interior slack for strict membership.
pub const INTERIOR_EPS: f64 = 1e-6;

/// `P̃_t` for `t = 0…T`.
#[derive(Debug, Clone)]
pub struct CovarianceSchedule {
    p_tilde: Vec<Matrix>,
}

impl CovarianceSchedule {
    pub fn horizon(&self) -> usize {
        self.p_tilde.len() - 1
    }

    pub fn p_tilde(&self, t: usize) -> &Matrix {
        &self.p_tilde[t]
    }

    pub fn all(&self) -> &[Matrix] {
        &self.p_tilde
    }

    /// `Σ_{t,i} = [H_i H_i] P̃_t [H_i H_i]ᵀ`, indexed `[i][t]`.
    pub fn row_variances(&self, h: &Matrix) -> Result<Vec<Vec<f64>>> {
        let n = self.p_tilde[0].nrows() / 2;
        if h.ncols() != n {
            return Err(dim_err("row_variances", (h.nrows(), n), h.shape()));
        }
        let h_aug = augmented_rows(h);
        Ok((0..h.nrows())
            .map(|i| {
                let row = h_aug.row(i).transpose();
                self.p_tilde.iter().map(|p| row.dot(&(p * &row)).max(0.0)).collect()
            })
            .collect())
    }
}

/// `[H H]`.
fn augmented_rows(h: &Matrix) -> Matrix {
    let (m, n) = h.shape();
    let mut out = Matrix::zeros(m, 2 * n);
    out.view_mut((0, 0), (m, n)).copy_from(h);
    out.view_mut((0, n), (m, n)).copy_from(h);
    out
}

fn initial_covariance(cl: &ClosedLoop) -> Matrix {
    let n = cl.n_x();
    let mut p0 = Matrix::zeros(2 * n, 2 * n);
    p0.view_mut((n, n), (n, n)).copy_from(cl.p_inf());
    p0
}

pub fn propagate_covariance(cl: &ClosedLoop, horizon: usize) -> CovarianceSchedule {
    let w = cl.augmented_noise_covariance();
    let a = cl.a_aug();
    let mut p_tilde = Vec::with_capacity(horizon + 1);
    let mut p = initial_covariance(cl);
    for _ in 0..horizon {
        let next = symmetrize(&(a * &p * a.transpose() + &w));
        p_tilde.push(core::mem::replace(&mut p, next));
    }
    p_tilde.push(p);
    CovarianceSchedule { p_tilde }
}

/// `√(2Σ)·erf⁻¹(1 − 2α′)`. Negative for `α′ > 0.5`.
pub fn tightening_margin(sigma: f64, alpha_prime: f64) -> Result<f64> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain {
            what: "row variance",
            value: sigma,
        });
    }
    Ok(libm::sqrt(2.0 * sigma) * quantile_factor(alpha_prime)?)
}

fn quantile_factor(alpha_prime: f64) -> Result<f64> {
    if !(alpha_prime > 0.0 && alpha_prime < 1.0) {
        return Err(Error::Domain {
            what: "row risk",
            value: alpha_prime,
        });
    }
    erf_inv(1.0 - 2.0 * alpha_prime)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleOptions {
    /// Total risk per region, split evenly over its rows.
    pub alpha: f64,
    /// Bound on `‖x̃₀‖` used for truncation and pruning; defaults to the region's bounding diameter.
    pub shift_radius: Option<f64>,
    pub max_horizon: usize,
    /// Use exactly this horizon instead of the computed one.
    pub horizon_override: Option<usize>,
    pub prune: bool,
    pub search_starts: usize,
    pub search_iterations: usize,
}

impl AdmissibleOptions {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            shift_radius: None,
            max_horizon: MAX_HORIZON,
            horizon_override: None,
            prune: true,
            search_starts: 8,
            search_iterations: 300,
        }
    }
}

/// Set-point independent part of the construction for one region: normals, margins
/// and row-norm sequences. `build` only shifts offsets by `H x_eq(r)`.
#[derive(Debug, Clone)]
pub struct AdmissibleTemplate {
    region_id: usize,
    n_x: usize,
    n_h: usize,
    h: Matrix,
    h_offsets: Vector,
    eq_map: Matrix,
    alpha_prime: f64,
    z: f64,
    radius: f64,
    options: AdmissibleOptions,
    a_aug: Matrix,
    w: Matrix,
    h_aug: Matrix,
    /// Smallest `m` with `‖A_aug^m‖_F < 1`.
    window: usize,
    d_norm: f64,
    sigma_inf: Vec<f64>,
    converged_at: Option<usize>,
    // Rolling state at step `normals.len() / (n_h n_x)`.
    m_t: Matrix,
    p_t: Matrix,
    normals: Vec<f64>,
    margins: Vec<f64>,
    row_norms: Vec<f64>,
}

impl AdmissibleTemplate {
    pub fn new(cl: &ClosedLoop, region: &Polytope, options: &AdmissibleOptions) -> Result<Self> {
        let n_x = cl.n_x();
        if region.dim() != n_x {
            return Err(dim_err(
                "admissible region",
                (region.n_rows(), n_x),
                (region.n_rows(), region.dim()),
            ));
        }
        let n_h = region.n_rows();
        if n_h == 0 {
            return Err(Error::Input("admissible region has no rows".into()));
        }
        if !(options.alpha > 0.0 && options.alpha < 1.0) {
            return Err(Error::Domain {
                what: "alpha",
                value: options.alpha,
            });
        }
        let alpha_prime = options.alpha / n_h as f64;
        let z = libm::sqrt(2.0) * quantile_factor(alpha_prime)?;
        let radius = match options.shift_radius {
            Some(r) if r > 0.0 && r.is_finite() => r,
            Some(r) => {
                return Err(Error::Domain {
                    what: "shift radius",
                    value: r,
                })
            }
            None => region
                .bounding_diameter()
                .ok_or_else(|| Error::Input("region is not axis-bounded; set a shift radius".into()))?,
        };

        let a_aug = cl.a_aug().clone();
        let window = contraction_window(&a_aug, options.max_horizon)?;
        let w = cl.augmented_noise_covariance();
        let p0 = initial_covariance(cl);
        let p_inf = solve_dlyap(&a_aug, &w)?;
        let d_norm = (&p0 - &p_inf).norm();
        let h_aug = augmented_rows(region.normals());
        let sigma_inf = (0..n_h)
            .map(|i| {
                let row = h_aug.row(i).transpose();
                row.dot(&(&p_inf * &row)).max(0.0)
            })
            .collect();

        let mut template = Self {
            region_id: 0,
            n_x,
            n_h,
            h: region.normals().clone(),
            h_offsets: region.offsets().clone(),
            eq_map: cl.equilibrium_map().clone(),
            alpha_prime,
            z,
            radius,
            options: options.clone(),
            m_t: h_aug.clone(),
            h_aug,
            a_aug,
            w,
            window,
            d_norm,
            sigma_inf,
            converged_at: None,
            p_t: p0,
            normals: Vec::new(),
            margins: Vec::new(),
            row_norms: Vec::new(),
        };
        template.extend_to(2 * window + 64)?;
        while template.converged_at.is_none() {
            let next = 2 * template.stored();
            template.extend_to(next)?;
        }
        Ok(template)
    }

    pub fn with_region_id(mut self, id: usize) -> Self {
        self.region_id = id;
        self
    }

    pub fn region_id(&self) -> usize {
        self.region_id
    }

    pub fn alpha_prime(&self) -> f64 {
        self.alpha_prime
    }

    pub fn shift_radius(&self) -> f64 {
        self.radius
    }

    /// Step at which the covariance recursion met its convergence test.
    pub fn covariance_converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    /// Number of steps with stored rows.
    fn stored(&self) -> usize {
        self.margins.len() / self.n_h
    }

    /// Computes rows for steps up to `t_max − 1`.
    fn extend_to(&mut self, t_max: usize) -> Result<()> {
        let cap = self.options.max_horizon + self.window + 1;
        if t_max > cap && self.stored() >= cap {
            return Err(Error::Construction(alloc::format!(
                "truncation horizon exceeds the cap of {} steps",
                self.options.max_horizon
            )));
        }
        let t_max = t_max.min(cap);
        let (n_x, n_h) = (self.n_x, self.n_h);
        while self.stored() < t_max {
            let t = self.stored();
            for i in 0..n_h {
                let row = self.h_aug.row(i).transpose();
                let sigma = row.dot(&(&self.p_t * &row)).max(0.0);
                self.margins.push(self.z * libm::sqrt(sigma));
                self.row_norms.push(self.m_t.row(i).norm());
                self.normals.extend(self.m_t.row(i).iter().take(n_x));
            }
            let next = symmetrize(&(&self.a_aug * &self.p_t * self.a_aug.transpose() + &self.w));
            if self.converged_at.is_none() {
                let scale = self.p_t.norm();
                if (&next - &self.p_t).norm() <= COVARIANCE_TOL * scale || scale == 0.0 && next.norm() == 0.0 {
                    self.converged_at = Some(t);
                }
            }
            self.p_t = next;
            self.m_t = &self.m_t * &self.a_aug;
        }
        Ok(())
    }

    /// `max_{0≤j<m} ‖[H_i H_i] A_aug^{t+j}‖₂`, bounding the row norm for every step ≥ t.
    fn tail(&self, t: usize, i: usize) -> f64 {
        (t..t + self.window)
            .map(|s| self.row_norms[s * self.n_h + i])
            .fold(0.0, f64::max)
    }

    /// `h − H x_eq(r)`.
    pub fn shifted_offsets(&self, r: &Vector) -> Result<Vector> {
        if r.len() != self.eq_map.ncols() {
            return Err(dim_err("set-point", (self.eq_map.ncols(), 1), (r.len(), 1)));
        }
        Ok(&self.h_offsets - &self.h * (&self.eq_map * r))
    }

    pub fn build(&self, r: &Vector) -> Result<AdmissibleSet> {
        let h_r = self.shifted_offsets(r)?;
        let mut set = AdmissibleSet {
            r: r.clone(),
            region_id: self.region_id,
            n_x: self.n_x,
            normals: Vec::new(),
            offsets: Vec::new(),
            steps: Vec::new(),
            rows: Vec::new(),
            horizon: 0,
            empty: true,
            degenerate: self.alpha_prime >= 0.5,
            alpha_prime: self.alpha_prime,
            witness: None,
        };
        let b_inf: Vec<f64> = (0..self.n_h)
            .map(|i| h_r[i] - self.z * libm::sqrt(self.sigma_inf[i]))
            .collect();
        if b_inf.iter().any(|b| !(*b > 0.0)) {
            return Ok(set);
        }

        let mut local = Cow::Borrowed(self);
        let horizon = match self.options.horizon_override {
            Some(t) => t,
            None => {
                let mut t = self.converged_at.unwrap_or(0);
                loop {
                    if t > self.options.max_horizon {
                        return Err(Error::Construction(alloc::format!(
                            "truncation horizon exceeds the cap of {} steps",
                            self.options.max_horizon
                        )));
                    }
                    if t + self.window > local.stored() {
                        let next = 2 * (t + self.window);
                        local.to_mut().extend_to(next)?;
                    }
                    if (0..self.n_h).all(|i| {
                        let tail = local.tail(t, i);
                        tail * self.radius <= self.bound_offset(h_r[i], i, tail)
                    }) {
                        break t;
                    }
                    t += 1;
                }
            }
        };
        if horizon + 1 > local.stored() {
            local.to_mut().extend_to(horizon + 1)?;
        }

        let (n_x, n_h) = (self.n_x, self.n_h);
        for t in 0..=horizon {
            for i in 0..n_h {
                let idx = t * n_h + i;
                let b = h_r[i] - local.margins[idx];
                let g = &local.normals[idx * n_x..(idx + 1) * n_x];
                if self.options.prune && t >= 1 && b >= libm::sqrt(g.iter().map(|v| v * v).sum::<f64>()) * self.radius {
                    continue;
                }
                set.normals.extend_from_slice(g);
                set.offsets.push(b);
                set.steps.push(t as u32);
                set.rows.push(i as u32);
            }
        }
        set.horizon = horizon;
        set.empty = false;

        let origin = Vector::zeros(n_x);
        if set.contains_raw(&origin, 0.0) {
            set.witness = Some(origin);
        } else {
            set.witness = set.search_witness(self.radius, self.options.search_starts, self.options.search_iterations);
            set.empty = set.witness.is_none();
        }
        Ok(set)
    }

    /// Lower bound on `b_{t,i}` over all `t` past a step whose tail norm is `tail`.
    fn bound_offset(&self, h_ri: f64, i: usize, tail: f64) -> f64 {
        let spread = tail * tail * self.d_norm;
        let sigma = if self.z >= 0.0 {
            self.sigma_inf[i] + spread
        } else {
            (self.sigma_inf[i] - spread).max(0.0)
        };
        h_ri - self.z * libm::sqrt(sigma)
    }
}

/// Smallest `m ≥ 1` with `‖A^m‖_F < 1`.
fn contraction_window(a: &Matrix, cap: usize) -> Result<usize> {
    let mut power = a.clone();
    for m in 1..=cap.max(1) {
        if power.norm() < 1.0 {
            return Ok(m);
        }
        power = &power * a;
    }
    Err(Error::Stability {
        what: "augmented closed loop",
        spectral_radius: crate::numerics::spectral_radius(a)?,
    })
}

pub fn build_admissible_set(
    cl: &ClosedLoop,
    region: &Polytope,
    r: &Vector,
    options: &AdmissibleOptions,
) -> Result<AdmissibleSet> {
    AdmissibleTemplate::new(cl, region, options)?.build(r)
}

/// Finite half-space description of one admissible set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSet {
    r: Vector,
    region_id: usize,
    n_x: usize,
    normals: Vec<f64>,
    offsets: Vec<f64>,
    steps: Vec<u32>,
    rows: Vec<u32>,
    horizon: usize,
    empty: bool,
    degenerate: bool,
    alpha_prime: f64,
    witness: Option<Vector>,
}

/// One stored constraint `normal·x̃₀ ≤ offset` from step `step`, region row `row`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetRow<'a> {
    pub step: usize,
    pub row: usize,
    pub normal: &'a [f64],
    pub offset: f64,
}

impl AdmissibleSet {
    pub fn set_point(&self) -> &Vector {
        &self.r
    }

    pub fn region_id(&self) -> usize {
        self.region_id
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// True when `α′ ≥ 0.5`, so the tightening no longer backs the risk bound.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn alpha_prime(&self) -> f64 {
        self.alpha_prime
    }

    pub fn witness(&self) -> Option<&Vector> {
        self.witness.as_ref()
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len()
    }

    pub fn rows(&self) -> impl Iterator<Item = SetRow<'_>> + '_ {
        (0..self.n_rows()).map(move |k| SetRow {
            step: self.steps[k] as usize,
            row: self.rows[k] as usize,
            normal: &self.normals[k * self.n_x..(k + 1) * self.n_x],
            offset: self.offsets[k],
        })
    }

    /// Membership of the shift `x̃₀`. The strict variant requires slack `1e-6·(1 + |b|)` on every row.
    pub fn contains(&self, x_tilde0: &Vector, strict: bool) -> Result<bool> {
        if x_tilde0.len() != self.n_x {
            return Err(dim_err("AdmissibleSet::contains", (self.n_x, 1), (x_tilde0.len(), 1)));
        }
        if self.empty {
            return Ok(false);
        }
        Ok(self.contains_raw(x_tilde0, if strict { INTERIOR_EPS } else { 0.0 }))
    }

    fn contains_raw(&self, x: &Vector, eps: f64) -> bool {
        self.offsets.iter().enumerate().all(|(k, &b)| {
            let g = &self.normals[k * self.n_x..(k + 1) * self.n_x];
            dot(g, x) <= b - eps * (1.0 + libm::fabs(b))
        })
    }

    /// Multi-start Motzkin relaxation towards a strictly interior point.
    fn search_witness(&self, radius: f64, starts: usize, iterations: usize) -> Option<Vector> {
        let n = self.n_x;
        let mut rng = RngStream::new(0x5eed);
        let norms: Vec<f64> = (0..self.n_rows())
            .map(|k| libm::sqrt(self.normals[k * n..(k + 1) * n].iter().map(|v| v * v).sum()))
            .collect();
        for s in 0..starts.max(1) {
            let mut x = if s == 0 {
                Vector::zeros(n)
            } else {
                Vector::from_fn(n, |_, _| (rng.uniform() - 0.5) * 0.5 * radius)
            };
            for _ in 0..iterations {
                let mut worst = None;
                let mut worst_gap = 0.0;
                for (k, &b) in self.offsets.iter().enumerate() {
                    if norms[k] == 0.0 {
                        continue;
                    }
                    let target = b - 2.0 * INTERIOR_EPS * (1.0 + libm::fabs(b));
                    let gap = (dot(&self.normals[k * n..(k + 1) * n], &x) - target) / norms[k];
                    if gap > worst_gap {
                        worst_gap = gap;
                        worst = Some(k);
                    }
                }
                let Some(k) = worst else {
                    break;
                };
                let g = &self.normals[k * n..(k + 1) * n];
                for j in 0..n {
                    x[j] -= worst_gap * g[j] / norms[k];
                }
            }
            if self.contains_raw(&x, INTERIOR_EPS) {
                return Some(x);
            }
        }
        None
    }
}

pub fn set_contains(set: &AdmissibleSet, x_tilde0: &Vector, strict: bool) -> Result<bool> {
    set.contains(x_tilde0, strict)
}

/// Direct check of `Prob(H_i x_t ≤ h_i) ≥ 1 − α/n_h` for all `t ≤ horizon`, propagating the
/// Gaussian mean and covariance of the augmented state independently of any stored rows.
pub fn pointwise_chance_oracle(
    cl: &ClosedLoop,
    region: &Polytope,
    r: &Vector,
    x_tilde0: &Vector,
    horizon: usize,
    alpha: f64,
) -> Result<bool> {
    let n = cl.n_x();
    if x_tilde0.len() != n || region.dim() != n {
        return Err(dim_err("pointwise_chance_oracle", (n, 1), (x_tilde0.len(), 1)));
    }
    let alpha_prime = alpha / region.n_rows() as f64;
    let x_eq = cl.equilibrium_state(r)?;
    let h = region.normals();
    let a = cl.a_aug();
    let w = cl.augmented_noise_covariance();
    let mut mean = Vector::zeros(2 * n);
    mean.rows_mut(0, n).copy_from(x_tilde0);
    let mut cov = initial_covariance(cl);
    for _ in 0..=horizon {
        // True state is x_eq + x̃ + e.
        let x = &x_eq + mean.rows(0, n) + mean.rows(n, n);
        let cov_x =
            cov.view((0, 0), (n, n)) + cov.view((0, n), (n, n)) + cov.view((n, 0), (n, n)) + cov.view((n, n), (n, n));
        for i in 0..region.n_rows() {
            let hi = h.row(i).transpose();
            let mu = hi.dot(&x);
            let var = hi.dot(&(&cov_x * &hi)).max(0.0);
            let slack = region.offsets()[i] - mu;
            let p = if var == 0.0 {
                if slack >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                normal_cdf(slack / libm::sqrt(var))
            };
            if p < 1.0 - alpha_prime {
                return Ok(false);
            }
        }
        mean = a * mean;
        cov = a * &cov * a.transpose() + &w;
    }
    Ok(true)
}
