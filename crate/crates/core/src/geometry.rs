//! Half-space polytopes and the decomposition of a box-minus-obstacle free
//! space into a union of convex regions.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use crate::dynamics::POSITION_DIM;
use crate::error::{dim_err, Error, Result};
use crate::{Matrix, Vector};

/// Default relative tolerance for membership tests.
pub const DEFAULT_TOL: f64 = 1e-9;

/// `{x : Hx ≤ h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    h: Matrix,
    b: Vector,
}

impl Polytope {
    pub fn new(h: Matrix, b: Vector) -> Result<Self> {
        if h.nrows() != b.len() {
            return Err(dim_err("Polytope", (b.len(), h.ncols()), h.shape()));
        }
        if h.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("polytope entries must be finite".into()));
        }
        if let Some(i) = (0..h.nrows()).find(|&i| h.row(i).iter().all(|v| *v == 0.0)) {
            return Err(Error::Input(alloc::format!("polytope row {i} is all zeros")));
        }
        Ok(Self { h, b })
    }

    /// Axis-aligned box; rows are ordered `+e₀, −e₀, +e₁, −e₁, …`.
    pub fn axis_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(dim_err("axis_box", (lower.len(), 1), (upper.len(), 1)));
        }
        if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Input(
                "axis_box: every lower bound must be below its upper bound".into(),
            ));
        }
        let n = lower.len();
        let mut h = Matrix::zeros(2 * n, n);
        let mut b = Vector::zeros(2 * n);
        for j in 0..n {
            h[(2 * j, j)] = 1.0;
            b[2 * j] = upper[j];
            h[(2 * j + 1, j)] = -1.0;
            b[2 * j + 1] = -lower[j];
        }
        Self::new(h, b)
    }

    pub fn n_rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn normals(&self) -> &Matrix {
        &self.h
    }

    pub fn offsets(&self) -> &Vector {
        &self.b
    }

    /// True iff `Hx ≤ h + tol·(1 + |h|)` row-wise.
    pub fn contains(&self, x: &Vector, tol: f64) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(dim_err("Polytope::contains", (self.dim(), 1), (x.len(), 1)));
        }
        Ok(self.row_values(x).enumerate().all(|(i, v)| {
            let b = self.b[i];
            v <= b + tol * (1.0 + libm::fabs(b))
        }))
    }

    /// Per-row satisfaction `H_i x ≤ h_i` without tolerance.
    pub fn row_satisfaction<'a>(&'a self, x: &'a Vector) -> impl Iterator<Item = bool> + 'a {
        self.row_values(x).enumerate().map(move |(i, v)| v <= self.b[i])
    }

    fn row_values<'a>(&'a self, x: &'a Vector) -> impl Iterator<Item = f64> + 'a {
        (0..self.n_rows()).map(move |i| self.h.row(i).iter().zip(x.iter()).map(|(a, b)| a * b).sum())
    }

    /// Polytope with one extra half-space `aᵀx ≤ c` appended.
    pub fn with_row(&self, a: &[f64], c: f64) -> Result<Self> {
        if a.len() != self.dim() {
            return Err(dim_err("Polytope::with_row", (1, self.dim()), (1, a.len())));
        }
        let n = self.n_rows();
        let mut h = self.h.clone().insert_row(n, 0.0);
        h.row_mut(n).iter_mut().zip(a).for_each(|(d, s)| *d = *s);
        let b = self.b.clone().insert_row(n, c);
        Self::new(h, b)
    }

    /// Tightest axis-aligned bounds implied by rows that are multiples of `±e_j`;
    /// `None` if some coordinate is unbounded by such rows.
    pub fn axis_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let mut lo = alloc::vec![f64::NEG_INFINITY; n];
        let mut hi = alloc::vec![f64::INFINITY; n];
        for i in 0..self.n_rows() {
            let row = self.h.row(i);
            let nonzero: Vec<usize> = (0..n).filter(|&j| row[j] != 0.0).collect();
            if let [j] = nonzero[..] {
                let bound = self.b[i] / row[j];
                if row[j] > 0.0 {
                    hi[j] = hi[j].min(bound);
                } else {
                    lo[j] = lo[j].max(bound);
                }
            }
        }
        if lo.iter().chain(hi.iter()).all(|v| v.is_finite()) {
            Some((lo, hi))
        } else {
            None
        }
    }

    /// Euclidean diameter of the axis-aligned bounding box, if bounded.
    pub fn bounding_diameter(&self) -> Option<f64> {
        let (lo, hi) = self.axis_bounds()?;
        Some(libm::sqrt(lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum()))
    }
}

pub fn contains(p: &Polytope, x: &Vector, tol: f64) -> Result<bool> {
    p.contains(x, tol)
}

/// Convex regions whose union is `outer \ interior(obstacle)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    regions: Vec<Polytope>,
    outer: Polytope,
    obstacle: Option<Polytope>,
}

impl RegionSet {
    pub fn regions(&self) -> &[Polytope] {
        &self.regions
    }

    pub fn outer(&self) -> &Polytope {
        &self.outer
    }

    pub fn obstacle(&self) -> Option<&Polytope> {
        self.obstacle.as_ref()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// True iff at least one obstacle row is strictly violated (or there is no obstacle).
    pub fn outside_obstacle(&self, x: &Vector) -> bool {
        match &self.obstacle {
            None => true,
            Some(obs) => obs.row_satisfaction(x).any(|ok| !ok),
        }
    }

    /// Membership in the non-convex safe set: inside the outer box, outside the obstacle.
    pub fn in_free_space(&self, x: &Vector) -> bool {
        self.outer.row_satisfaction(x).all(|ok| ok) && self.outside_obstacle(x)
    }

    /// Lowest-index region containing `x` within `tol`.
    pub fn region_of(&self, x: &Vector, tol: f64) -> Option<usize> {
        self.regions.iter().position(|p| p.contains(x, tol).unwrap_or(false))
    }
}

/// One region per obstacle facet: `outer ∩ {Q_i x ≥ q_i}`. Exact for convex obstacles.
pub fn decompose_free_space(outer: Polytope, obstacle: Option<Polytope>) -> Result<RegionSet> {
    let obstacle = obstacle.filter(|o| o.n_rows() > 0);
    let Some(obs) = obstacle else {
        return Ok(RegionSet {
            regions: alloc::vec![outer.clone()],
            outer,
            obstacle: None,
        });
    };
    if obs.dim() != outer.dim() {
        return Err(dim_err(
            "decompose_free_space: obstacle",
            (obs.n_rows(), outer.dim()),
            (obs.n_rows(), obs.dim()),
        ));
    }
    let mut regions = Vec::with_capacity(obs.n_rows());
    for i in 0..obs.n_rows() {
        let flipped: Vec<f64> = obs.normals().row(i).iter().map(|v| -v).collect();
        regions.push(outer.with_row(&flipped, -obs.offsets()[i])?);
    }
    Ok(RegionSet {
        regions,
        outer,
        obstacle: Some(obs),
    })
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = libm::sqrt(dot3(a, a));
    if n > 1e-12 && n.is_finite() {
        Some([a[0] / n, a[1] / n, a[2] / n])
    } else {
        None
    }
}

/// Polyhedral cone with `faces` facets inscribed in the circular cone of the given
/// apex, axis and half-angle. Rows act on the position block of a `state_dim` state.
pub fn pyramid_obstacle(
    apex: [f64; 3],
    axis: [f64; 3],
    half_angle: f64,
    faces: usize,
    state_dim: usize,
) -> Result<Polytope> {
    if faces < 3 {
        return Err(Error::Input(alloc::format!(
            "pyramid needs at least 3 faces, got {faces}"
        )));
    }
    if !(half_angle > 0.0 && half_angle < FRAC_PI_2) {
        return Err(Error::Domain {
            what: "pyramid half-angle",
            value: half_angle,
        });
    }
    if state_dim < POSITION_DIM {
        return Err(dim_err("pyramid_obstacle", (POSITION_DIM, 1), (state_dim, 1)));
    }
    let u = normalize(axis).ok_or_else(|| Error::Input("pyramid axis is degenerate".into()))?;
    let reference = if libm::fabs(u[2]) < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let e1 = normalize(cross(u, reference)).ok_or_else(|| Error::Input("pyramid axis is degenerate".into()))?;
    let e2 = cross(u, e1);

    let (s, c) = (libm::sin(half_angle), libm::cos(half_angle));
    let edge = |k: usize| {
        let phi = 2.0 * PI * k as f64 / faces as f64;
        let (sp, cp) = (libm::sin(phi), libm::cos(phi));
        [
            c * u[0] + s * (cp * e1[0] + sp * e2[0]),
            c * u[1] + s * (cp * e1[1] + sp * e2[1]),
            c * u[2] + s * (cp * e1[2] + sp * e2[2]),
        ]
    };

    let mut h = Matrix::zeros(faces, state_dim);
    let mut b = Vector::zeros(faces);
    for k in 0..faces {
        let mut n = normalize(cross(edge(k), edge((k + 1) % faces)))
            .ok_or_else(|| Error::Numeric("pyramid facet normal vanished".into()))?;
        if dot3(n, u) > 0.0 {
            n = [-n[0], -n[1], -n[2]];
        }
        for j in 0..3 {
            h[(k, j)] = n[j];
        }
        b[k] = dot3(n, apex);
    }
    Polytope::new(h, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use nalgebra::dvector;

    fn unit_box(n: usize) -> Polytope {
        Polytope::axis_box(&alloc::vec![-1.0; n], &alloc::vec![1.0; n]).unwrap()
    }

    #[test]
    fn box_membership() {
        let p = unit_box(2);
        let tol = 1e-9;
        assert!(p.contains(&dvector![0.0, 0.0], tol).unwrap());
        assert!(!p.contains(&dvector![1.0 + 4.0 * tol, 0.0], tol).unwrap());
        assert!(p.contains(&dvector![1.0, 0.3], tol).unwrap());
        assert!(p.contains(&dvector![1.0, 0.0], 1e-9).unwrap());
        assert!(p.contains(&dvector![0.0], tol).is_err());
    }

    #[test]
    fn zero_rows_rejected() {
        let err = Polytope::new(Matrix::zeros(1, 2), dvector![1.0]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn interval_complement() {
        let outer = Polytope::axis_box(&[-2.0], &[2.0]).unwrap();
        let obstacle = Polytope::axis_box(&[-1.0], &[1.0]).unwrap();
        let rs = decompose_free_space(outer, Some(obstacle)).unwrap();
        assert_eq!(rs.len(), 2);
        let inside = |r: usize, x: f64| rs.regions()[r].contains(&dvector![x], 1e-12).unwrap();
        // Region 0 comes from the obstacle row x ≤ 1, so it is [1, 2].
        assert!(inside(0, 1.0) && inside(0, 2.0) && !inside(0, 0.99));
        assert!(inside(1, -1.0) && inside(1, -2.0) && !inside(1, -0.99));
    }

    #[test]
    fn no_obstacle_single_region() {
        let outer = unit_box(3);
        let rs = decompose_free_space(outer.clone(), None).unwrap();
        assert_eq!(rs.regions(), &[outer.clone()]);
        let empty = Polytope::new(Matrix::zeros(0, 3), Vector::zeros(0)).unwrap();
        assert_eq!(decompose_free_space(outer, Some(empty)).unwrap().len(), 1);
    }

    #[test]
    fn square_obstacle_cover_by_sampling() {
        let outer = Polytope::axis_box(&[-3.0, -3.0], &[3.0, 3.0]).unwrap();
        let obstacle = Polytope::axis_box(&[-1.0, -0.5], &[1.5, 1.0]).unwrap();
        let rs = decompose_free_space(outer, Some(obstacle.clone())).unwrap();
        assert_eq!(rs.len(), 4);
        let mut rng = RngStream::new(11);
        for _ in 0..100_000 {
            let x = dvector![-3.0 + 6.0 * rng.uniform(), -3.0 + 6.0 * rng.uniform()];
            let in_obstacle_interior = obstacle.row_values(&x).enumerate().all(|(i, v)| v < obstacle.b[i]);
            let covered = rs.regions().iter().filter(|r| r.contains(&x, 0.0).unwrap()).count();
            if in_obstacle_interior {
                assert_eq!(covered, 0, "{x:?}");
            } else {
                assert!(covered >= 1, "{x:?}");
            }
        }
    }

    #[test]
    fn pyramid_is_inside_circular_cone() {
        let apex = [1.0, -2.0, 0.5];
        let axis = [1.0, 1.0, 0.2];
        let half = 0.4;
        let p = pyramid_obstacle(apex, axis, half, 9, 6).unwrap();
        assert_eq!(p.n_rows(), 9);
        let u = normalize(axis).unwrap();
        // Axis points are inside.
        for d in [0.1, 1.0, 50.0] {
            let x = dvector![
                apex[0] + d * u[0],
                apex[1] + d * u[1],
                apex[2] + d * u[2],
                3.0,
                -1.0,
                2.0
            ];
            assert!(p.contains(&x, 0.0).unwrap());
        }
        // Directions further than the half-angle from the axis violate a row.
        let mut rng = RngStream::new(5);
        let mut outside = 0;
        for _ in 0..10_000 {
            let dir = normalize([rng.standard_normal(), rng.standard_normal(), rng.standard_normal()]).unwrap();
            let angle = libm::acos(dot3(dir, u).clamp(-1.0, 1.0));
            let x = dvector![
                apex[0] + 7.0 * dir[0],
                apex[1] + 7.0 * dir[1],
                apex[2] + 7.0 * dir[2],
                0.0,
                0.0,
                0.0
            ];
            if angle > half + 1e-9 {
                outside += 1;
                assert!(!p.contains(&x, 0.0).unwrap(), "angle {angle}");
            }
        }
        assert!(outside > 9_000);
    }

    #[test]
    fn pyramid_through_origin_is_homogeneous() {
        let p = pyramid_obstacle([0.0; 3], [1.0, 0.0, 0.0], 0.5, 9, 6).unwrap();
        assert!(p.offsets().iter().all(|v| *v == 0.0));
        assert!(p.normals().columns(3, 3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pyramid_input_errors() {
        assert!(pyramid_obstacle([0.0; 3], [0.0; 3], 0.5, 9, 6).is_err());
        assert!(pyramid_obstacle([0.0; 3], [1.0, 0.0, 0.0], 1.6, 9, 6).is_err());
        assert!(pyramid_obstacle([0.0; 3], [1.0, 0.0, 0.0], 0.5, 2, 6).is_err());
    }

    #[test]
    fn axis_bounds_and_diameter() {
        let b = Polytope::axis_box(&[-1.0, 0.0], &[2.0, 4.0]).unwrap();
        let (lo, hi) = b.axis_bounds().unwrap();
        assert_eq!(lo, alloc::vec![-1.0, 0.0]);
        assert_eq!(hi, alloc::vec![2.0, 4.0]);
        assert_eq!(b.bounding_diameter().unwrap(), 5.0);
        let half = b.with_row(&[1.0, 1.0], 1.0).unwrap();
        assert_eq!(half.bounding_diameter().unwrap(), 5.0);
    }
}
