//! Scenario file: every physical and numerical parameter of a planning run.

use std::path::Path;

use cwhnet_core::admissible::AdmissibleOptions;
use cwhnet_core::dynamics::{cwh_system, ClosedLoop, CWH_STATE_DIM, POSITION_DIM};
use cwhnet_core::geometry::{decompose_free_space, pyramid_obstacle, Polytope, RegionSet};
use cwhnet_core::net::GridSpec;
use cwhnet_core::synthesis::{synthesize, GainWeights};
use cwhnet_core::{Matrix, Vector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub orbital_rate_rad_per_s: f64,
    pub dt_seconds: f64,
    pub gain_weights: WeightDiagonals,
    pub alpha: f64,
    pub beta: f64,
    pub outer_box: OuterBox,
    pub obstacle: ObstacleSpec,
    pub grid: GridAxes,
    pub start_m: [f64; 3],
    pub goal_m: [f64; 3],
    pub n_runs: usize,
    pub steps_cap: usize,
    pub seed: u64,
}

/// Diagonals of `Q_K` (6), `R_K` (3), `Q_L` (6) and `R_L` (3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightDiagonals {
    pub q_k: Vec<f64>,
    pub r_k: Vec<f64>,
    pub q_l: Vec<f64>,
    pub r_l: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterBox {
    pub position_min_m: [f64; 3],
    pub position_max_m: [f64; 3],
    pub velocity_min_m_per_s: [f64; 3],
    pub velocity_max_m_per_s: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    None,
    /// Polyhedral cone inscribed in a circular cone.
    Pyramid {
        apex_m: [f64; 3],
        axis: [f64; 3],
        half_angle_rad: f64,
        faces: usize,
    },
    /// `Q p ≤ q` on positions, one row per facet.
    Polytope {
        #[serde(rename = "Q")]
        q_rows: Vec<[f64; 3]>,
        q: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub x1_m: Vec<f64>,
    pub x2_m: Vec<f64>,
    pub x3_m: Vec<f64>,
}

fn positive_finite(name: &str, v: f64) -> AppResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(AppError::Invalid(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn diagonal(name: &str, v: &[f64], len: usize, strictly_positive: bool) -> AppResult<Matrix> {
    if v.len() != len {
        return Err(AppError::Invalid(format!(
            "{name} needs {len} entries, got {}",
            v.len()
        )));
    }
    if v.iter()
        .any(|d| !d.is_finite() || *d < 0.0 || (strictly_positive && *d == 0.0))
    {
        return Err(AppError::Invalid(format!(
            "{name} entries must be finite and {}",
            if strictly_positive { "positive" } else { "nonnegative" }
        )));
    }
    Ok(Matrix::from_diagonal(&Vector::from_column_slice(v)))
}

impl Scenario {
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> AppResult<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| AppError::Invalid(format!("scenario: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| AppError::Io(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the compact serialization, hex encoded.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(compact))
    }

    pub fn validate(&self) -> AppResult<()> {
        positive_finite("orbital_rate_rad_per_s", self.orbital_rate_rad_per_s)?;
        positive_finite("dt_seconds", self.dt_seconds)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AppError::Invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(AppError::Invalid(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        self.weights()?;
        let b = &self.outer_box;
        for j in 0..3 {
            if !(b.position_min_m[j] < b.position_max_m[j]) || !(b.velocity_min_m_per_s[j] < b.velocity_max_m_per_s[j])
            {
                return Err(AppError::Invalid(format!("outer_box axis {} has min ≥ max", j + 1)));
            }
        }
        let all_bounds = b
            .position_min_m
            .iter()
            .chain(&b.position_max_m)
            .chain(&b.velocity_min_m_per_s)
            .chain(&b.velocity_max_m_per_s);
        if all_bounds.clone().any(|v| !v.is_finite()) {
            return Err(AppError::Invalid("outer_box bounds must be finite".into()));
        }
        if [&self.grid.x1_m, &self.grid.x2_m, &self.grid.x3_m]
            .iter()
            .any(|a| a.is_empty())
        {
            return Err(AppError::Invalid("grid axes must be non-empty".into()));
        }
        if self
            .grid
            .x1_m
            .iter()
            .chain(&self.grid.x2_m)
            .chain(&self.grid.x3_m)
            .chain(&self.start_m)
            .chain(&self.goal_m)
            .any(|v| !v.is_finite())
        {
            return Err(AppError::Invalid(
                "grid, start and goal coordinates must be finite".into(),
            ));
        }
        if self.n_runs == 0 {
            return Err(AppError::Invalid("n_runs must be at least 1".into()));
        }
        if self.steps_cap == 0 {
            return Err(AppError::Invalid("steps_cap must be at least 1".into()));
        }
        self.obstacle()?;
        Ok(())
    }

    pub fn weights(&self) -> AppResult<GainWeights> {
        let w = &self.gain_weights;
        Ok(GainWeights {
            q_k: diagonal("gain_weights.q_k", &w.q_k, CWH_STATE_DIM, false)?,
            r_k: diagonal("gain_weights.r_k", &w.r_k, POSITION_DIM, true)?,
            q_l: diagonal("gain_weights.q_l", &w.q_l, CWH_STATE_DIM, false)?,
            r_l: diagonal("gain_weights.r_l", &w.r_l, POSITION_DIM, true)?,
        })
    }

    pub fn closed_loop(&self) -> AppResult<ClosedLoop> {
        let sys = cwh_system(self.orbital_rate_rad_per_s, self.dt_seconds)?;
        Ok(synthesize(sys, &self.weights()?)?)
    }

    pub fn outer(&self) -> AppResult<Polytope> {
        let b = &self.outer_box;
        let lower: Vec<f64> = b
            .position_min_m
            .iter()
            .chain(&b.velocity_min_m_per_s)
            .copied()
            .collect();
        let upper: Vec<f64> = b
            .position_max_m
            .iter()
            .chain(&b.velocity_max_m_per_s)
            .copied()
            .collect();
        Ok(Polytope::axis_box(&lower, &upper)?)
    }

    pub fn obstacle(&self) -> AppResult<Option<Polytope>> {
        match &self.obstacle {
            ObstacleSpec::None => Ok(None),
            ObstacleSpec::Pyramid {
                apex_m,
                axis,
                half_angle_rad,
                faces,
            } => Ok(Some(pyramid_obstacle(
                *apex_m,
                *axis,
                *half_angle_rad,
                *faces,
                CWH_STATE_DIM,
            )?)),
            ObstacleSpec::Polytope { q_rows, q } => {
                if q_rows.len() != q.len() {
                    return Err(AppError::Invalid(format!(
                        "obstacle Q has {} rows but q has {}",
                        q_rows.len(),
                        q.len()
                    )));
                }
                let mut h = Matrix::zeros(q.len(), CWH_STATE_DIM);
                for (i, row) in q_rows.iter().enumerate() {
                    for j in 0..POSITION_DIM {
                        h[(i, j)] = row[j];
                    }
                }
                Ok(Some(Polytope::new(h, Vector::from_column_slice(q))?))
            }
        }
    }

    pub fn regions(&self) -> AppResult<RegionSet> {
        Ok(decompose_free_space(self.outer()?, self.obstacle()?)?)
    }

    /// Grid with the start and goal appended as extra nodes.
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            axes: [self.grid.x1_m.clone(), self.grid.x2_m.clone(), self.grid.x3_m.clone()],
            extra: vec![self.start_m, self.goal_m],
        }
    }

    pub fn admissible_options(&self) -> AdmissibleOptions {
        AdmissibleOptions::new(self.alpha)
    }

    /// Total risk at or above one half leaves little of the guarantee.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.alpha >= 0.5 {
            out.push(format!(
                "alpha = {} ≥ 0.5: the tightening margins are small or non-positive and the chance guarantee degenerates",
                self.alpha
            ));
        }
        out
    }

    /// Reference scenario: 9-face pyramid at the origin pointing along +x₁.
    pub fn reference() -> Self {
        Self {
            orbital_rate_rad_per_s: 0.0013,
            dt_seconds: 10.0,
            gain_weights: WeightDiagonals {
                q_k: vec![1e-7; 6],
                r_k: vec![10.0; 3],
                q_l: vec![1e-7; 6],
                r_l: vec![1.0; 3],
            },
            alpha: 0.1,
            beta: 0.9,
            outer_box: OuterBox {
                position_min_m: [-150.0, -150.0, -100.0],
                position_max_m: [200.0, 150.0, 100.0],
                velocity_min_m_per_s: [-1.0; 3],
                velocity_max_m_per_s: [1.0; 3],
            },
            obstacle: ObstacleSpec::Pyramid {
                apex_m: [0.0; 3],
                axis: [1.0, 0.0, 0.0],
                half_angle_rad: std::f64::consts::FRAC_PI_6,
                faces: 9,
            },
            grid: GridAxes {
                x1_m: vec![-100.0, -50.0, 0.0, 50.0, 100.0, 150.0],
                x2_m: vec![-100.0, -50.0, 0.0, 50.0, 100.0],
                x3_m: vec![-50.0, 0.0, 50.0],
            },
            start_m: [100.0, -100.0, 0.0],
            goal_m: [100.0, 100.0, 0.0],
            n_runs: 1000,
            steps_cap: 5000,
            seed: 20_240_601,
        }
    }
}
