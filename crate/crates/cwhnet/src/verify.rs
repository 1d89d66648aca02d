//! Self-check suite behind `cwhnet verify`.

use cwhnet_core::admissible::{pointwise_chance_oracle, AdmissibleOptions, AdmissibleSet, AdmissibleTemplate};
use cwhnet_core::dynamics::ClosedLoop;
use cwhnet_core::geometry::RegionSet;
use cwhnet_core::numerics::RngStream;
use cwhnet_core::sim::MonteCarloSummary;
use cwhnet_core::{Matrix, Vector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::AppResult;
use crate::output::Metadata;

/// Samples closer than this to a row boundary are skipped by the oracle check.
pub const BOUNDARY_SLACK: f64 = 1e-9;
pub const COVARIANCE_TOL: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub metadata: Metadata,
    pub warnings: Vec<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn new(metadata: Metadata, warnings: Vec<String>, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self {
            metadata,
            warnings,
            checks,
            passed,
        }
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// `‖P̂ − P∞‖_F / ‖P∞‖_F ≤ tol`.
pub fn covariance_match(p_hat: &Matrix, p_inf: &Matrix, tol: f64) -> Check {
    let rel = if p_hat.shape() == p_inf.shape() {
        (p_hat - p_inf).norm() / p_inf.norm()
    } else {
        f64::INFINITY
    };
    Check {
        name: "covariance_match".into(),
        passed: rel <= tol,
        value: rel,
        threshold: tol,
        detail: "relative Frobenius error of the pooled estimation-error covariance".into(),
    }
}

/// Uniform shift with position components in `±pos` and velocities in `±vel`.
pub fn random_shift(rng: &mut RngStream, n: usize, pos: f64, vel: f64) -> Vector {
    Vector::from_fn(n, |i, _| (2.0 * rng.uniform() - 1.0) * if i < 3 { pos } else { vel })
}

fn min_slack(set: &AdmissibleSet, x: &Vector) -> f64 {
    set.rows()
        .map(|row| (row.offset - row.normal.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Set membership against a direct Gaussian propagation, per sampled shift.
/// Returns `(disagreements, compared)`.
pub fn oracle_disagreements(
    cl: &ClosedLoop,
    regions: &RegionSet,
    set: &AdmissibleSet,
    alpha: f64,
    samples: usize,
    seed: u64,
    scale: f64,
) -> AppResult<(usize, usize)> {
    let region = &regions.regions()[set.region_id()];
    let mut rng = RngStream::new(seed);
    let shifts: Vec<Vector> = (0..samples)
        .map(|_| random_shift(&mut rng, cl.n_x(), scale, 0.5))
        .collect();
    let verdicts = shifts
        .par_iter()
        .filter(|x| min_slack(set, x) >= BOUNDARY_SLACK)
        .map(|x| -> AppResult<bool> {
            let a = set.contains(x, false)?;
            let b = pointwise_chance_oracle(cl, region, set.set_point(), x, set.horizon(), alpha)?;
            Ok(a != b)
        })
        .collect::<AppResult<Vec<_>>>()?;
    Ok((verdicts.iter().filter(|d| **d).count(), verdicts.len()))
}

pub fn oracle_equivalence(
    cl: &ClosedLoop,
    regions: &RegionSet,
    sets: &[&AdmissibleSet],
    alpha: f64,
    samples: usize,
    seed: u64,
) -> AppResult<Check> {
    let mut bad = 0;
    let mut total = 0;
    for (k, set) in sets.iter().enumerate() {
        let (d, n) = oracle_disagreements(cl, regions, set, alpha, samples, seed.wrapping_add(k as u64), 120.0)?;
        bad += d;
        total += n;
    }
    Ok(Check {
        name: "oracle_equivalence".into(),
        passed: bad == 0 && total > 0,
        value: bad as f64,
        threshold: 0.0,
        detail: format!("{bad} disagreements over {total} shifts in {} sets", sets.len()),
    })
}

/// Rebuilds each set with twice its horizon and rechecks `accepted` sampled members.
/// Returns the number of changed verdicts, or `None` if too few members were found.
pub fn horizon_doubling_changes(
    cl: &ClosedLoop,
    regions: &RegionSet,
    set: &AdmissibleSet,
    options: &AdmissibleOptions,
    accepted: usize,
    seed: u64,
) -> AppResult<Option<usize>> {
    let long_opts = AdmissibleOptions {
        horizon_override: Some(2 * set.horizon().max(1)),
        ..options.clone()
    };
    let region = &regions.regions()[set.region_id()];
    let long = AdmissibleTemplate::new(cl, region, &long_opts)?.build(set.set_point())?;
    let mut rng = RngStream::new(seed);
    let mut found = 0;
    let mut changed = 0;
    for _ in 0..1_000_000 {
        if found == accepted {
            return Ok(Some(changed));
        }
        let x = random_shift(&mut rng, cl.n_x(), 100.0, 0.5);
        if set.contains(&x, false)? {
            found += 1;
            changed += usize::from(!long.contains(&x, false)?);
        }
    }
    Ok(None)
}

pub fn finite_determination(
    cl: &ClosedLoop,
    regions: &RegionSet,
    sets: &[&AdmissibleSet],
    options: &AdmissibleOptions,
    accepted: usize,
    seed: u64,
) -> AppResult<Check> {
    let mut changed = 0;
    let mut starved = 0;
    for (k, set) in sets.iter().enumerate() {
        match horizon_doubling_changes(cl, regions, set, options, accepted, seed.wrapping_add(k as u64))? {
            Some(c) => changed += c,
            None => starved += 1,
        }
    }
    Ok(Check {
        name: "finite_determination".into(),
        passed: changed == 0 && starved == 0 && !sets.is_empty(),
        value: changed as f64,
        threshold: 0.0,
        detail: format!(
            "{changed} verdicts changed over {} sets with {accepted} members each; {starved} sets without enough members",
            sets.len()
        ),
    })
}

/// Three-sigma binomial allowance on a frequency target `p` over `n` runs.
pub fn binomial_allowance(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

pub fn coverage(summary: &MonteCarloSummary, alpha: f64) -> Vec<Check> {
    let target = 1.0 - alpha;
    let bound = target - binomial_allowance(target, summary.n_runs);
    let (kb, fb) = summary.min_box_frequency();
    let (kf, ff) = summary.min_free_frequency();
    let arr = &summary.arrivals;
    vec![
        Check {
            name: "box_coverage".into(),
            passed: fb >= bound,
            value: fb,
            threshold: bound,
            detail: format!("lowest per-step outer-box frequency at step {kb}"),
        },
        Check {
            name: "free_space_coverage".into(),
            passed: ff >= bound,
            value: ff,
            threshold: bound,
            detail: format!("lowest per-step box-and-outside-obstacle frequency at step {kf}"),
        },
        Check {
            name: "final_outside_obstacle".into(),
            passed: summary.final_in_obstacle == 0,
            value: summary.final_in_obstacle as f64,
            threshold: 0.0,
            detail: "runs ending inside the obstacle".into(),
        },
        Check {
            name: "arrival".into(),
            passed: arr.all_arrived(),
            value: arr.arrived as f64,
            threshold: summary.n_runs as f64,
            detail: format!("runs reaching the goal within {} steps", summary.steps),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_covariance_fails() {
        let p = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!(covariance_match(&(&p * 1.05), &p, COVARIANCE_TOL).passed);
        let mut bad = p.clone();
        bad[(2, 2)] *= 2.0;
        let c = covariance_match(&p, &bad, COVARIANCE_TOL);
        assert!(!c.passed);
        assert!(!covariance_match(&Matrix::zeros(2, 2), &p, COVARIANCE_TOL).passed);
    }

    #[test]
    fn allowance_matches_three_sigma() {
        assert!((binomial_allowance(0.9, 1000) - 0.028_460).abs() < 1e-6);
    }
}
