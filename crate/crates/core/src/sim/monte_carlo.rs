use alloc::vec::Vec;

use super::{simulate, steady_factor, ErrorInit, Route};
use crate::dynamics::{ClosedLoop, POSITION_DIM};
use crate::error::{Error, Result};
use crate::geometry::RegionSet;
use crate::numerics::RngStream;
use crate::{Matrix, Vector};

/// Runs per accumulator. Fixed so summaries do not depend on how chunks are scheduled.
pub const CHUNK_RUNS: usize = 25;
/// Histogram bins for `|e_i| / σ_i`.
pub const BAND_BINS: usize = 8000;
/// Upper edge of the histogram in units of `σ_i`.
pub const BAND_RANGE: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub n_runs: usize,
    pub steps: usize,
    pub seed: u64,
    pub init: ErrorInit,
    pub x_hat0: Vector,
    /// Reject estimates outside the first leg's set. Disable only for counterexamples.
    pub require_admissible_start: bool,
}

/// Partial sums over a contiguous block of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloAccumulator {
    first_run: usize,
    runs: usize,
    steps: usize,
    box_ok: Vec<u32>,
    free_ok: Vec<u32>,
    region_ok: Vec<u32>,
    err_count: u64,
    err_sum: Vector,
    err_outer: Matrix,
    /// Per-step running mean and centred second moment of the position (Welford).
    pos_mean: Vec<[f64; POSITION_DIM]>,
    pos_m2: Vec<[f64; POSITION_DIM * POSITION_DIM]>,
    band: Vec<Vec<u64>>,
    arrivals: Vec<Option<usize>>,
    final_in_obstacle: usize,
}

impl MonteCarloAccumulator {
    fn new(first_run: usize, steps: usize, n_x: usize) -> Self {
        Self {
            first_run,
            runs: 0,
            steps,
            box_ok: alloc::vec![0; steps + 1],
            free_ok: alloc::vec![0; steps + 1],
            region_ok: alloc::vec![0; steps + 1],
            err_count: 0,
            err_sum: Vector::zeros(n_x),
            err_outer: Matrix::zeros(n_x, n_x),
            pos_mean: alloc::vec![[0.0; POSITION_DIM]; steps + 1],
            pos_m2: alloc::vec![[0.0; POSITION_DIM * POSITION_DIM]; steps + 1],
            band: alloc::vec![alloc::vec![0; BAND_BINS]; n_x],
            arrivals: Vec::new(),
            final_in_obstacle: 0,
        }
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    /// Appends a block that starts where this one ends.
    pub fn merge(&mut self, other: &MonteCarloAccumulator) -> Result<()> {
        if other.first_run != self.first_run + self.runs || other.steps != self.steps {
            return Err(Error::Input("Monte Carlo chunks must be merged in run order".into()));
        }
        let (na, nb) = (self.runs as f64, other.runs as f64);
        let n = na + nb;
        self.runs += other.runs;
        for k in 0..=self.steps {
            self.box_ok[k] += other.box_ok[k];
            self.free_ok[k] += other.free_ok[k];
            self.region_ok[k] += other.region_ok[k];
            if nb == 0.0 {
                continue;
            }
            let mut delta = [0.0; POSITION_DIM];
            for j in 0..POSITION_DIM {
                delta[j] = other.pos_mean[k][j] - self.pos_mean[k][j];
                self.pos_mean[k][j] += delta[j] * nb / n;
            }
            for a in 0..POSITION_DIM {
                for b in 0..POSITION_DIM {
                    self.pos_m2[k][a * POSITION_DIM + b] +=
                        other.pos_m2[k][a * POSITION_DIM + b] + delta[a] * delta[b] * na * nb / n;
                }
            }
        }
        self.err_count += other.err_count;
        self.err_sum += &other.err_sum;
        self.err_outer += &other.err_outer;
        for (mine, theirs) in self.band.iter_mut().zip(&other.band) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
        self.arrivals.extend_from_slice(&other.arrivals);
        self.final_in_obstacle += other.final_in_obstacle;
        Ok(())
    }

    pub fn summarize(&self) -> Result<MonteCarloSummary> {
        if self.runs == 0 {
            return Err(Error::Input("no Monte Carlo runs to summarize".into()));
        }
        let n = self.runs as f64;
        let freq = |v: &[u32]| v.iter().map(|&c| c as f64 / n).collect::<Vec<_>>();
        let m = self.err_count as f64;
        let error_covariance = if self.err_count >= 2 {
            let mean = &self.err_sum / m;
            (&self.err_outer - &mean * mean.transpose() * m) / (m - 1.0)
        } else {
            Matrix::zeros(self.err_sum.len(), self.err_sum.len())
        };
        let mut position_mean = Vec::with_capacity(self.steps + 1);
        let mut position_covariance = Vec::with_capacity(self.steps + 1);
        for k in 0..=self.steps {
            let mean = Vector::from_row_slice(&self.pos_mean[k]);
            let cov = if self.runs >= 2 {
                Matrix::from_row_slice(POSITION_DIM, POSITION_DIM, &self.pos_m2[k]) / (n - 1.0)
            } else {
                Matrix::zeros(POSITION_DIM, POSITION_DIM)
            };
            position_mean.push(mean);
            position_covariance.push(cov);
        }
        Ok(MonteCarloSummary {
            n_runs: self.runs,
            steps: self.steps,
            box_frequency: freq(&self.box_ok),
            free_frequency: freq(&self.free_ok),
            region_frequency: freq(&self.region_ok),
            error_covariance,
            error_samples: self.err_count,
            position_mean,
            position_covariance,
            band: self.band.clone(),
            arrivals: ArrivalStats::from_runs(self.arrivals.clone()),
            final_in_obstacle: self.final_in_obstacle,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalStats {
    pub per_run: Vec<Option<usize>>,
    pub arrived: usize,
    pub first: Option<usize>,
    pub last: Option<usize>,
    pub mean: Option<f64>,
}

impl ArrivalStats {
    fn from_runs(per_run: Vec<Option<usize>>) -> Self {
        let times: Vec<usize> = per_run.iter().flatten().copied().collect();
        Self {
            arrived: times.len(),
            first: times.iter().min().copied(),
            last: times.iter().max().copied(),
            mean: (!times.is_empty()).then(|| times.iter().sum::<usize>() as f64 / times.len() as f64),
            per_run,
        }
    }

    pub fn all_arrived(&self) -> bool {
        self.arrived == self.per_run.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub n_runs: usize,
    pub steps: usize,
    /// Fraction of runs inside the outer box at each step.
    pub box_frequency: Vec<f64>,
    /// Fraction inside the box and outside the obstacle.
    pub free_frequency: Vec<f64>,
    /// Fraction inside the region certifying the active leg.
    pub region_frequency: Vec<f64>,
    /// Unbiased covariance of `e_k` pooled over runs and steps.
    pub error_covariance: Matrix,
    pub error_samples: u64,
    pub position_mean: Vec<Vector>,
    pub position_covariance: Vec<Matrix>,
    band: Vec<Vec<u64>>,
    pub arrivals: ArrivalStats,
    pub final_in_obstacle: usize,
}

fn minimum(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &x)| if x < acc.1 { (k, x) } else { acc })
}

impl MonteCarloSummary {
    /// Step and value of the lowest box frequency.
    pub fn min_box_frequency(&self) -> (usize, f64) {
        minimum(&self.box_frequency)
    }

    pub fn min_free_frequency(&self) -> (usize, f64) {
        minimum(&self.free_frequency)
    }

    pub fn min_region_frequency(&self) -> (usize, f64) {
        minimum(&self.region_frequency)
    }

    /// Empirical `β`-quantile of `|e_axis| / √P∞_axis,axis`, resolved to one histogram bin.
    pub fn error_band(&self, axis: usize, beta: f64) -> Option<f64> {
        let hist = self.band.get(axis)?;
        let total: u64 = hist.iter().sum();
        if total == 0 || !(beta > 0.0 && beta < 1.0) {
            return None;
        }
        let target = beta * total as f64;
        let mut seen = 0u64;
        for (b, &c) in hist.iter().enumerate() {
            seen += c;
            if seen as f64 >= target {
                return Some((b as f64 + 1.0) * BAND_RANGE / BAND_BINS as f64);
            }
        }
        Some(BAND_RANGE)
    }
}

/// Runs `chunk·25 … chunk·25 + 24` (clipped to `n_runs`), run `i` on substream `i` of the seed.
pub fn run_chunk(
    cl: &ClosedLoop,
    regions: &RegionSet,
    route: &Route,
    config: &MonteCarloConfig,
    chunk: usize,
) -> Result<MonteCarloAccumulator> {
    let first = chunk * CHUNK_RUNS;
    let count = CHUNK_RUNS.min(config.n_runs.saturating_sub(first));
    let n_x = cl.n_x();
    let mut acc = MonteCarloAccumulator::new(first, config.steps, n_x);
    let factor = steady_factor(cl)?;
    let sigma: Vec<f64> = (0..n_x).map(|i| libm::sqrt(cl.p_inf()[(i, i)])).collect();
    let scale = BAND_BINS as f64 / BAND_RANGE;
    for mut stream in RngStream::substream_range(config.seed, first, count) {
        let mut last_free = true;
        let arrival = simulate(
            cl,
            regions,
            route,
            &config.x_hat0,
            &config.init,
            &factor,
            config.steps,
            &mut stream,
            |s, _, sat| {
                let k = s.k;
                acc.box_ok[k] += sat.box_ok as u32;
                acc.free_ok[k] += (sat.box_ok && sat.obstacle_ok) as u32;
                acc.region_ok[k] += sat.region_ok as u32;
                let e = s.error();
                acc.err_count += 1;
                acc.err_sum += &e;
                acc.err_outer.ger(1.0, &e, &e, 1.0);
                for i in 0..n_x {
                    if sigma[i] > 0.0 {
                        let bin = ((libm::fabs(e[i]) / sigma[i]) * scale) as usize;
                        acc.band[i][bin.min(BAND_BINS - 1)] += 1;
                    }
                }
                let seen = (acc.runs + 1) as f64;
                let mut before = [0.0; POSITION_DIM];
                for a in 0..POSITION_DIM {
                    before[a] = s.x[a] - acc.pos_mean[k][a];
                    acc.pos_mean[k][a] += before[a] / seen;
                }
                for a in 0..POSITION_DIM {
                    for b in 0..POSITION_DIM {
                        acc.pos_m2[k][a * POSITION_DIM + b] += before[a] * (s.x[b] - acc.pos_mean[k][b]);
                    }
                }
                last_free = sat.obstacle_ok;
            },
        )?;
        acc.runs += 1;
        acc.arrivals.push(arrival);
        acc.final_in_obstacle += (!last_free) as usize;
    }
    Ok(acc)
}

/// Sequential harness; chunk results are merged in run order.
pub fn monte_carlo(
    cl: &ClosedLoop,
    regions: &RegionSet,
    route: &Route,
    config: &MonteCarloConfig,
) -> Result<MonteCarloSummary> {
    check_config(route, config)?;
    let chunks = config.n_runs.div_ceil(CHUNK_RUNS);
    let mut acc = MonteCarloAccumulator::new(0, config.steps, cl.n_x());
    for c in 0..chunks {
        acc.merge(&run_chunk(cl, regions, route, config, c)?)?;
    }
    acc.summarize()
}

/// Validation shared with parallel drivers.
pub fn check_config(route: &Route, config: &MonteCarloConfig) -> Result<()> {
    if config.n_runs == 0 {
        return Err(Error::Input("n_runs must be at least 1".into()));
    }
    if config.require_admissible_start && !route.admits_start(&config.x_hat0)? {
        return Err(Error::Start(
            "initial estimate is outside the first leg's admissible set".into(),
        ));
    }
    Ok(())
}

/// Empty accumulator to merge chunk results into.
pub fn empty_accumulator(cl: &ClosedLoop, config: &MonteCarloConfig) -> MonteCarloAccumulator {
    MonteCarloAccumulator::new(0, config.steps, cl.n_x())
}
