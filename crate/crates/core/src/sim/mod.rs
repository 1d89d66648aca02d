//! Stochastic closed-loop simulation: plant, Luenberger observer, set-point
//! supervisor, Monte Carlo aggregation and probability tubes.

mod monte_carlo;
mod tube;

pub use monte_carlo::{
    check_config, empty_accumulator, monte_carlo, run_chunk, ArrivalStats, MonteCarloAccumulator, MonteCarloConfig,
    MonteCarloSummary, BAND_BINS, BAND_RANGE, CHUNK_RUNS,
};
pub use tube::{beta_tube_analytic, beta_tube_empirical, empirical_error_covariance, TubeEllipsoid, TubeMode};

use alloc::vec::Vec;

use crate::admissible::AdmissibleSet;
use crate::dynamics::ClosedLoop;
use crate::error::{dim_err, Error, Result};
use crate::geometry::{Polytope, RegionSet};
use crate::net::{switching_ready, PlanPath, VirtualNet};
use crate::numerics::{psd_factor, RngStream};
use crate::{Matrix, Vector};

/// Initial estimation error.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorInit {
    /// `e₀ ~ N(0, P∞)`: the observer has been running long enough to be stationary.
    SteadyState,
    /// `e₀ = 0`. Diagnostic only; the chance guarantee assumes a stationary observer.
    Cold,
    Fixed(Vector),
}

impl ErrorInit {
    pub fn label(&self) -> &'static str {
        match self {
            ErrorInit::SteadyState => "steady-state",
            ErrorInit::Cold => "cold",
            ErrorInit::Fixed(_) => "fixed",
        }
    }

    /// Whether the initial condition matches the stationary-observer hypothesis.
    pub fn is_guaranteed(&self) -> bool {
        matches!(self, ErrorInit::SteadyState)
    }
}

/// Fixed sequence of set-points with the sets that govern each leg.
#[derive(Debug, Clone)]
pub struct Route {
    nodes: Vec<usize>,
    setpoints: Vec<Vector>,
    equilibria: Vec<Vector>,
    /// `leg_sets[k]` is the certificate set while `setpoints[k]` is active.
    leg_sets: Vec<AdmissibleSet>,
    leg_regions: Vec<usize>,
}

impl Route {
    pub fn new(
        cl: &ClosedLoop,
        nodes: Vec<usize>,
        setpoints: Vec<Vector>,
        leg_sets: Vec<AdmissibleSet>,
    ) -> Result<Self> {
        if setpoints.is_empty() || setpoints.len() != leg_sets.len() || nodes.len() != setpoints.len() {
            return Err(Error::Input(
                "route needs one node index and one set per set-point".into(),
            ));
        }
        let equilibria = setpoints
            .iter()
            .map(|r| cl.equilibrium_state(r))
            .collect::<Result<Vec<_>>>()?;
        let leg_regions = leg_sets.iter().map(AdmissibleSet::region_id).collect();
        Ok(Self {
            nodes,
            setpoints,
            equilibria,
            leg_sets,
            leg_regions,
        })
    }

    /// Route along a planned path. The first leg uses the lowest region at the start
    /// node whose set admits `x̂₀`; later legs use the hop certificates.
    pub fn from_plan(cl: &ClosedLoop, net: &VirtualNet, path: &PlanPath, x_hat0: &Vector) -> Result<Self> {
        let start = *path.nodes.first().ok_or_else(|| Error::Input("empty path".into()))?;
        if path.hop_regions.len() + 1 != path.nodes.len() {
            return Err(Error::Input("path hop regions do not match its nodes".into()));
        }
        let first = net.start_region(start, x_hat0)?.ok_or_else(|| {
            Error::Start(alloc::format!(
                "initial estimate is not in any admissible set of node {start}"
            ))
        })?;
        let mut sets = alloc::vec![net.set(start, first).clone()];
        for (k, &s) in path.hop_regions.iter().enumerate() {
            sets.push(net.set(path.nodes[k + 1], s).clone());
        }
        let setpoints = path.nodes.iter().map(|&k| net.nodes()[k].clone()).collect();
        Self::new(cl, path.nodes.clone(), setpoints, sets)
    }

    pub fn len(&self) -> usize {
        self.setpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.setpoints.is_empty()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn setpoints(&self) -> &[Vector] {
        &self.setpoints
    }

    pub fn leg_set(&self, k: usize) -> &AdmissibleSet {
        &self.leg_sets[k]
    }

    pub fn leg_region(&self, k: usize) -> usize {
        self.leg_regions[k]
    }

    /// Proposition-1 hypothesis for the first leg.
    pub fn admits_start(&self, x_hat0: &Vector) -> Result<bool> {
        self.leg_sets[0].contains(&(x_hat0 - &self.equilibria[0]), false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub k: usize,
    pub x: Vector,
    pub x_hat: Vector,
    /// Index of the active set-point in the route.
    pub cursor: usize,
}

impl SimState {
    pub fn error(&self) -> Vector {
        &self.x - &self.x_hat
    }
}

/// `u = Kx̂ + Gr`.
pub fn control(cl: &ClosedLoop, x_hat: &Vector, r: &Vector) -> Vector {
    cl.k() * x_hat + cl.g() * r
}

/// One step of plant, observer and supervisor. Returns the next state and the applied input.
pub fn step(cl: &ClosedLoop, route: &Route, state: &SimState, w: &Vector, v: &Vector) -> Result<(SimState, Vector)> {
    let sys = cl.sys();
    if w.len() != sys.n_w() || v.len() != sys.n_v() {
        return Err(dim_err("sim::step noise", (sys.n_w(), sys.n_v()), (w.len(), v.len())));
    }
    let r = &route.setpoints[state.cursor];
    let u = control(cl, &state.x_hat, r);
    let bu = &sys.b * &u;
    let y = &sys.c * &state.x + &sys.f * v;
    let x = &sys.a * &state.x + &bu + &sys.gamma * w;
    let x_hat = &sys.a * &state.x_hat + &bu + cl.l() * (&sys.c * &state.x_hat - y);
    let mut cursor = state.cursor;
    if cursor + 1 < route.len()
        && switching_ready(cl, &route.leg_sets[cursor + 1], &x_hat, &route.setpoints[cursor + 1])?
    {
        cursor += 1;
    }
    Ok((
        SimState {
            k: state.k + 1,
            x,
            x_hat,
            cursor,
        },
        u,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub x: Vector,
    pub x_hat: Vector,
    pub u: Vector,
    pub cursor: usize,
    pub region: usize,
    pub box_ok: bool,
    pub obstacle_ok: bool,
    pub region_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// First step at which the final set-point became active.
    pub arrival: Option<usize>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }
}

/// Constraint bookkeeping on the true state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Satisfaction {
    pub box_ok: bool,
    pub obstacle_ok: bool,
    pub region_ok: bool,
}

pub fn satisfaction(regions: &RegionSet, region: &Polytope, x: &Vector) -> Satisfaction {
    Satisfaction {
        box_ok: regions.outer().row_satisfaction(x).all(|ok| ok),
        obstacle_ok: regions.outside_obstacle(x),
        region_ok: region.row_satisfaction(x).all(|ok| ok),
    }
}

pub(crate) fn draw_initial_error(
    cl: &ClosedLoop,
    init: &ErrorInit,
    p_inf_factor: &Matrix,
    stream: &mut RngStream,
) -> Result<Vector> {
    let n = cl.n_x();
    match init {
        ErrorInit::SteadyState => {
            let mut z = Vector::zeros(n);
            stream.fill_standard_normal(z.as_mut_slice());
            Ok(p_inf_factor * z)
        }
        ErrorInit::Cold => Ok(Vector::zeros(n)),
        ErrorInit::Fixed(e) if e.len() == n => Ok(e.clone()),
        ErrorInit::Fixed(e) => Err(dim_err("initial error", (n, 1), (e.len(), 1))),
    }
}

pub(crate) fn steady_factor(cl: &ClosedLoop) -> Result<Matrix> {
    psd_factor(cl.p_inf(), 1e-12)
}

/// Simulates `steps` steps from estimate `x_hat0`; the true state is `x_hat0 + e₀`.
/// Draw order: `e₀` (steady-state mode only), then `w_k`, `v_k` for each step.
pub fn run_episode(
    cl: &ClosedLoop,
    regions: &RegionSet,
    route: &Route,
    x_hat0: &Vector,
    init: &ErrorInit,
    steps: usize,
    stream: &mut RngStream,
) -> Result<Trace> {
    if !route.admits_start(x_hat0)? {
        return Err(Error::Start(
            "initial estimate is outside the first leg's admissible set".into(),
        ));
    }
    let factor = steady_factor(cl)?;
    let mut trace = Trace {
        records: Vec::with_capacity(steps + 1),
        arrival: None,
    };
    simulate(
        cl,
        regions,
        route,
        x_hat0,
        init,
        &factor,
        steps,
        stream,
        |state, u, sat| {
            trace.records.push(TraceRecord {
                k: state.k,
                x: state.x.clone(),
                x_hat: state.x_hat.clone(),
                u: u.clone(),
                cursor: state.cursor,
                region: route.leg_regions[state.cursor],
                box_ok: sat.box_ok,
                obstacle_ok: sat.obstacle_ok,
                region_ok: sat.region_ok,
            });
        },
    )
    .map(|arrival| {
        trace.arrival = arrival;
        trace
    })
}

/// Core loop shared by traces and Monte Carlo. Calls `visit` for `k = 0…steps` and
/// returns the arrival step.
#[allow(clippy::too_many_arguments)]
pub(crate) fn simulate(
    cl: &ClosedLoop,
    regions: &RegionSet,
    route: &Route,
    x_hat0: &Vector,
    init: &ErrorInit,
    factor: &Matrix,
    steps: usize,
    stream: &mut RngStream,
    mut visit: impl FnMut(&SimState, &Vector, Satisfaction),
) -> Result<Option<usize>> {
    let sys = cl.sys();
    let e0 = draw_initial_error(cl, init, factor, stream)?;
    let mut state = SimState {
        k: 0,
        x: x_hat0 + e0,
        x_hat: x_hat0.clone(),
        cursor: 0,
    };
    let last = route.len() - 1;
    let mut arrival = (last == 0).then_some(0);
    let mut w = Vector::zeros(sys.n_w());
    let mut v = Vector::zeros(sys.n_v());
    for k in 0..=steps {
        let region = &regions.regions()[route.leg_regions[state.cursor]];
        let sat = satisfaction(regions, region, &state.x);
        if k == steps {
            visit(&state, &control(cl, &state.x_hat, &route.setpoints[state.cursor]), sat);
            break;
        }
        stream.fill_standard_normal(w.as_mut_slice());
        stream.fill_standard_normal(v.as_mut_slice());
        let (next, u) = step(cl, route, &state, &w, &v)?;
        visit(&state, &u, sat);
        state = next;
        if arrival.is_none() && state.cursor == last {
            arrival = Some(state.k);
        }
    }
    Ok(arrival)
}
