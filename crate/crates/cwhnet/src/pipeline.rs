//! Parallel drivers. Results are bit-identical to the sequential core routines
//! for any worker count: work is split by node or by fixed run chunk and merged
//! in index order.

use cwhnet_core::admissible::{AdmissibleOptions, AdmissibleSet, AdmissibleTemplate};
use cwhnet_core::dynamics::ClosedLoop;
use cwhnet_core::geometry::RegionSet;
use cwhnet_core::net::{
    build_nodes, certify_hop, edge_weight, node_sets, region_templates, shortest_path, Edge, PlanPath, VirtualNet,
};
use cwhnet_core::sim::{
    check_config, empty_accumulator, run_chunk, MonteCarloConfig, MonteCarloSummary, Route, CHUNK_RUNS,
};
use cwhnet_core::{Error as CoreError, Vector};
use log::info;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{AppError, AppResult};
use crate::scenario::Scenario;

/// `None` uses rayon's default (one worker per core).
pub fn thread_pool(workers: Option<usize>) -> AppResult<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(AppError::Invalid("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| AppError::Io(format!("thread pool: {e}")))
}

pub fn build_net(
    pool: &ThreadPool,
    cl: &ClosedLoop,
    regions: RegionSet,
    nodes: Vec<Vector>,
    options: &AdmissibleOptions,
) -> AppResult<VirtualNet> {
    let templates = region_templates(cl, &regions, options)?;
    pool.install(|| {
        let sets = nodes
            .par_iter()
            .map(|r| node_sets(&templates, r))
            .collect::<Result<Vec<_>, _>>()?;
        let equilibria = nodes
            .iter()
            .map(|r| cl.equilibrium_state(r))
            .collect::<Result<Vec<_>, _>>()?;
        let per_node: Vec<Vec<Edge>> = (0..nodes.len())
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                for j in 0..nodes.len() {
                    if i == j {
                        continue;
                    }
                    if let Some(region) = certify_hop(&sets[j], &equilibria[i], &equilibria[j])? {
                        out.push(Edge {
                            from: i,
                            to: j,
                            weight: edge_weight(cl, &nodes[i], &nodes[j])?,
                            region,
                        });
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, CoreError>>()?;
        let edges = per_node.into_iter().flatten().collect();
        Ok(VirtualNet::assemble(regions, nodes, equilibria, sets, edges)?)
    })
}

pub fn monte_carlo(
    pool: &ThreadPool,
    cl: &ClosedLoop,
    regions: &RegionSet,
    route: &Route,
    config: &MonteCarloConfig,
) -> AppResult<MonteCarloSummary> {
    check_config(route, config)?;
    let chunks = config.n_runs.div_ceil(CHUNK_RUNS);
    let parts = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| run_chunk(cl, regions, route, config, c))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut acc = empty_accumulator(cl, config);
    for p in &parts {
        acc.merge(p)?;
    }
    Ok(acc.summarize()?)
}

/// Everything a plan needs, derived from a scenario.
pub struct Setup {
    pub cl: ClosedLoop,
    pub regions: RegionSet,
    pub options: AdmissibleOptions,
    pub nodes: Vec<Vector>,
}

impl Setup {
    pub fn new(scenario: &Scenario) -> AppResult<Self> {
        let cl = scenario.closed_loop()?;
        let regions = scenario.regions()?;
        let nodes = build_nodes(&scenario.grid_spec(), &cl, &regions)?;
        info!("{} regions, {} nodes", regions.len(), nodes.len());
        Ok(Self {
            cl,
            regions,
            options: scenario.admissible_options(),
            nodes,
        })
    }

    pub fn node_index(&self, p: [f64; 3]) -> Option<usize> {
        self.nodes.iter().position(|r| r.iter().zip(&p).all(|(a, b)| a == b))
    }

    /// Indices of the start and goal nodes. A start inside the obstacle is an
    /// infeasible start; a goal inside it leaves nothing to plan to.
    pub fn endpoints(&self, scenario: &Scenario) -> AppResult<(usize, usize)> {
        let start = self
            .node_index(scenario.start_m)
            .ok_or_else(|| CoreError::Start(format!("start {:?} is not in free space", scenario.start_m)))?;
        let goal = self
            .node_index(scenario.goal_m)
            .ok_or_else(|| AppError::NoPath(format!("goal {:?} is not in free space", scenario.goal_m)))?;
        Ok((start, goal))
    }

    pub fn templates(&self) -> AppResult<Vec<AdmissibleTemplate>> {
        Ok(region_templates(&self.cl, &self.regions, &self.options)?)
    }
}

pub struct Planned {
    pub setup: Setup,
    pub net: VirtualNet,
    pub start: usize,
    pub goal: usize,
    pub path: PlanPath,
    pub x_hat0: Vector,
}

/// Builds the net and plans from the start node to the goal node. The initial
/// estimate is the start node's equilibrium.
pub fn plan(pool: &ThreadPool, scenario: &Scenario) -> AppResult<Planned> {
    let setup = Setup::new(scenario)?;
    let (start, goal) = setup.endpoints(scenario)?;
    let net = build_net(
        pool,
        &setup.cl,
        setup.regions.clone(),
        setup.nodes.clone(),
        &setup.options,
    )?;
    info!("{} edges", net.edges().len());
    let x_hat0 = net.equilibria()[start].clone();
    if net.start_region(start, &x_hat0)?.is_none() {
        return Err(CoreError::Start(format!(
            "no admissible set at start node {start} contains its equilibrium"
        ))
        .into());
    }
    let path = shortest_path(&net, start, goal)?;
    Ok(Planned {
        setup,
        net,
        start,
        goal,
        path,
        x_hat0,
    })
}

/// Route for a stored path, rebuilding only the sets the path uses.
pub fn route_for_path(setup: &Setup, path_nodes: &[usize], hop_regions: &[usize], x_hat0: &Vector) -> AppResult<Route> {
    if path_nodes.is_empty() || hop_regions.len() + 1 != path_nodes.len() {
        return Err(AppError::Invalid("plan path and hop regions do not match".into()));
    }
    if let Some(&bad) = path_nodes.iter().find(|&&k| k >= setup.nodes.len()) {
        return Err(AppError::Invalid(format!(
            "plan refers to node {bad}, net has {}",
            setup.nodes.len()
        )));
    }
    if let Some(&bad) = hop_regions.iter().find(|&&s| s >= setup.regions.len()) {
        return Err(AppError::Invalid(format!(
            "plan refers to region {bad}, scenario has {}",
            setup.regions.len()
        )));
    }
    let templates = setup.templates()?;
    let start = path_nodes[0];
    let r0 = &setup.nodes[start];
    let shift = x_hat0 - setup.cl.equilibrium_state(r0)?;
    let mut first: Option<AdmissibleSet> = None;
    for t in &templates {
        let set = t.build(r0)?;
        if set.contains(&shift, false)? {
            first = Some(set);
            break;
        }
    }
    let first = first
        .ok_or_else(|| CoreError::Start(format!("initial estimate is not in any admissible set of node {start}")))?;
    let mut sets = vec![first];
    for (k, &s) in hop_regions.iter().enumerate() {
        sets.push(templates[s].build(&setup.nodes[path_nodes[k + 1]])?);
    }
    let setpoints = path_nodes.iter().map(|&k| setup.nodes[k].clone()).collect();
    Ok(Route::new(&setup.cl, path_nodes.to_vec(), setpoints, sets)?)
}
