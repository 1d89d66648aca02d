//! Virtual net of set-point equilibria, hop certification through per-region
//! admissible sets, fuel-cost weights and Dijkstra search.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use crate::admissible::{AdmissibleOptions, AdmissibleSet, AdmissibleTemplate};
use crate::dynamics::{ClosedLoop, POSITION_DIM};
use crate::error::{dim_err, Error, Result};
use crate::geometry::{RegionSet, DEFAULT_TOL};
use crate::Vector;

/// Stopping fraction of the initial distance for weight propagation.
pub const SETTLE_FRACTION: f64 = 0.05;
/// Step cap for weight propagation.
pub const WEIGHT_STEP_CAP: usize = 1_000_000;

/// Set-point grid: Cartesian product of per-axis values plus explicit extra nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: [Vec<f64>; POSITION_DIM],
    pub extra: Vec<[f64; POSITION_DIM]>,
}

impl GridSpec {
    /// `count` evenly spaced values per axis over `[min, max]`; a count of 1 gives `min`.
    pub fn uniform(min: [f64; 3], max: [f64; 3], count: [usize; 3]) -> Result<Self> {
        let mut axes: [Vec<f64>; 3] = Default::default();
        for j in 0..3 {
            if count[j] == 0 {
                return Err(Error::Input("grid counts must be at least 1".into()));
            }
            axes[j] = (0..count[j])
                .map(|k| {
                    if count[j] == 1 {
                        min[j]
                    } else {
                        min[j] + (max[j] - min[j]) * k as f64 / (count[j] - 1) as f64
                    }
                })
                .collect();
        }
        Ok(Self {
            axes,
            extra: Vec::new(),
        })
    }

    /// Grid points in x₁-major order followed by extra points not already present.
    pub fn points(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        for &a in &self.axes[0] {
            for &b in &self.axes[1] {
                for &c in &self.axes[2] {
                    out.push([a, b, c]);
                }
            }
        }
        for p in &self.extra {
            if !out
                .iter()
                .any(|q| q.iter().zip(p).all(|(x, y)| libm::fabs(x - y) <= 1e-9))
            {
                out.push(*p);
            }
        }
        out
    }
}

/// Grid points whose equilibrium lies in at least one region.
pub fn build_nodes(spec: &GridSpec, cl: &ClosedLoop, regions: &RegionSet) -> Result<Vec<Vector>> {
    let mut nodes = Vec::new();
    for p in spec.points() {
        let r = Vector::from_column_slice(&p);
        if regions.region_of(&cl.equilibrium_state(&r)?, DEFAULT_TOL).is_some() {
            nodes.push(r);
        }
    }
    Ok(nodes)
}

/// One template per region, in region order.
pub fn region_templates(
    cl: &ClosedLoop,
    regions: &RegionSet,
    options: &AdmissibleOptions,
) -> Result<Vec<AdmissibleTemplate>> {
    regions
        .regions()
        .iter()
        .enumerate()
        .map(|(s, p)| Ok(AdmissibleTemplate::new(cl, p, options)?.with_region_id(s)))
        .collect()
}

pub fn node_sets(templates: &[AdmissibleTemplate], r: &Vector) -> Result<Vec<AdmissibleSet>> {
    templates.iter().map(|t| t.build(r)).collect()
}

/// Lowest region whose set for the target strictly contains `eq_from − eq_to`.
pub fn certify_hop(sets_to: &[AdmissibleSet], eq_from: &Vector, eq_to: &Vector) -> Result<Option<usize>> {
    let shift = eq_from - eq_to;
    for (s, set) in sets_to.iter().enumerate() {
        if set.contains(&shift, true)? {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// Noise-free fuel proxy for the hop `r_i → r_j`: sum of `‖u_t‖` from `x₀ = [r_i; 0]` until
/// within 5% of the initial equilibrium distance.
pub fn edge_weight(cl: &ClosedLoop, r_i: &Vector, r_j: &Vector) -> Result<f64> {
    let n = cl.n_x();
    if r_i.len() != POSITION_DIM || r_j.len() != POSITION_DIM || n < POSITION_DIM {
        return Err(dim_err("edge_weight", (POSITION_DIM, 1), (r_i.len(), 1)));
    }
    if r_i == r_j {
        return Ok(0.0);
    }
    let target = cl.equilibrium_state(r_j)?;
    let threshold = SETTLE_FRACTION * cl.equilibrium_state(&(r_j - r_i))?.norm();
    let mut x = Vector::zeros(n);
    x.rows_mut(0, POSITION_DIM).copy_from(r_i);
    let feedforward = cl.g() * r_j;
    let drive = cl.b_c() * r_j;
    let mut total = 0.0;
    for _ in 0..=WEIGHT_STEP_CAP {
        total += (cl.k() * &x + &feedforward).norm();
        if (&target - &x).norm() <= threshold {
            return Ok(total);
        }
        x = cl.a_c() * &x + &drive;
    }
    Err(Error::Weight { steps: WEIGHT_STEP_CAP })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    /// Region whose admissible set at `to` certified the hop.
    pub region: usize,
}

#[derive(Debug, Clone)]
pub struct VirtualNet {
    nodes: Vec<Vector>,
    equilibria: Vec<Vector>,
    node_sets: Vec<Vec<AdmissibleSet>>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<usize>>,
    regions: RegionSet,
}

impl VirtualNet {
    /// Sequential construction. Parallel callers can assemble from the same pieces.
    pub fn build(cl: &ClosedLoop, regions: RegionSet, nodes: Vec<Vector>, options: &AdmissibleOptions) -> Result<Self> {
        let templates = region_templates(cl, &regions, options)?;
        let sets = nodes
            .iter()
            .map(|r| node_sets(&templates, r))
            .collect::<Result<Vec<_>>>()?;
        let equilibria = nodes
            .iter()
            .map(|r| cl.equilibrium_state(r))
            .collect::<Result<Vec<_>>>()?;
        let mut edges = Vec::new();
        for i in 0..nodes.len() {
            for j in 0..nodes.len() {
                if i == j {
                    continue;
                }
                if let Some(region) = certify_hop(&sets[j], &equilibria[i], &equilibria[j])? {
                    let weight = edge_weight(cl, &nodes[i], &nodes[j])?;
                    edges.push(Edge {
                        from: i,
                        to: j,
                        weight,
                        region,
                    });
                }
            }
        }
        Self::assemble(regions, nodes, equilibria, sets, edges)
    }

    pub fn assemble(
        regions: RegionSet,
        nodes: Vec<Vector>,
        equilibria: Vec<Vector>,
        node_sets: Vec<Vec<AdmissibleSet>>,
        mut edges: Vec<Edge>,
    ) -> Result<Self> {
        let n = nodes.len();
        if equilibria.len() != n || node_sets.len() != n {
            return Err(dim_err(
                "VirtualNet::assemble",
                (n, 1),
                (node_sets.len(), equilibria.len()),
            ));
        }
        if node_sets.iter().any(|s| s.len() != regions.len()) {
            return Err(Error::Input("every node needs one admissible set per region".into()));
        }
        for e in &edges {
            if e.from >= n || e.to >= n || e.region >= regions.len() {
                return Err(Error::Input(alloc::format!(
                    "edge {}->{} refers to a missing node or region",
                    e.from,
                    e.to
                )));
            }
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(Error::Input(alloc::format!(
                    "edge {}->{} has invalid weight {}",
                    e.from,
                    e.to,
                    e.weight
                )));
            }
        }
        edges.retain(|e| e.from != e.to);
        edges.sort_by_key(|e| (e.from, e.to));
        let mut outgoing = alloc::vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            outgoing[e.from].push(k);
        }
        Ok(Self {
            nodes,
            equilibria,
            node_sets,
            edges,
            outgoing,
            regions,
        })
    }

    pub fn nodes(&self) -> &[Vector] {
        &self.nodes
    }

    pub fn equilibria(&self) -> &[Vector] {
        &self.equilibria
    }

    pub fn node_sets(&self) -> &[Vec<AdmissibleSet>] {
        &self.node_sets
    }

    pub fn set(&self, node: usize, region: usize) -> &AdmissibleSet {
        &self.node_sets[node][region]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn regions(&self) -> &RegionSet {
        &self.regions
    }

    pub fn edge(&self, i: usize, j: usize) -> Option<&Edge> {
        self.outgoing
            .get(i)?
            .iter()
            .map(|&k| &self.edges[k])
            .find(|e| e.to == j)
    }

    /// Recomputes the hop certificate from the stored sets; valid for `i = j` as a sanity check.
    pub fn edge_exists(&self, i: usize, j: usize) -> Result<(bool, Option<usize>)> {
        if i >= self.nodes.len() || j >= self.nodes.len() {
            return Err(Error::Input(alloc::format!("node index out of range: {i}, {j}")));
        }
        let s = certify_hop(&self.node_sets[j], &self.equilibria[i], &self.equilibria[j])?;
        Ok((s.is_some(), s))
    }

    /// Nearest node to `r` by Euclidean distance, lowest index on ties.
    pub fn nearest_node(&self, r: &Vector) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, node) in self.nodes.iter().enumerate() {
            let d = (node - r).norm();
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((k, d));
            }
        }
        best.map(|(k, _)| k)
    }

    /// Lowest region whose set at `node` contains `x̂₀ − x_eq(node)`.
    pub fn start_region(&self, node: usize, x_hat0: &Vector) -> Result<Option<usize>> {
        let shift = x_hat0 - &self.equilibria[node];
        for (s, set) in self.node_sets[node].iter().enumerate() {
            if set.contains(&shift, false)? {
                return Ok(Some(s));
            }
        }
        Ok(None)
    }
}

pub fn edge_exists(net: &VirtualNet, i: usize, j: usize) -> Result<(bool, Option<usize>)> {
    net.edge_exists(i, j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanPath {
    pub nodes: Vec<usize>,
    pub cost: f64,
    /// Certificate region of each hop `nodes[k] → nodes[k + 1]`.
    pub hop_regions: Vec<usize>,
}

#[derive(PartialEq)]
struct Queued(f64, usize);

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over the stored edges; ties resolve towards lower node indices.
pub fn shortest_path(net: &VirtualNet, start: usize, goal: usize) -> Result<PlanPath> {
    let n = net.nodes.len();
    if start >= n || goal >= n {
        return Err(Error::Input(alloc::format!("node index out of range: {start}, {goal}")));
    }
    let mut dist = alloc::vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = alloc::vec![None; n];
    let mut done = alloc::vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Reverse(Queued(0.0, start)));
    while let Some(Reverse(Queued(d, u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == goal {
            break;
        }
        for &k in &net.outgoing[u] {
            let e = &net.edges[k];
            let nd = d + e.weight;
            if nd < dist[e.to] {
                dist[e.to] = nd;
                pred[e.to] = Some(k);
                heap.push(Reverse(Queued(nd, e.to)));
            }
        }
    }
    if !done[goal] {
        return Err(Error::NoPath {
            start,
            goal,
            reachable: (0..n).filter(|&k| done[k]).collect(),
        });
    }
    let mut nodes = alloc::vec![goal];
    let mut hop_regions = Vec::new();
    let mut cur = goal;
    while let Some(k) = pred[cur] {
        let e = &net.edges[k];
        hop_regions.push(e.region);
        nodes.push(e.from);
        cur = e.from;
    }
    nodes.reverse();
    hop_regions.reverse();
    Ok(PlanPath {
        nodes,
        cost: dist[goal],
        hop_regions,
    })
}

/// Switching test: `x̂ − x_eq(r_next)` lies in the next node's certificate set.
pub fn switching_ready(cl: &ClosedLoop, next: &AdmissibleSet, x_hat: &Vector, r_next: &Vector) -> Result<bool> {
    next.contains(&(x_hat - cl.equilibrium_state(r_next)?), false)
}
