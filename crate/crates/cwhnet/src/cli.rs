//! Command-line front end. Stages communicate only through files in `--out`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cwhnet_core::admissible::AdmissibleSet;
use cwhnet_core::net::VirtualNet;
use cwhnet_core::numerics::{erf_inv, RngStream};
use cwhnet_core::sim::{
    beta_tube_analytic, beta_tube_empirical, run_episode, ErrorInit, MonteCarloConfig, MonteCarloSummary, Route,
    TubeMode,
};
use cwhnet_core::Vector;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::output::{self, rows, vec_of, write_json, Metadata, SetExport};
use crate::pipeline::{self, Setup};
use crate::scenario::Scenario;
use crate::verify::{self, VerifyReport};

#[derive(Debug, Parser)]
#[command(
    name = "cwhnet",
    version,
    about = "Chance-constrained set-point planning in the CWH frame"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides the scenario's Monte Carlo run count.
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    SteadyState,
    Cold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TubeArg {
    Empirical,
    Analytic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gains, observer and stationary error covariance.
    Synthesize(Common),
    /// Regions, nodes, admissible sets and certified edges.
    BuildNet {
        #[command(flatten)]
        common: Common,
        /// Also write every admissible set to sets.json.
        #[arg(long)]
        export_sets: bool,
    },
    /// Builds the net and the cheapest certified path from start to goal.
    Plan(Common),
    /// Monte Carlo along a stored plan.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Plan file (default: <out>/plan.json).
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Write per-step CSV traces for the first N runs.
        #[arg(long, default_value_t = 0)]
        trace_runs: usize,
        /// Overrides the scenario step cap.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum, default_value = "steady-state")]
        error_init: InitArg,
        /// Analytic tubes need a single-node route.
        #[arg(long, value_enum, default_value = "empirical")]
        tube: TubeArg,
    },
    /// Oracle, finite-determination, covariance and coverage checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Shifts per set for the oracle comparison.
        #[arg(long, default_value_t = 1000)]
        oracle_samples: usize,
        /// Accepted members per set for the horizon-doubling check.
        #[arg(long, default_value_t = 100)]
        accepted: usize,
    },
}

/// A loaded scenario with command-line overrides applied.
pub struct Context {
    pub scenario: Scenario,
    pub hash: String,
    pub out: PathBuf,
    pub pool: rayon::ThreadPool,
}

impl Context {
    pub fn load(common: &Common) -> AppResult<Self> {
        let mut scenario = Scenario::load(&common.scenario)?;
        let hash = scenario.hash();
        if let Some(seed) = common.seed {
            scenario.seed = seed;
        }
        if let Some(runs) = common.runs {
            if runs == 0 {
                return Err(AppError::Invalid("--runs must be at least 1".into()));
            }
            scenario.n_runs = runs;
        }
        for w in scenario.warnings() {
            warn!("{w}");
        }
        let pool = pipeline::thread_pool(common.workers)?;
        std::fs::create_dir_all(&common.out)?;
        Ok(Self {
            scenario,
            hash,
            out: common.out.clone(),
            pool,
        })
    }

    pub fn metadata(&self) -> Metadata {
        Metadata::new(self.hash.clone(), self.scenario.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Synthesize(c) => synthesize(&Context::load(&c)?),
        Command::BuildNet { common, export_sets } => build_net(&Context::load(&common)?, export_sets),
        Command::Plan(c) => plan(&Context::load(&c)?),
        Command::Simulate {
            common,
            plan,
            trace_runs,
            steps,
            error_init,
            tube,
        } => {
            let ctx = Context::load(&common)?;
            let plan = plan.unwrap_or_else(|| ctx.path("plan.json"));
            simulate(&ctx, &plan, trace_runs, steps, error_init, tube)
        }
        Command::Verify {
            common,
            oracle_samples,
            accepted,
        } => verify(&Context::load(&common)?, oracle_samples, accepted),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub metadata: Metadata,
    pub k: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub p_inf: Vec<Vec<f64>>,
    pub spectral_radius_control: f64,
    pub spectral_radius_observer: f64,
}

pub fn synthesize(ctx: &Context) -> AppResult<()> {
    let cl = ctx.scenario.closed_loop()?;
    let report = SynthesisReport {
        metadata: ctx.metadata(),
        k: rows(cl.k()),
        l: rows(cl.l()),
        g: rows(cl.g()),
        p_inf: rows(cl.p_inf()),
        spectral_radius_control: cl.spectral_radius_control(),
        spectral_radius_observer: cl.spectral_radius_observer(),
    };
    let path = ctx.path("synthesis.json");
    write_json(&path, &report)?;
    println!(
        "rho(A+BK) = {:.6}, rho(A+LC) = {:.6}; wrote {}",
        report.spectral_radius_control,
        report.spectral_radius_observer,
        path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NodeReport {
    pub index: usize,
    pub r_m: Vec<f64>,
    /// Regions whose admissible set at this node is non-empty.
    pub nonempty_regions: Vec<usize>,
    /// Horizon per region, in region order.
    pub horizons: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NetReport {
    pub metadata: Metadata,
    pub alpha: f64,
    pub regions: usize,
    pub nodes: Vec<NodeReport>,
    pub edges: usize,
    pub edge_file: String,
}

fn write_net(ctx: &Context, net: &VirtualNet, export_sets: bool) -> AppResult<()> {
    let nodes = net
        .nodes()
        .iter()
        .zip(net.node_sets())
        .enumerate()
        .map(|(index, (r, sets))| NodeReport {
            index,
            r_m: vec_of(r),
            nonempty_regions: sets
                .iter()
                .filter(|s| !s.is_empty())
                .map(AdmissibleSet::region_id)
                .collect(),
            horizons: sets.iter().map(AdmissibleSet::horizon).collect(),
        })
        .collect();
    let report = NetReport {
        metadata: ctx.metadata(),
        alpha: ctx.scenario.alpha,
        regions: net.regions().len(),
        nodes,
        edges: net.edges().len(),
        edge_file: "edges.csv".into(),
    };
    write_json(&ctx.path("net.json"), &report)?;
    output::write_edges_csv(&ctx.path("edges.csv"), net.edges())?;
    if export_sets {
        #[derive(Serialize)]
        struct Sets<'a> {
            metadata: Metadata,
            sets: &'a [SetExport],
        }
        let sets: Vec<SetExport> = net
            .node_sets()
            .iter()
            .enumerate()
            .flat_map(|(k, sets)| sets.iter().map(move |s| SetExport::new(k, s)))
            .collect();
        write_json(
            &ctx.path("sets.json"),
            &Sets {
                metadata: ctx.metadata(),
                sets: &sets,
            },
        )?;
    }
    println!(
        "{} nodes, {} edges; wrote {}",
        net.nodes().len(),
        net.edges().len(),
        ctx.out.display()
    );
    Ok(())
}

pub fn build_net(ctx: &Context, export_sets: bool) -> AppResult<()> {
    let setup = Setup::new(&ctx.scenario)?;
    let net = pipeline::build_net(&ctx.pool, &setup.cl, setup.regions, setup.nodes, &setup.options)?;
    write_net(ctx, &net, export_sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub metadata: Metadata,
    pub start_node: usize,
    pub goal_node: usize,
    pub path: Vec<usize>,
    pub setpoints_m: Vec<Vec<f64>>,
    pub hop_regions: Vec<usize>,
    pub cost: f64,
    /// Initial estimate: the start node's equilibrium state.
    pub x_hat0: Vec<f64>,
}

pub fn plan(ctx: &Context) -> AppResult<()> {
    let p = pipeline::plan(&ctx.pool, &ctx.scenario)?;
    write_net(ctx, &p.net, false)?;
    let file = PlanFile {
        metadata: ctx.metadata(),
        start_node: p.start,
        goal_node: p.goal,
        path: p.path.nodes.clone(),
        setpoints_m: p.path.nodes.iter().map(|&k| vec_of(&p.net.nodes()[k])).collect(),
        hop_regions: p.path.hop_regions.clone(),
        cost: p.path.cost,
        x_hat0: vec_of(&p.x_hat0),
    };
    let path = ctx.path("plan.json");
    write_json(&path, &file)?;
    println!("path {:?}, cost {:.6}; wrote {}", file.path, file.cost, path.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrequencyMin {
    pub step: usize,
    pub value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Band {
    pub axis: usize,
    /// Empirical `beta`-quantile of `|e| / σ∞`.
    pub measured: f64,
    /// `√2·erf⁻¹(beta)`.
    pub predicted: f64,
    pub relative_error: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TubeStep {
    pub k: usize,
    pub center_m: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TubeReport {
    pub mode: String,
    pub beta: f64,
    pub radius_sq: f64,
    pub steps: Vec<TubeStep>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ArrivalReport {
    pub runs: usize,
    pub arrived: usize,
    pub partial: bool,
    pub first: Option<usize>,
    pub last: Option<usize>,
    pub mean: Option<f64>,
    pub per_run: Vec<Option<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub metadata: Metadata,
    pub n_runs: usize,
    pub steps: usize,
    pub error_init: String,
    /// False when the initial error is not drawn from the stationary distribution.
    pub guarantee_applies: bool,
    pub alpha: f64,
    pub route_nodes: Vec<usize>,
    pub leg_regions: Vec<usize>,
    pub box_frequency: Vec<f64>,
    pub free_frequency: Vec<f64>,
    pub region_frequency: Vec<f64>,
    pub min_box_frequency: FrequencyMin,
    pub min_free_frequency: FrequencyMin,
    pub error_covariance: Vec<Vec<f64>>,
    pub p_inf: Vec<Vec<f64>>,
    pub covariance_relative_error: f64,
    pub error_samples: u64,
    pub error_bands: Vec<Band>,
    pub tube: TubeReport,
    pub arrivals: ArrivalReport,
    pub final_in_obstacle: usize,
}

fn min_of((step, value): (usize, f64)) -> FrequencyMin {
    FrequencyMin { step, value }
}

pub fn error_bands(summary: &MonteCarloSummary, beta: f64) -> AppResult<Vec<Band>> {
    let predicted = std::f64::consts::SQRT_2 * erf_inv(beta)?;
    Ok((0..summary.error_covariance.nrows())
        .filter_map(|axis| {
            summary.error_band(axis, beta).map(|measured| Band {
                axis,
                measured,
                predicted,
                relative_error: (measured - predicted).abs() / predicted,
            })
        })
        .collect())
}

fn load_route(ctx: &Context, plan_path: &Path) -> AppResult<(Setup, Route, Vector)> {
    let plan: PlanFile = output::read_json(plan_path)?;
    if plan.metadata.scenario_hash != ctx.hash {
        return Err(AppError::Stale(format!(
            "{} was planned for scenario {}, current scenario is {}",
            plan_path.display(),
            plan.metadata.scenario_hash,
            ctx.hash
        )));
    }
    let setup = Setup::new(&ctx.scenario)?;
    for (&k, r) in plan.path.iter().zip(&plan.setpoints_m) {
        if setup.nodes.get(k).is_none_or(|n| n.as_slice() != r.as_slice()) {
            return Err(AppError::Stale(format!("node {k} no longer matches the plan")));
        }
    }
    let x_hat0 = Vector::from_vec(plan.x_hat0.clone());
    if x_hat0.len() != setup.cl.n_x() {
        return Err(AppError::Invalid("plan x_hat0 has the wrong length".into()));
    }
    let route = pipeline::route_for_path(&setup, &plan.path, &plan.hop_regions, &x_hat0)?;
    Ok((setup, route, x_hat0))
}

pub fn simulate(
    ctx: &Context,
    plan_path: &Path,
    trace_runs: usize,
    steps: Option<usize>,
    error_init: InitArg,
    tube: TubeArg,
) -> AppResult<()> {
    let (setup, route, x_hat0) = load_route(ctx, plan_path)?;
    let s = &ctx.scenario;
    let init = match error_init {
        InitArg::SteadyState => ErrorInit::SteadyState,
        InitArg::Cold => ErrorInit::Cold,
    };
    if !init.is_guaranteed() {
        warn!(
            "error init '{}' is outside the stationary-observer hypothesis",
            init.label()
        );
    }
    let mode = match tube {
        TubeArg::Empirical => TubeMode::Empirical,
        TubeArg::Analytic if route.len() == 1 => TubeMode::Analytic,
        TubeArg::Analytic => {
            return Err(AppError::Invalid("analytic tubes need a single-node route".into()));
        }
    };
    let config = MonteCarloConfig {
        n_runs: s.n_runs,
        steps: steps.unwrap_or(s.steps_cap),
        seed: s.seed,
        init: init.clone(),
        x_hat0: x_hat0.clone(),
        require_admissible_start: true,
    };
    if config.steps == 0 {
        return Err(AppError::Invalid("--steps must be at least 1".into()));
    }
    info!("{} runs x {} steps", config.n_runs, config.steps);
    let summary = pipeline::monte_carlo(&ctx.pool, &setup.cl, &setup.regions, &route, &config)?;

    for (i, mut stream) in RngStream::substream_range(s.seed, 0, trace_runs.min(s.n_runs))
        .into_iter()
        .enumerate()
    {
        let trace = run_episode(
            &setup.cl,
            &setup.regions,
            &route,
            &x_hat0,
            &init,
            config.steps,
            &mut stream,
        )?;
        output::write_trace_csv(&ctx.path(&format!("trace_{i:04}.csv")), &trace, route.nodes())?;
    }

    let tubes = match mode {
        TubeMode::Empirical => beta_tube_empirical(&summary, s.beta)?,
        TubeMode::Analytic => {
            let r = &route.setpoints()[0];
            let shift = &x_hat0 - setup.cl.equilibrium_state(r)?;
            beta_tube_analytic(&setup.cl, r, &shift, config.steps, s.beta)?
        }
    };
    let p_inf = setup.cl.p_inf();
    let arr = &summary.arrivals;
    let report = Summary {
        metadata: ctx.metadata(),
        n_runs: summary.n_runs,
        steps: summary.steps,
        error_init: init.label().into(),
        guarantee_applies: init.is_guaranteed(),
        alpha: s.alpha,
        route_nodes: route.nodes().to_vec(),
        leg_regions: (0..route.len()).map(|k| route.leg_region(k)).collect(),
        box_frequency: summary.box_frequency.clone(),
        free_frequency: summary.free_frequency.clone(),
        region_frequency: summary.region_frequency.clone(),
        min_box_frequency: min_of(summary.min_box_frequency()),
        min_free_frequency: min_of(summary.min_free_frequency()),
        error_covariance: rows(&summary.error_covariance),
        p_inf: rows(p_inf),
        covariance_relative_error: (&summary.error_covariance - p_inf).norm() / p_inf.norm(),
        error_samples: summary.error_samples,
        error_bands: error_bands(&summary, s.beta)?,
        tube: TubeReport {
            mode: mode.label().into(),
            beta: s.beta,
            radius_sq: tubes.first().map_or(0.0, |t| t.radius_sq),
            steps: tubes
                .iter()
                .enumerate()
                .map(|(k, t)| TubeStep {
                    k,
                    center_m: vec_of(&t.center),
                    shape: rows(&t.shape),
                })
                .collect(),
        },
        arrivals: ArrivalReport {
            runs: summary.n_runs,
            arrived: arr.arrived,
            partial: !arr.all_arrived(),
            first: arr.first,
            last: arr.last,
            mean: arr.mean,
            per_run: arr.per_run.clone(),
        },
        final_in_obstacle: summary.final_in_obstacle,
    };
    let path = ctx.path("summary.json");
    write_json(&path, &report)?;
    println!(
        "min box frequency {:.4} (step {}), min free-space frequency {:.4} (step {}), {}/{} arrived; wrote {}",
        report.min_box_frequency.value,
        report.min_box_frequency.step,
        report.min_free_frequency.value,
        report.min_free_frequency.step,
        arr.arrived,
        summary.n_runs,
        path.display()
    );
    if !arr.all_arrived() {
        return Err(AppError::PartialArrival {
            arrived: arr.arrived,
            runs: summary.n_runs,
            steps: summary.steps,
        });
    }
    Ok(())
}

/// Distinct non-empty leg sets of the route, at most `limit`.
fn route_sets(route: &Route, limit: usize) -> Vec<&AdmissibleSet> {
    let mut out: Vec<&AdmissibleSet> = Vec::new();
    for k in 0..route.len() {
        let s = route.leg_set(k);
        if !s.is_empty()
            && !out
                .iter()
                .any(|o| o.set_point() == s.set_point() && o.region_id() == s.region_id())
        {
            out.push(s);
        }
    }
    out.truncate(limit);
    out
}

pub fn verify(ctx: &Context, oracle_samples: usize, accepted: usize) -> AppResult<()> {
    let s = &ctx.scenario;
    let p = pipeline::plan(&ctx.pool, s)?;
    let route = Route::from_plan(&p.setup.cl, &p.net, &p.path, &p.x_hat0)?;
    let config = MonteCarloConfig {
        n_runs: s.n_runs,
        steps: s.steps_cap,
        seed: s.seed,
        init: ErrorInit::SteadyState,
        x_hat0: p.x_hat0.clone(),
        require_admissible_start: true,
    };
    let summary = pipeline::monte_carlo(&ctx.pool, &p.setup.cl, &p.setup.regions, &route, &config)?;
    let sets = route_sets(&route, 5);
    let cl = &p.setup.cl;
    let regions = &p.setup.regions;
    let mut checks = ctx.pool.install(|| -> AppResult<_> {
        Ok(vec![
            verify::oracle_equivalence(cl, regions, &sets, s.alpha, oracle_samples, s.seed)?,
            verify::finite_determination(cl, regions, &sets, &p.setup.options, accepted, s.seed)?,
        ])
    })?;
    checks.push(verify::covariance_match(
        &summary.error_covariance,
        cl.p_inf(),
        verify::COVARIANCE_TOL,
    ));
    checks.extend(verify::coverage(&summary, s.alpha));
    let report = VerifyReport::new(ctx.metadata(), s.warnings(), checks);
    let path = ctx.path("verify.json");
    write_json(&path, &report)?;
    for c in &report.checks {
        println!(
            "{} {}: {} (threshold {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    for w in &report.warnings {
        println!("WARNING {w}");
    }
    if report.passed {
        Ok(())
    } else {
        Err(AppError::VerifyFailed(report.failed().join(", ")))
    }
}
