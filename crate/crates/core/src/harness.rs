//! End-to-end pipeline and utilization sweeps.
//!
//! `run_pipeline` chains reduce → solve → graph → simulate → verdict for
//! one task set. `acceptance_sweep` repeats it over utilization levels and
//! replicates in parallel and reports the fraction of schedulable sets.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};


use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depgraph::{DependencyGraph, GraphError};
use crate::generator::{generate_taskset, GenConfig, GenError};
use crate::jobshop::{reduce_frame_based, reduce_periodic, reduce_with_delays, JobShopInstance, ReduceError};
use crate::scheduler::{assign_subjob_deadlines, audit, list_edf, p_edf, CsMode, MultiprocSchedule, Verdict};
use crate::solver::{
    improve_local_search, solve_dispatch, solve_exact, DispatchRule, ExactLimits, ShopSchedule,
};
use crate::taskmodel::{Rational, ReleaseModel, TaskSet};
use crate::time::{Lateness, Time};

/// Attempts at generating one replicate before the sweep gives up on it.
const GENERATION_ATTEMPTS: u64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    /// `Z + n` machines, makespan.
    Frame,
    /// `Z` machines with delays and tails, makespan.
    Delays,
    /// `Z + n` machines over one hyper-period, maximum lateness.
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolverChoice {
    Dispatch(DispatchRule),
    /// Best dispatch schedule improved by local search.
    LocalSearch { budget: usize, seed: u64 },
    Exact(ExactLimits),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    /// Semi-partitioned LIST-EDF.
    ListEdf,
    /// Partitioned EDF after worst-fit assignment.
    PartitionedEdf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// `None` picks the reduction matching the release model.
    pub reduction: Option<Reduction>,
    pub solver: SolverChoice,
    pub policy: Policy,
    pub cs_mode: CsMode,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            reduction: None,
            solver: SolverChoice::Exact(ExactLimits::nodes_only(2_000)),
            policy: Policy::ListEdf,
            cs_mode: CsMode::Preemptive,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Heuristic,
    Optimal,
    /// Exact search stopped at a limit.
    Incumbent,
}

#[derive(Clone, Debug)]
pub struct ResultRow {
    pub schedulable: bool,
    /// Makespan (frame-based) or maximum lateness (periodic) of the
    /// simulated schedule.
    pub objective: Lateness,
    /// Objective of the shop schedule the graph was built from.
    pub shop_objective: Lateness,
    pub graph_length: Time,
    /// `ΣC_i / M`.
    pub workload_bound: Rational,
    /// `len(G*)` when the solver proved optimality.
    pub optimal_graph_length: Option<Time>,
    /// `max(ΣC_i / M, len(G*))` when `len(G*)` is known.
    pub lower_bound: Option<Rational>,
    pub solver_status: SolverStatus,
    pub wall_time: Duration,
    pub trace: MultiprocSchedule,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("reduce: {0}")]
    Reduce(#[from] ReduceError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
}

/// Runs the chosen solver on a shop instance.
pub fn solve_shop(inst: &JobShopInstance, solver: &SolverChoice) -> (ShopSchedule, SolverStatus) {
    match *solver {
        SolverChoice::Dispatch(rule) => (solve_dispatch(inst, rule), SolverStatus::Heuristic),
        SolverChoice::LocalSearch { budget, seed } => {
            let start = DispatchRule::ALL
                .iter()
                .map(|&r| solve_dispatch(inst, r))
                .min_by_key(|s| s.objective)
                .expect("at least one rule");
            (improve_local_search(inst, &start, budget, seed), SolverStatus::Heuristic)
        }
        SolverChoice::Exact(limits) => {
            let r = solve_exact(inst, &limits);
            let status = if r.is_optimal() { SolverStatus::Optimal } else { SolverStatus::Incumbent };
            (r.schedule().clone(), status)
        }
    }
}

/// Runs every stage on one task set.
pub fn run_pipeline(ts: &TaskSet, options: &PipelineOptions) -> Result<ResultRow, PipelineError> {
    let started = Instant::now();
    let reduction = options.reduction.unwrap_or(match ts.release_model {
        ReleaseModel::FrameBased => Reduction::Frame,
        ReleaseModel::PeriodicSynchronous => Reduction::Periodic,
    });
    let inst = match reduction {
        Reduction::Frame => reduce_frame_based(ts)?,
        Reduction::Delays => reduce_with_delays(ts)?,
        Reduction::Periodic => reduce_periodic(ts)?,
    };
    let (sched, solver_status) = solve_shop(&inst, &options.solver);
    let g = DependencyGraph::from_schedule(ts, &inst, &sched)?;
    let graph_length = g.critical_path_length()?;
    let deadlines = assign_subjob_deadlines(ts);
    let trace = match options.policy {
        Policy::ListEdf => list_edf(ts, &g, &deadlines, options.cs_mode),
        Policy::PartitionedEdf => p_edf(ts, &g, &deadlines, options.cs_mode),
    };
    let verdict = trace.check_schedulability();
    let objective = match ts.release_model {
        ReleaseModel::FrameBased => trace.makespan().map(|m| m as Lateness).unwrap_or(0),
        ReleaseModel::PeriodicSynchronous => trace
            .job_completions()
            .into_iter()
            .map(|(_, c, d)| c as Lateness - d as Lateness)
            .max()
            .unwrap_or(Lateness::MIN),
    };
    let workload_bound = ts.workload_bound();
    let optimal_graph_length = (solver_status == SolverStatus::Optimal
        && matches!(reduction, Reduction::Frame | Reduction::Delays))
    .then_some(graph_length);
    let lower_bound = optimal_graph_length.map(|l| workload_bound.max(Rational::from_integer(u128::from(l))));
    Ok(ResultRow {
        schedulable: verdict == Verdict::Schedulable,
        objective,
        shop_objective: sched.objective,
        graph_length,
        workload_bound,
        optimal_graph_length,
        lower_bound,
        solver_status,
        wall_time: started.elapsed(),
        trace,
    })
}

/// Re-checks a row's trace with the structural audit.
pub fn audit_row(ts: &TaskSet, row: &ResultRow, options: &PipelineOptions) -> bool {
    let Ok(g) = graph_of_trace(ts, &row.trace) else { return false };
    audit(&row.trace, &g, options.policy == Policy::ListEdf).is_empty()
}

fn graph_of_trace(ts: &TaskSet, trace: &MultiprocSchedule) -> Result<DependencyGraph, GraphError> {
    // Resource order as executed: by first start time.
    let mut chains: Vec<Vec<(Time, usize)>> = vec![Vec::new(); ts.resources];
    for e in &trace.events {
        let v = &trace.vertices[e.vertex];
        if let Some(z) = v.resource {
            chains[z].push((e.start, e.vertex));
        }
    }
    let keys: Vec<Vec<_>> = chains
        .into_iter()
        .map(|mut c| {
            c.sort();
            let mut seen = std::collections::HashSet::new();
            c.into_iter().filter(|&(_, v)| seen.insert(v)).map(|(_, v)| trace.vertices[v].key).collect()
        })
        .collect();
    DependencyGraph::new(ts, &keys)
}

/// A named pipeline configuration such as `JS-LEDF-P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variant {
    pub policy: Policy,
    pub cs_mode: CsMode,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant { policy: Policy::ListEdf, cs_mode: CsMode::Preemptive },
        Variant { policy: Policy::ListEdf, cs_mode: CsMode::NonPreemptive },
        Variant { policy: Policy::PartitionedEdf, cs_mode: CsMode::Preemptive },
        Variant { policy: Policy::PartitionedEdf, cs_mode: CsMode::NonPreemptive },
    ];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.policy {
            Policy::ListEdf => "LEDF",
            Policy::PartitionedEdf => "PEDF",
        };
        let m = match self.cs_mode {
            CsMode::Preemptive => "P",
            CsMode::NonPreemptive => "NP",
        };
        write!(f, "JS-{p}-{m}")
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant {s:?}; expected JS-LEDF-P, JS-LEDF-NP, JS-PEDF-P or JS-PEDF-NP"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Generator settings; `utilization_percent` and `seed` are overridden
    /// per run.
    pub generator: GenConfig,
    /// Utilization levels in percent of `M`.
    pub levels: Vec<u32>,
    pub replicates: usize,
    pub master_seed: u64,
    pub variants: Vec<Variant>,
    pub solver: SolverChoice,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
}

impl SweepConfig {
    /// Levels 0 to 100 in steps of 5.
    pub fn standard_levels() -> Vec<u32> {
        (0..=100).step_by(5).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: u32,
    pub variant: String,
    pub accepted: usize,
    pub total: usize,
}

impl SweepRow {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.accepted as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("generate: {0}")]
    Generate(#[from] GenError),
    #[error("level {level} replicate {replicate}: {source}")]
    Pipeline { level: u32, replicate: usize, source: PipelineError },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Seed of one replicate; shared by every level so that only utilization
/// changes along a curve.
pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(replicate as u64);
    rng.next_u64()
}

/// Generates the replicate's task set, drawing a fresh derived seed when
/// a draw cannot be quantized.
pub fn sweep_taskset(cfg: &GenConfig, level: u32, seed: u64) -> Result<TaskSet, GenError> {
    let mut gen = cfg.clone();
    gen.utilization_percent = level;
    let mut last = None;
    for attempt in 0..GENERATION_ATTEMPTS {
        gen.seed = if attempt == 0 { seed } else { replicate_seed(seed, attempt as usize) };
        match generate_taskset(&gen) {
            Ok(ts) => return Ok(ts),
            Err(e @ GenError::QuantizationUnderflow { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Acceptance ratio per level and variant, ordered by level then variant.
pub fn acceptance_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, SweepError> {
    cfg.generator.validate().or_else(|e| match e {
        // Only the utilization target may be out of range at this point.
        GenError::Infeasible { .. } => Ok(()),
        e => Err(e),
    })?;
    let work: Vec<(u32, usize)> =
        cfg.levels.iter().flat_map(|&l| (0..cfg.replicates).map(move |r| (l, r))).collect();
    let run = |&(level, replicate): &(u32, usize)| -> Result<Vec<bool>, SweepError> {
        let ts = sweep_taskset(&cfg.generator, level, replicate_seed(cfg.master_seed, replicate))?;
        cfg.variants
            .iter()
            .map(|v| {
                let options =
                    PipelineOptions { reduction: None, solver: cfg.solver, policy: v.policy, cs_mode: v.cs_mode };
                run_pipeline(&ts, &options)
                    .map(|row| row.schedulable)
                    .map_err(|source| SweepError::Pipeline { level, replicate, source })
            })
            .collect()
    };
    let results: Vec<Result<Vec<bool>, SweepError>> = match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?
            .install(|| work.par_iter().map(run).collect()),
        None => work.par_iter().map(run).collect(),
    };

    let mut rows = Vec::with_capacity(cfg.levels.len() * cfg.variants.len());
    let mut it = results.into_iter();
    for &level in &cfg.levels {
        let mut accepted = vec![0usize; cfg.variants.len()];
        for _ in 0..cfg.replicates {
            let verdicts = it.next().expect("one result per work item")?;
            for (a, ok) in accepted.iter_mut().zip(verdicts) {
                *a += usize::from(ok);
            }
        }
        for (v, a) in cfg.variants.iter().zip(accepted) {
            rows.push(SweepRow { level, variant: v.to_string(), accepted: a, total: cfg.replicates });
        }
    }
    Ok(rows)
}

/// `level,variant,accepted,total,ratio` with a header row.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "variant", "accepted", "total", "ratio"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.level.to_string(),
            r.variant.clone(),
            r.accepted.to_string(),
            r.total.to_string(),
            format!("{:.4}", r.ratio()),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Everything needed to reproduce a sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepManifest {
    pub config: SweepConfig,
    pub replicate_seeds: Vec<u64>,
    pub git_revision: Option<String>,
}

impl SweepManifest {
    pub fn new(config: &SweepConfig, git_revision: Option<String>) -> Self {
        SweepManifest {
            replicate_seeds: (0..config.replicates).map(|r| replicate_seed(config.master_seed, r)).collect(),
            config: config.clone(),
            git_revision,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
