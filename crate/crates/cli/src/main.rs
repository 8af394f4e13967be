use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dga::depgraph::DependencyGraph;
use dga::generator::{generate_taskset, GenConfig};
use dga::harness::{
    acceptance_sweep, run_pipeline, solve_shop, sweep_csv, PipelineOptions, Policy, Reduction, SolverChoice,
    SweepConfig, SweepManifest, Variant,
};
use dga::jobshop::{reduce_frame_based, reduce_periodic, reduce_with_delays, JobShopInstance};
use dga::oracle::{generate_corpus, generate_periodic_corpus};
use dga::scheduler::CsMode;
use dga::solver::{DispatchRule, ExactLimits};
use dga::taskmodel::{ReleaseModel, TaskSet};
use dga::tickets::build_ticket_table;

#[derive(Parser)]
#[command(name = "dga", version, about = "Dependency-graph scheduling of multiprocessor tasks with critical sections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Ledf,
    Pedf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CsModeArg {
    P,
    Np,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReductionArg {
    Frame,
    Delays,
    Periodic,
}

#[derive(clap::Args, Clone)]
struct StageArgs {
    /// Task set JSON.
    taskset: PathBuf,
    /// edf, mwr, lpt, fifo, ls[:budget] or exact[:node limit].
    #[arg(long, default_value = "exact")]
    solver: String,
    #[arg(long, value_enum)]
    reduction: Option<ReductionArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a task set from a generator config.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Total utilization in percent of the processor count.
        #[arg(long)]
        level: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a task set against the model constraints.
    Validate { taskset: PathBuf },
    /// Print the job-shop instance of a task set.
    Reduce(StageArgs),
    /// Solve the job-shop instance and print the schedule.
    Solve(StageArgs),
    /// Print the dependency graph in DOT format.
    Graph(StageArgs),
    /// Simulate the graph and print the trace CSV.
    Schedule {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long, value_enum, default_value = "ledf")]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value = "p")]
        cs_mode: CsModeArg,
    },
    /// Print the runtime ticket table.
    Tickets(StageArgs),
    /// Acceptance ratio over utilization levels.
    Sweep {
        /// Generator config JSON; defaults to M=4, Z=4, H=[0.05,0.10].
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated percentages or `start:end:step`.
        #[arg(long, default_value = "0:100:5")]
        levels: String,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// Comma-separated variants such as JS-LEDF-P.
        #[arg(long, default_value = "JS-LEDF-P")]
        policy: String,
        #[arg(long, default_value = "exact:2000")]
        solver: String,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
    },
    /// Regenerate the exhaustive-oracle corpora.
    OracleCorpus {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 20)]
        periodic_count: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

enum CliError {
    Validation(String),
    Stage(String),
}

impl CliError {
    fn stage(stage: &str, e: impl std::fmt::Display) -> Self {
        CliError::Stage(format!("{stage}: {e}"))
    }
}

fn read_taskset(path: &Path) -> Result<TaskSet, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::stage("read", e))?;
    TaskSet::from_json(&text).map_err(|e| match e {
        dga::taskmodel::ModelError::Invalid(v) => {
            CliError::Validation(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))
        }
        e => CliError::Validation(e.to_string()),
    })
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::stage("write", e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_solver(spec: &str, seed: u64) -> Result<SolverChoice, CliError> {
    let (name, arg) = spec.split_once(':').map_or((spec, None), |(a, b)| (a, Some(b)));
    let num = |default: u64| -> Result<u64, CliError> {
        arg.map_or(Ok(default), |a| a.parse().map_err(|_| CliError::Validation(format!("bad solver argument {a:?}"))))
    };
    Ok(match name {
        "edf" => SolverChoice::Dispatch(DispatchRule::EarliestDeadlineFirst),
        "mwr" => SolverChoice::Dispatch(DispatchRule::MostWorkRemaining),
        "lpt" => SolverChoice::Dispatch(DispatchRule::LongestProcessingTime),
        "fifo" => SolverChoice::Dispatch(DispatchRule::Fifo),
        "ls" => SolverChoice::LocalSearch { budget: num(1000)? as usize, seed },
        "exact" => SolverChoice::Exact(match arg {
            Some(_) => ExactLimits::nodes_only(num(0)?),
            None => ExactLimits::default(),
        }),
        _ => return Err(CliError::Validation(format!("unknown solver {spec:?}"))),
    })
}

fn reduce(ts: &TaskSet, r: Option<ReductionArg>) -> Result<(JobShopInstance, Reduction), CliError> {
    let r = match r {
        Some(ReductionArg::Frame) => Reduction::Frame,
        Some(ReductionArg::Delays) => Reduction::Delays,
        Some(ReductionArg::Periodic) => Reduction::Periodic,
        None if ts.release_model == ReleaseModel::FrameBased => Reduction::Frame,
        None => Reduction::Periodic,
    };
    let inst = match r {
        Reduction::Frame => reduce_frame_based(ts),
        Reduction::Delays => reduce_with_delays(ts),
        Reduction::Periodic => reduce_periodic(ts),
    }
    .map_err(|e| CliError::stage("reduce", e))?;
    Ok((inst, r))
}

fn graph(ts: &TaskSet, args: &StageArgs) -> Result<DependencyGraph, CliError> {
    let (inst, _) = reduce(ts, args.reduction)?;
    let (sched, _) = solve_shop(&inst, &parse_solver(&args.solver, args.seed)?);
    DependencyGraph::from_schedule(ts, &inst, &sched).map_err(|e| CliError::stage("graph", e))
}

fn parse_levels(spec: &str) -> Result<Vec<u32>, CliError> {
    let bad = || CliError::Validation(format!("bad levels {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let n: Vec<u32> = parts.iter().map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        if n[2] == 0 || n[0] > n[1] {
            return Err(bad());
        }
        return Ok((n[0]..=n[1]).step_by(n[2] as usize).collect());
    }
    spec.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn git_revision() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status.success().then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, seed, level, out } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| CliError::stage("read", e))?;
                    serde_json::from_str::<GenConfig>(&text).map_err(|e| CliError::Validation(e.to_string()))?
                }
                None => GenConfig::standard(4, 4, (0.05, 0.10), ReleaseModel::FrameBased),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(l) = level {
                cfg.utilization_percent = l;
            }
            let ts = generate_taskset(&cfg).map_err(|e| CliError::stage("generate", e))?;
            write_out(out.as_deref(), &ts.to_json())
        }
        Command::Validate { taskset } => {
            read_taskset(&taskset)?;
            println!("ok");
            Ok(())
        }
        Command::Reduce(args) => {
            let ts = read_taskset(&args.taskset)?;
            let (inst, _) = reduce(&ts, args.reduction)?;
            write_out(args.out.as_deref(), &inst.to_json())
        }
        Command::Solve(args) => {
            let ts = read_taskset(&args.taskset)?;
            let (inst, _) = reduce(&ts, args.reduction)?;
            let (sched, status) = solve_shop(&inst, &parse_solver(&args.solver, args.seed)?);
            eprintln!("objective {} ({status:?})", sched.objective);
            let text = serde_json::to_string_pretty(&sched).map_err(|e| CliError::stage("solve", e))?;
            write_out(args.out.as_deref(), &text)
        }
        Command::Graph(args) => {
            let ts = read_taskset(&args.taskset)?;
            let g = graph(&ts, &args)?;
            write_out(args.out.as_deref(), &g.to_dot())
        }
        Command::Schedule { stage, policy, cs_mode } => {
            let ts = read_taskset(&stage.taskset)?;
            let (_, reduction) = reduce(&ts, stage.reduction)?;
            let options = PipelineOptions {
                reduction: Some(reduction),
                solver: parse_solver(&stage.solver, stage.seed)?,
                policy: match policy {
                    PolicyArg::Ledf => Policy::ListEdf,
                    PolicyArg::Pedf => Policy::PartitionedEdf,
                },
                cs_mode: match cs_mode {
                    CsModeArg::P => CsMode::Preemptive,
                    CsModeArg::Np => CsMode::NonPreemptive,
                },
            };
            let row = run_pipeline(&ts, &options).map_err(|e| CliError::Stage(e.to_string()))?;
            eprintln!(
                "{} objective {} len(G) {}",
                if row.schedulable { "schedulable" } else { "unschedulable" },
                row.objective,
                row.graph_length
            );
            write_out(stage.out.as_deref(), &row.trace.to_csv())
        }
        Command::Tickets(args) => {
            let ts = read_taskset(&args.taskset)?;
            let g = graph(&ts, &args)?;
            write_out(args.out.as_deref(), &build_ticket_table(&ts, &g).to_json())
        }
        Command::Sweep { config, seed, levels, replicates, policy, solver, jobs, out } => {
            let generator = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| CliError::stage("read", e))?;
                    serde_json::from_str::<GenConfig>(&text).map_err(|e| CliError::Validation(e.to_string()))?
                }
                None => GenConfig::standard(4, 4, (0.05, 0.10), ReleaseModel::FrameBased),
            };
            let variants = policy
                .split(',')
                .map(|v| v.trim().parse::<Variant>().map_err(CliError::Validation))
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = SweepConfig {
                generator,
                levels: parse_levels(&levels)?,
                replicates,
                master_seed: seed,
                variants,
                solver: parse_solver(&solver, seed)?,
                jobs,
            };
            let rows = acceptance_sweep(&cfg).map_err(|e| CliError::stage("sweep", e))?;
            fs::create_dir_all(&out).map_err(|e| CliError::stage("write", e))?;
            write_out(Some(&out.join("results.csv")), &sweep_csv(&rows))?;
            write_out(Some(&out.join("manifest.json")), &SweepManifest::new(&cfg, git_revision()).to_json())?;
            print!("{}", sweep_csv(&rows));
            Ok(())
        }
        Command::OracleCorpus { seed, count, periodic_count, out } => {
            fs::create_dir_all(&out).map_err(|e| CliError::stage("write", e))?;
            let frame = serde_json::to_string_pretty(&generate_corpus(seed, count))
                .map_err(|e| CliError::stage("oracle", e))?;
            let periodic = serde_json::to_string_pretty(&generate_periodic_corpus(seed, periodic_count))
                .map_err(|e| CliError::stage("oracle", e))?;
            write_out(Some(&out.join("corpus.json")), &(frame + "\n"))?;
            write_out(Some(&out.join("periodic_corpus.json")), &(periodic + "\n"))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("invalid input:\n{msg}");
            ExitCode::from(2)
        }
        Err(CliError::Stage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
