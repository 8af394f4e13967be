//! Non-preemptive job-shop solvers for makespan and max-lateness.
//!
//! * [`solve_dispatch`]: Giffler–Thompson style active-schedule generation
//!   driven by a priority rule.
//! * [`improve_local_search`]: iterated adjacent-swap search on the critical
//!   path.
//! * [`solve_exact`]: branch-and-bound over disjunctive pair orientations.

mod disjunctive;
mod dispatch;
mod exact;
mod local_search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jobshop::{JobShopInstance, Objective, OpId};
use crate::time::{signed, Lateness, Time};

pub use disjunctive::{Cycle, DisjunctiveGraph, Orientation};
pub use dispatch::{solve_dispatch, DispatchRule};
pub use exact::{solve_exact, solve_exact_from, ExactLimits, ExactOutcome, ExactResult};
pub use local_search::improve_local_search;

/// Start times of every operation, indexed `[job][position]`, with the
/// objective value they achieve.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShopSchedule {
    pub starts: Vec<Vec<Time>>,
    pub objective: Lateness,
}

impl ShopSchedule {
    pub fn start(&self, id: OpId) -> Time {
        self.starts[id.job][id.pos]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("schedule shape does not match the instance")]
    ShapeMismatch,
    #[error("max-lateness objective requires a deadline on job {0}")]
    MissingDeadline(usize),
    #[error("operation {0:?} starts before its job is released")]
    Release(OpId),
    #[error("operation {0:?} starts before its chain predecessor allows")]
    Chain(OpId),
    #[error("job {0} starts before the job it is chained after completes")]
    JobChain(usize),
    #[error("operations {0:?} and {1:?} overlap on machine {2}")]
    Overlap(OpId, OpId, usize),
}

/// Completion time of a job including its tail.
pub fn job_completion(inst: &JobShopInstance, sched: &ShopSchedule, job: usize) -> Time {
    let j = &inst.jobs[job];
    match j.operations.last() {
        Some(op) => sched.starts[job][j.operations.len() - 1] + op.processing + j.tail,
        None => j.release + j.tail,
    }
}

/// Makespan (including delay-form tails and omitted tasks) or maximum
/// lateness, which may be negative.
pub fn objective(inst: &JobShopInstance, sched: &ShopSchedule) -> Result<Lateness, ScheduleError> {
    if sched.starts.len() != inst.jobs.len() {
        return Err(ScheduleError::ShapeMismatch);
    }
    match inst.objective {
        Objective::Makespan => {
            let jobs = (0..inst.jobs.len()).map(|j| job_completion(inst, sched, j));
            let omitted = inst.omitted.iter().map(|o| o.length);
            Ok(signed(jobs.chain(omitted).max().unwrap_or(0)))
        }
        Objective::MaxLateness => {
            let mut worst = Lateness::MIN;
            for (j, job) in inst.jobs.iter().enumerate() {
                let d = job.abs_deadline.ok_or(ScheduleError::MissingDeadline(j))?;
                worst = worst.max(signed(job_completion(inst, sched, j)) - signed(d));
            }
            Ok(worst)
        }
    }
}

/// Scans a schedule for release, chain and machine-exclusivity violations.
pub fn check_feasible(inst: &JobShopInstance, sched: &ShopSchedule) -> Result<(), ScheduleError> {
    if sched.starts.len() != inst.jobs.len()
        || sched.starts.iter().zip(&inst.jobs).any(|(s, j)| s.len() != j.operations.len())
    {
        return Err(ScheduleError::ShapeMismatch);
    }
    let mut by_machine: Vec<Vec<(Time, Time, OpId)>> = vec![Vec::new(); inst.machines];
    for (j, job) in inst.jobs.iter().enumerate() {
        for (p, op) in job.operations.iter().enumerate() {
            let id = OpId { job: j, pos: p };
            let s = sched.starts[j][p];
            if p == 0 {
                if s < job.release {
                    return Err(ScheduleError::Release(id));
                }
                if let Some(a) = job.after_job {
                    if s < job_completion(inst, sched, a) {
                        return Err(ScheduleError::JobChain(j));
                    }
                }
            } else {
                let prev = &job.operations[p - 1];
                if s < sched.starts[j][p - 1] + prev.processing + op.min_gap_after_prev {
                    return Err(ScheduleError::Chain(id));
                }
            }
            by_machine[op.machine].push((s, s + op.processing, id));
        }
    }
    for (m, ops) in by_machine.iter_mut().enumerate() {
        ops.sort();
        // Zero-length operations occupy no time.
        let mut reach: Option<(Time, OpId)> = None;
        for &(s, e, id) in ops.iter() {
            if e == s {
                continue;
            }
            if let Some((r, other)) = reach {
                if s < r {
                    return Err(ScheduleError::Overlap(other, id, m));
                }
            }
            if reach.is_none_or(|(r, _)| e > r) {
                reach = Some((e, id));
            }
        }
    }
    Ok(())
}

/// Largest machine workload, a lower bound on the makespan.
pub fn machine_workload_bound(inst: &JobShopInstance) -> Time {
    inst.machine_loads().into_iter().max().unwrap_or(0)
}
