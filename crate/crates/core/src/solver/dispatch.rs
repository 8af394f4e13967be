//! Priority-rule dispatching.

use serde::{Deserialize, Serialize};

use crate::jobshop::{JobShopInstance, OpId};
use crate::time::Time;

use super::{objective, ShopSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DispatchRule {
    /// Job with the earliest absolute deadline; jobs without one go last.
    EarliestDeadlineFirst,
    /// Job with the most work left, gaps and tail included.
    MostWorkRemaining,
    LongestProcessingTime,
    /// Operation that became ready first.
    Fifo,
}

impl DispatchRule {
    pub const ALL: [DispatchRule; 4] = [
        DispatchRule::EarliestDeadlineFirst,
        DispatchRule::MostWorkRemaining,
        DispatchRule::LongestProcessingTime,
        DispatchRule::Fifo,
    ];
}

/// Builds an active schedule: at each step the machine whose next
/// operation could finish earliest is selected, and among the operations
/// competing for it the rule picks one. Ties fall back to job index, then
/// position.
pub fn solve_dispatch(inst: &JobShopInstance, rule: DispatchRule) -> ShopSchedule {
    let n_jobs = inst.jobs.len();
    // Work from each position to the job's completion.
    let remaining: Vec<Vec<Time>> = inst
        .jobs
        .iter()
        .map(|job| {
            let mut acc = job.tail;
            let mut rem = vec![0; job.operations.len()];
            for p in (0..job.operations.len()).rev() {
                acc += job.operations[p].processing;
                rem[p] = acc;
                acc += job.operations[p].min_gap_after_prev;
            }
            rem
        })
        .collect();

    let mut next = vec![0usize; n_jobs];
    let mut ready: Vec<Time> = inst.jobs.iter().map(|j| j.release).collect();
    let mut done_at: Vec<Option<Time>> = vec![None; n_jobs];
    let mut machine_free = vec![0 as Time; inst.machines];
    let mut starts: Vec<Vec<Time>> = inst.jobs.iter().map(|j| vec![0; j.operations.len()]).collect();

    for (j, job) in inst.jobs.iter().enumerate() {
        if job.operations.is_empty() {
            done_at[j] = Some(job.release + job.tail);
        }
    }

    loop {
        let mut candidates: Vec<(OpId, Time, Time)> = Vec::new();
        for (j, job) in inst.jobs.iter().enumerate() {
            let p = next[j];
            if p >= job.operations.len() {
                continue;
            }
            let mut r = ready[j];
            if p == 0 {
                if let Some(a) = job.after_job {
                    match done_at[a] {
                        Some(t) => r = r.max(t),
                        None => continue,
                    }
                }
            }
            let op = &job.operations[p];
            let est = r.max(machine_free[op.machine]);
            candidates.push((OpId { job: j, pos: p }, r, est));
        }
        if candidates.is_empty() {
            break;
        }
        let (&(star, _, _), star_ect) = candidates
            .iter()
            .map(|c| (c, c.2 + inst.op(c.0).processing))
            .min_by_key(|&(c, ect)| (ect, inst.op(c.0).machine, c.0))
            .expect("non-empty");
        let m = inst.op(star).machine;
        let conflict = candidates
            .iter()
            .filter(|c| inst.op(c.0).machine == m && (c.2 < star_ect || c.0 == star))
            .min_by_key(|c| {
                let id = c.0;
                let key: i128 = match rule {
                    DispatchRule::EarliestDeadlineFirst => inst.jobs[id.job]
                        .abs_deadline
                        .map_or(i128::MAX, i128::from),
                    DispatchRule::MostWorkRemaining => -i128::from(remaining[id.job][id.pos]),
                    DispatchRule::LongestProcessingTime => -i128::from(inst.op(id).processing),
                    DispatchRule::Fifo => i128::from(c.1),
                };
                (key, id)
            })
            .copied()
            .expect("selected operation is in its own conflict set");
        let (id, _, est) = conflict;
        let op = inst.op(id);
        starts[id.job][id.pos] = est;
        let end = est + op.processing;
        machine_free[m] = end;
        next[id.job] += 1;
        let job = &inst.jobs[id.job];
        if next[id.job] < job.operations.len() {
            ready[id.job] = end + job.operations[next[id.job]].min_gap_after_prev;
        } else {
            done_at[id.job] = Some(end + job.tail);
        }
    }

    let mut sched = ShopSchedule { starts, objective: 0 };
    sched.objective = objective(inst, &sched).expect("valid instance");
    sched
}
