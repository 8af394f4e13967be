//! Exhaustive ground truth for tiny instances.
//!
//! Everything here enumerates the full decision space and shares no code
//! with the solvers or the simulator, so it can be used to check them.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jobshop::{reduce_frame_based, JobShopInstance, Objective};
use crate::taskmodel::{ReleaseModel, Segment, Task, TaskSet};
use crate::time::{Lateness, Time};

pub const MAX_SHOP_JOBS: usize = 3;
pub const MAX_SHOP_OPS: usize = 8;
pub const MAX_TASKS: usize = 3;
pub const MAX_SEGMENTS: usize = 10;
pub const MAX_TOTAL_WCET: Time = 48;
pub const MAX_PROCESSORS: usize = 4;
pub const MAX_HYPERPERIOD: Time = 60;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance too large for enumeration: {0}")]
    TooLarge(String),
    #[error("expected a frame-based task set")]
    NotFrameBased,
    #[error("expected a periodic task set")]
    NotPeriodic,
    #[error("instance is malformed: {0}")]
    Malformed(String),
}

fn too_large(what: &str) -> OracleError {
    OracleError::TooLarge(what.to_string())
}

/// Minimum objective over every per-machine operation order, each order
/// evaluated by earliest starts.
pub fn optimal_shop_bruteforce(inst: &JobShopInstance) -> Result<Lateness, OracleError> {
    if inst.jobs.len() > MAX_SHOP_JOBS {
        return Err(too_large("more than 3 jobs"));
    }
    let ops: Vec<(usize, usize)> =
        inst.jobs.iter().enumerate().flat_map(|(j, job)| (0..job.operations.len()).map(move |p| (j, p))).collect();
    if ops.len() > MAX_SHOP_OPS {
        return Err(too_large("more than 8 operations"));
    }
    let mut per_machine: Vec<Vec<(usize, usize)>> = vec![Vec::new(); inst.machines];
    for &(j, p) in &ops {
        let m = inst.jobs[j].operations[p].machine;
        per_machine.get_mut(m).ok_or_else(|| OracleError::Malformed(format!("machine {m} out of range")))?.push((j, p));
    }
    let mut best: Option<Lateness> = None;
    loop {
        if let Some(v) = evaluate_orders(inst, &per_machine) {
            best = Some(best.map_or(v, |b| b.min(v)));
        }
        // Odometer over machines, each advancing its own permutation.
        let mut m = 0;
        while m < per_machine.len() && !next_permutation(&mut per_machine[m]) {
            m += 1;
        }
        if m == per_machine.len() {
            break;
        }
    }
    best.ok_or_else(|| OracleError::Malformed("every order is cyclic".into()))
}

fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut k = v.len() - 1;
    while v[k] <= v[i - 1] {
        k -= 1;
    }
    v.swap(i - 1, k);
    v[i..].reverse();
    true
}

/// Earliest starts under fixed machine orders, or `None` when they form a
/// cycle with the job chains.
fn evaluate_orders(inst: &JobShopInstance, orders: &[Vec<(usize, usize)>]) -> Option<Lateness> {
    let mut machine_pred: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for seq in orders {
        for w in seq.windows(2) {
            machine_pred.insert(w[1], w[0]);
        }
    }
    let mut start: Vec<Vec<Time>> = inst.jobs.iter().map(|j| vec![0; j.operations.len()]).collect();
    let end_of = |start: &Vec<Vec<Time>>, j: usize| -> Time {
        let job = &inst.jobs[j];
        match job.operations.last() {
            Some(op) => start[j][job.operations.len() - 1] + op.processing + job.tail,
            None => job.release + job.tail,
        }
    };
    let total_ops: usize = inst.jobs.iter().map(|j| j.operations.len()).sum();
    let mut stable = false;
    for _ in 0..=total_ops + inst.jobs.len() + 1 {
        let mut changed = false;
        for j in 0..inst.jobs.len() {
            let job = &inst.jobs[j];
            for p in 0..job.operations.len() {
                let op = &job.operations[p];
                let mut t = if p == 0 {
                    let mut r = job.release;
                    if let Some(a) = job.after_job {
                        r = r.max(end_of(&start, a));
                    }
                    r
                } else {
                    start[j][p - 1] + job.operations[p - 1].processing + op.min_gap_after_prev
                };
                if let Some(&(qj, qp)) = machine_pred.get(&(j, p)) {
                    t = t.max(start[qj][qp] + inst.jobs[qj].operations[qp].processing);
                }
                if t != start[j][p] {
                    start[j][p] = t;
                    changed = true;
                }
            }
        }
        if !changed {
            stable = true;
            break;
        }
    }
    if !stable {
        return None;
    }
    let ends = (0..inst.jobs.len()).map(|j| end_of(&start, j));
    match inst.objective {
        Objective::Makespan => {
            let omitted = inst.omitted.iter().map(|o| o.length);
            Some(ends.chain(omitted).max().unwrap_or(0) as Lateness)
        }
        Objective::MaxLateness => inst
            .jobs
            .iter()
            .zip(ends)
            .map(|(job, e)| job.abs_deadline.map(|d| e as Lateness - d as Lateness))
            .collect::<Option<Vec<_>>>()?
            .into_iter()
            .max()
            .or(Some(Lateness::MIN)),
    }
}

fn check_frame(ts: &TaskSet) -> Result<(), OracleError> {
    if ts.release_model != ReleaseModel::FrameBased {
        return Err(OracleError::NotFrameBased);
    }
    check_size(ts)
}

fn check_size(ts: &TaskSet) -> Result<(), OracleError> {
    if ts.tasks.len() > MAX_TASKS {
        return Err(too_large("more than 3 tasks"));
    }
    if ts.tasks.iter().map(|t| t.segments.len()).sum::<usize>() > MAX_SEGMENTS {
        return Err(too_large("more than 10 segments"));
    }
    if ts.total_wcet() > MAX_TOTAL_WCET {
        return Err(too_large("total execution time above 48"));
    }
    if ts.processors == 0 || ts.processors > MAX_PROCESSORS {
        return Err(too_large("processor count outside 1..=4"));
    }
    Ok(())
}

/// Minimum makespan over all schedules in which each segment runs without
/// interruption on some processor, segments of a task run in order, and
/// critical sections of one resource never overlap. Processors may idle
/// deliberately.
pub fn optimal_mmss_makespan_bruteforce(ts: &TaskSet) -> Result<Time, OracleError> {
    check_frame(ts)?;
    let mut memo = HashMap::new();
    let state: Vec<(usize, Time)> = vec![(0, 0); ts.tasks.len()];
    Ok(np_search(ts, state, &mut memo))
}

/// State per task: `(next segment, remaining time of the running one)`;
/// a task with nonzero remaining time is running segment `next`.
fn np_search(ts: &TaskSet, state: Vec<(usize, Time)>, memo: &mut HashMap<Vec<(usize, Time)>, Time>) -> Time {
    if state.iter().zip(&ts.tasks).all(|(&(next, rem), t)| rem == 0 && next == t.segments.len()) {
        return 0;
    }
    if let Some(&v) = memo.get(&state) {
        return v;
    }
    let running: Vec<usize> = (0..state.len()).filter(|&i| state[i].1 > 0).collect();
    let busy: Vec<usize> =
        running.iter().filter_map(|&i| ts.tasks[i].segments[state[i].0].resource).collect();
    let startable: Vec<usize> = (0..state.len())
        .filter(|&i| state[i].1 == 0 && state[i].0 < ts.tasks[i].segments.len())
        .filter(|&i| ts.tasks[i].segments[state[i].0].resource.is_none_or(|z| !busy.contains(&z)))
        .collect();
    let free = ts.processors - running.len();
    let mut best = Time::MAX;
    for mask in 0u32..(1 << startable.len()) {
        let chosen: Vec<usize> = (0..startable.len()).filter(|&b| mask & (1 << b) != 0).map(|b| startable[b]).collect();
        if chosen.len() > free || (chosen.is_empty() && running.is_empty()) {
            continue;
        }
        let mut claimed: Vec<usize> = Vec::new();
        let mut ok = true;
        for &i in &chosen {
            if let Some(z) = ts.tasks[i].segments[state[i].0].resource {
                if claimed.contains(&z) {
                    ok = false;
                }
                claimed.push(z);
            }
        }
        if !ok {
            continue;
        }
        let mut next = state.clone();
        for &i in &chosen {
            next[i].1 = ts.tasks[i].segments[state[i].0].wcet;
        }
        let step = next.iter().filter(|s| s.1 > 0).map(|s| s.1).min().expect("something runs");
        for s in next.iter_mut() {
            if s.1 > 0 {
                s.1 -= step;
                if s.1 == 0 {
                    s.0 += 1;
                }
            }
        }
        let rest = np_search(ts, next, memo);
        best = best.min(step + rest);
    }
    memo.insert(state, best);
    best
}

/// Per task: `(jobs finished, segment, work done on that segment)`.
type UnitState = Vec<(usize, usize, Time)>;

/// Unit-step choices: every integer instant any set of at most `M`
/// eligible segments runs for one tick. A critical section that has
/// started holds its resource until it completes. This contains every
/// preemptive and non-preemptive schedule with integral switching times.
fn unit_step_choices(ts: &TaskSet, state: &UnitState, t: Time, jobs: &[usize]) -> Vec<UnitState> {
    let n = ts.tasks.len();
    let mut held: Vec<usize> = Vec::new();
    for i in 0..n {
        let (j, s, done) = state[i];
        if j < jobs[i] && done > 0 {
            if let Some(z) = ts.tasks[i].segments[s].resource {
                held.push(z);
            }
        }
    }
    let eligible: Vec<usize> = (0..n)
        .filter(|&i| {
            let (j, s, done) = state[i];
            if j >= jobs[i] || (j as Time) * ts.tasks[i].period > t {
                return false;
            }
            match ts.tasks[i].segments[s].resource {
                Some(z) => done > 0 || !held.contains(&z),
                None => true,
            }
        })
        .collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << eligible.len()) {
        let chosen: Vec<usize> = (0..eligible.len()).filter(|&b| mask & (1 << b) != 0).map(|b| eligible[b]).collect();
        if chosen.len() > ts.processors {
            continue;
        }
        let mut claimed: Vec<usize> = Vec::new();
        let mut ok = true;
        for &i in &chosen {
            let (_, s, done) = state[i];
            if let Some(z) = ts.tasks[i].segments[s].resource {
                if done == 0 && claimed.contains(&z) {
                    ok = false;
                }
                claimed.push(z);
            }
        }
        if !ok {
            continue;
        }
        let mut next = state.clone();
        for &i in &chosen {
            let task = &ts.tasks[i];
            let (j, s, done) = next[i];
            let done = done + 1;
            next[i] = if done < task.segments[s].wcet {
                (j, s, done)
            } else if s + 1 < task.segments.len() {
                (j, s + 1, 0)
            } else {
                (j + 1, 0, 0)
            };
        }
        out.push(next);
    }
    out
}

/// Minimum makespan when any segment may be interrupted at integer
/// instants and resume on any processor.
pub fn optimal_mmss_makespan_preemptive(ts: &TaskSet) -> Result<Time, OracleError> {
    check_frame(ts)?;
    let jobs: Vec<usize> = ts.tasks.iter().map(|t| usize::from(!t.segments.is_empty())).collect();
    let start: UnitState = vec![(0, 0, 0); ts.tasks.len()];
    // Breadth-first over time: the first level containing a finished state
    // is the optimum.
    let mut frontier = vec![start];
    let mut t: Time = 0;
    loop {
        if frontier.iter().any(|s| s.iter().zip(&jobs).all(|(&(j, _, _), &n)| j == n)) {
            return Ok(t);
        }
        let mut next: Vec<UnitState> = frontier.iter().flat_map(|s| unit_step_choices(ts, s, t, &jobs)).collect();
        next.sort();
        next.dedup();
        frontier = next;
        t += 1;
        if t > ts.total_wcet() + 1 {
            return Err(OracleError::Malformed("no completion within total work".into()));
        }
    }
}

/// Whether some unit-step schedule completes every job of one hyper-period
/// by its deadline, with jobs of a task executed in release order.
pub fn periodic_feasible_bruteforce(ts: &TaskSet) -> Result<bool, OracleError> {
    if ts.release_model != ReleaseModel::PeriodicSynchronous {
        return Err(OracleError::NotPeriodic);
    }
    if ts.tasks.len() > MAX_TASKS || ts.processors == 0 || ts.processors > MAX_PROCESSORS {
        return Err(too_large("task or processor count"));
    }
    let h = ts.hyperperiod().map_err(|e| OracleError::Malformed(e.to_string()))?;
    if h > MAX_HYPERPERIOD {
        return Err(too_large("hyper-period above 60"));
    }
    let jobs: Vec<usize> = ts
        .tasks
        .iter()
        .map(|t| if t.segments.is_empty() { 0 } else { (h / t.period) as usize })
        .collect();
    let mut frontier: Vec<UnitState> = vec![vec![(0, 0, 0); ts.tasks.len()]];
    for t in 0..=h {
        // A job still unfinished at its deadline has missed it.
        frontier.retain(|s| {
            s.iter().enumerate().all(|(i, &(j, _, _))| {
                j >= jobs[i] || (j as Time) * ts.tasks[i].period + ts.tasks[i].deadline > t
            })
        });
        if frontier.is_empty() {
            return Ok(false);
        }
        if frontier.iter().any(|s| s.iter().zip(&jobs).all(|(&(j, _, _), &n)| j == n)) {
            return Ok(true);
        }
        if t == h {
            break;
        }
        let mut next: Vec<UnitState> = frontier.iter().flat_map(|s| unit_step_choices(ts, s, t, &jobs)).collect();
        next.sort();
        next.dedup();
        frontier = next;
    }
    Ok(false)
}

/// A frame-based instance with its exact optima.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub taskset: TaskSet,
    /// Optimum with non-preemptive segments.
    pub oracle_makespan: Time,
    /// Optimum with unit-step preemption.
    pub oracle_preemptive_makespan: Time,
    /// Optimum of the `Z + n` shop reduction.
    pub oracle_shop_makespan: Time,
}

/// A periodic instance with its exact feasibility.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicCorpusEntry {
    pub taskset: TaskSet,
    pub oracle_feasible: bool,
}

fn random_segments<R: Rng>(rng: &mut R, count: usize, resources: usize, max_wcet: Time) -> Vec<Segment> {
    // Alternate, starting with either kind, so no two non-critical
    // sections are adjacent.
    let mut critical = rng.random_bool(0.5);
    (0..count)
        .map(|_| {
            let wcet = rng.random_range(1..=max_wcet);
            let seg = if critical {
                Segment::critical(wcet, rng.random_range(0..resources))
            } else {
                Segment::non_critical(wcet)
            };
            critical = if critical { rng.random_bool(0.5) } else { true };
            seg
        })
        .collect()
}

/// Frame-based corpus: 1 to 3 tasks, at most 8 segments, WCETs 1 to 4.
/// Deadlines are spread around the optimum so both verdicts occur.
pub fn generate_corpus(seed: u64, count: usize) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = rng.random_range(1..=MAX_TASKS);
        let m = rng.random_range(1..=3);
        let z = rng.random_range(1..=2);
        let mut budget = MAX_SHOP_OPS;
        let mut tasks = Vec::with_capacity(n);
        for i in 0..n {
            let left = n - i - 1;
            let k = rng.random_range(1..=(budget - left).min(4));
            budget -= k;
            tasks.push(Task::new(random_segments(&mut rng, k, z, 4), 1, 1));
        }
        let mut ts = TaskSet::new(m, z, ReleaseModel::FrameBased, tasks);
        ts.resolution_denominator = 1;
        let np = optimal_mmss_makespan_bruteforce(&ts).expect("within guards");
        let d = rng.random_range(np.saturating_sub(2).max(1)..=np + 2);
        for t in &mut ts.tasks {
            t.period = d;
            t.deadline = d;
        }
        debug_assert!(ts.validate().is_empty());
        let shop = reduce_frame_based(&ts).expect("frame-based");
        let shop_opt = optimal_shop_bruteforce(&shop).expect("within guards");
        out.push(CorpusEntry {
            oracle_makespan: np,
            oracle_preemptive_makespan: optimal_mmss_makespan_preemptive(&ts).expect("within guards"),
            oracle_shop_makespan: Time::try_from(shop_opt).expect("non-negative makespan"),
            taskset: ts,
        });
    }
    out
}

/// Periodic corpus: 2 or 3 tasks with periods from {2, 3, 4, 6}.
pub fn generate_periodic_corpus(seed: u64, count: usize) -> Vec<PeriodicCorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = rng.random_range(2..=MAX_TASKS);
        let m = rng.random_range(1..=2);
        let z = rng.random_range(1..=2);
        let tasks: Vec<Task> = (0..n)
            .map(|_| {
                let period: Time = [2, 3, 4, 6][rng.random_range(0..4)];
                let k = rng.random_range(1..=3);
                let segs = random_segments(&mut rng, k, z, 2);
                let deadline = rng.random_range(period.div_ceil(2)..=period);
                Task::new(segs, period, deadline)
            })
            .collect();
        let mut ts = TaskSet::new(m, z, ReleaseModel::PeriodicSynchronous, tasks);
        ts.resolution_denominator = 1;
        if ts.tasks.iter().any(|t| t.wcet() > t.period) {
            continue;
        }
        let oracle_feasible = periodic_feasible_bruteforce(&ts).expect("within guards");
        out.push(PeriodicCorpusEntry { taskset: ts, oracle_feasible });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jobshop::{ShopJob, ShopOperation};
    use crate::solver::{solve_dispatch, DispatchRule};

    fn job(ops: &[(usize, Time)]) -> ShopJob {
        ShopJob::new(ops.iter().map(|&(m, p)| ShopOperation::new(m, p)).collect())
    }

    fn frame(m: usize, z: usize, tasks: Vec<Vec<Segment>>) -> TaskSet {
        TaskSet::new(m, z, ReleaseModel::FrameBased, tasks.into_iter().map(|s| Task::new(s, 100, 100)).collect())
    }

    #[test]
    fn shop_single_machine() {
        let inst = JobShopInstance::new(1, vec![job(&[(0, 3)]), job(&[(0, 5)])]);
        assert_eq!(optimal_shop_bruteforce(&inst), Ok(8));
    }

    #[test]
    fn shop_crossing_jobs() {
        let inst = JobShopInstance::new(2, vec![job(&[(0, 2), (1, 2)]), job(&[(1, 2), (0, 2)])]);
        assert_eq!(optimal_shop_bruteforce(&inst), Ok(4));
    }

    #[test]
    fn shop_not_above_dispatch() {
        let inst = JobShopInstance::new(
            3,
            vec![job(&[(0, 3), (1, 2), (2, 2)]), job(&[(0, 2), (2, 1)]), job(&[(1, 4), (2, 3), (0, 1)])],
        );
        let opt = optimal_shop_bruteforce(&inst).unwrap();
        for rule in DispatchRule::ALL {
            assert!(opt <= solve_dispatch(&inst, rule).objective);
        }
    }

    #[test]
    fn shop_guard() {
        let inst = JobShopInstance::new(1, (0..4).map(|_| job(&[(0, 1)])).collect());
        assert!(matches!(optimal_shop_bruteforce(&inst), Err(OracleError::TooLarge(_))));
    }

    #[test]
    fn permutation_count() {
        let mut v = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut v) {
            count += 1;
        }
        assert_eq!(count, 24);
        assert_eq!(v, vec![0, 1, 2, 3]);
    }

    #[test]
    fn mmss_chain() {
        let ts = frame(2, 1, vec![vec![Segment::non_critical(1), Segment::critical(1, 0), Segment::non_critical(1)]]);
        assert_eq!(optimal_mmss_makespan_bruteforce(&ts), Ok(3));
        assert_eq!(optimal_mmss_makespan_preemptive(&ts), Ok(3));
    }

    #[test]
    fn mmss_mutual_exclusion() {
        let ts = frame(2, 1, vec![vec![Segment::critical(2, 0)], vec![Segment::critical(2, 0)]]);
        assert_eq!(optimal_mmss_makespan_bruteforce(&ts), Ok(4));
        assert_eq!(optimal_mmss_makespan_preemptive(&ts), Ok(4));
    }

    #[test]
    fn mmss_mixed_pair() {
        // Run the first task's section while the second computes: 3.
        let ts = frame(
            2,
            1,
            vec![
                vec![Segment::critical(1, 0), Segment::non_critical(2)],
                vec![Segment::non_critical(2), Segment::critical(1, 0)],
            ],
        );
        assert_eq!(optimal_mmss_makespan_bruteforce(&ts), Ok(3));
    }

    #[test]
    fn preemption_can_help() {
        // One processor is never worse with preemption; with three equal
        // chains on two processors, splitting work balances the load.
        let ts = frame(2, 1, vec![vec![Segment::non_critical(3)], vec![Segment::non_critical(3)], vec![Segment::non_critical(3)]]);
        assert_eq!(optimal_mmss_makespan_bruteforce(&ts), Ok(6));
        assert_eq!(optimal_mmss_makespan_preemptive(&ts), Ok(5));
    }

    #[test]
    fn section_order_matters() {
        // Starting the long section immediately blocks the resource.
        let ts = frame(
            2,
            1,
            vec![
                vec![Segment::critical(4, 0)],
                vec![Segment::critical(1, 0), Segment::non_critical(4)],
            ],
        );
        assert_eq!(optimal_mmss_makespan_bruteforce(&ts), Ok(5));
    }

    #[test]
    fn periodic_feasibility() {
        let mk = |tasks: Vec<Task>| TaskSet::new(1, 1, ReleaseModel::PeriodicSynchronous, tasks);
        let ok = mk(vec![Task::new(vec![Segment::non_critical(1)], 2, 2), Task::new(vec![Segment::non_critical(2)], 4, 4)]);
        assert_eq!(periodic_feasible_bruteforce(&ok), Ok(true));
        let over = mk(vec![Task::new(vec![Segment::non_critical(2)], 2, 2), Task::new(vec![Segment::non_critical(1)], 4, 4)]);
        assert_eq!(periodic_feasible_bruteforce(&over), Ok(false));
        let tight = mk(vec![Task::new(vec![Segment::non_critical(1)], 2, 1), Task::new(vec![Segment::non_critical(1)], 2, 1)]);
        assert_eq!(periodic_feasible_bruteforce(&tight), Ok(false));
    }

    #[test]
    fn corpus_is_deterministic_and_consistent() {
        let a = generate_corpus(5, 6);
        assert_eq!(a, generate_corpus(5, 6));
        for e in &a {
            assert!(e.taskset.validate().is_empty());
            assert!(e.oracle_preemptive_makespan <= e.oracle_makespan);
            assert!(e.oracle_shop_makespan <= e.taskset.total_wcet());
        }
        let p = generate_periodic_corpus(5, 4);
        assert!(p.iter().all(|e| e.taskset.validate().is_empty()));
    }
}
