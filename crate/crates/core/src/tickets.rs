//! Runtime ticket tables that enforce a dependency graph's resource order.
//!
//! Every critical section of one hyper-period gets its position in its
//! resource chain. At run time a semaphore grants its resource only to the
//! request whose position equals the semaphore's serving ticket.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depgraph::{DependencyGraph, VertexKey};
use crate::taskmodel::TaskSet;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TicketError {
    #[error("index {index} is outside the order region of length {limit}")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("task has no jobs in the hyper-period")]
    NoJobs,
}

/// Per-task runtime parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTickets {
    pub total_jobs: usize,
    /// Critical sections per job.
    pub total_cs: usize,
    /// `total_jobs × total_cs` orders, then one critical-section count per
    /// resource.
    pub job_order: Vec<usize>,
    pub current_cs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketTable {
    pub tasks: Vec<TaskTickets>,
    /// Critical sections per resource in one hyper-period.
    pub num_cs: Vec<usize>,
}

impl TicketTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ticket table serializes")
    }
}

/// Reads each critical section's position off the graph's resource chains.
pub fn build_ticket_table(ts: &TaskSet, g: &DependencyGraph) -> TicketTable {
    let mut order = vec![0usize; g.len()];
    for chain in &g.resource_chains {
        for (k, &v) in chain.iter().enumerate() {
            order[v] = k;
        }
    }
    let num_cs: Vec<usize> = g.resource_chains.iter().map(Vec::len).collect();
    let mut per_task: Vec<Vec<usize>> = vec![Vec::new(); ts.tasks.len()];
    let mut jobs = vec![0usize; ts.tasks.len()];
    for (v, vx) in g.vertices.iter().enumerate() {
        let i = vx.key.task;
        jobs[i] = jobs[i].max(vx.key.occurrence + 1);
        if vx.resource.is_some() {
            per_task[i].push(order[v]);
        }
    }
    let tasks = per_task
        .into_iter()
        .enumerate()
        .map(|(i, mut job_order)| {
            job_order.extend_from_slice(&num_cs);
            TaskTickets { total_jobs: jobs[i], total_cs: ts.tasks[i].num_critical(), job_order, current_cs: 0 }
        })
        .collect();
    TicketTable { tasks, num_cs }
}

/// Position of critical section `current_cs` of job `job_no` in its
/// resource order.
pub fn get_cs_order(entry: &TaskTickets, job_no: u64, current_cs: usize) -> Result<usize, TicketError> {
    if entry.total_jobs == 0 {
        return Err(TicketError::NoJobs);
    }
    let current_jobno = (job_no % entry.total_jobs as u64) as usize;
    let index = current_jobno * entry.total_cs + current_cs;
    let limit = entry.total_jobs * entry.total_cs;
    if index >= limit || current_cs >= entry.total_cs {
        return Err(TicketError::IndexOutOfRange { index, limit });
    }
    Ok(entry.job_order[index])
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    /// Tasks still have work but none can proceed.
    #[error("deadlock with tasks {blocked:?} blocked")]
    Deadlock { blocked: Vec<usize> },
    /// Grants on a resource departed from its chain.
    #[error("resource {resource} grant {position}: expected {expected:?}, got {got:?}")]
    OrderMismatch { resource: usize, position: usize, expected: VertexKey, got: VertexKey },
    #[error(transparent)]
    Ticket(#[from] TicketError),
}

/// A waiting request: `(round, order, task)`. The queue is sorted so its
/// head is the next ticket to be served, with earlier hyper-periods first.
type Waiter = (u64, usize, usize);

#[derive(Default)]
struct Semaphore {
    owner: Option<usize>,
    serving_ticket: usize,
    wait_queue: BTreeSet<Waiter>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Ready,
    Waiting,
    Holding,
    Done,
}

/// Replays the semaphore protocol over `rounds` hyper-periods with every
/// task running its segments in order and the steps of different tasks
/// interleaved at random. Each task's `job_no` starts at a random multiple
/// of its job count. Returns the number of grants on success.
pub fn replay<R: Rng>(
    ts: &TaskSet,
    g: &DependencyGraph,
    table: &TicketTable,
    rounds: u64,
    rng: &mut R,
) -> Result<usize, ReplayError> {
    let n = ts.tasks.len();
    let mut sems: Vec<Semaphore> = (0..ts.resources).map(|_| Semaphore::default()).collect();
    let offset: Vec<u64> = table.tasks.iter().map(|t| rng.random_range(0..1000) * t.total_jobs as u64).collect();
    // Jobs completed so far, current segment, and the task's runtime state.
    let mut done_jobs = vec![0u64; n];
    let mut seg = vec![0usize; n];
    let mut current_cs = vec![0usize; n];
    let mut phase: Vec<Phase> = (0..n)
        .map(|i| {
            if table.tasks[i].total_jobs == 0 || ts.tasks[i].segments.is_empty() {
                Phase::Done
            } else {
                Phase::Ready
            }
        })
        .collect();
    let mut granted: Vec<usize> = vec![0; ts.resources];
    let mut grants = 0usize;

    let total_jobs = |i: usize| table.tasks[i].total_jobs as u64;
    let round_of = |i: usize, done: u64| done / total_jobs(i);

    loop {
        let runnable: Vec<usize> = (0..n).filter(|&i| matches!(phase[i], Phase::Ready | Phase::Holding)).collect();
        let Some(&i) = runnable.choose(rng) else {
            let blocked: Vec<usize> = (0..n).filter(|&i| phase[i] == Phase::Waiting).collect();
            if blocked.is_empty() {
                return Ok(grants);
            }
            return Err(ReplayError::Deadlock { blocked });
        };
        let job_no = offset[i] + done_jobs[i];
        let segment = &ts.tasks[i].segments[seg[i]];
        match (phase[i], segment.resource) {
            (Phase::Ready, None) => {}
            (Phase::Ready, Some(z)) => {
                let order = get_cs_order(&table.tasks[i], job_no, current_cs[i]).map_err(ReplayError::Ticket)?;
                let s = &mut sems[z];
                if s.owner.is_none() && s.serving_ticket == order {
                    s.owner = Some(i);
                    phase[i] = Phase::Holding;
                    check_grant(g, &mut granted, z, i, job_no, seg[i], table)?;
                    grants += 1;
                } else {
                    s.wait_queue.insert((round_of(i, done_jobs[i]), order, i));
                    phase[i] = Phase::Waiting;
                }
                continue;
            }
            (Phase::Holding, Some(z)) => {
                current_cs[i] += 1;
                if current_cs[i] == table.tasks[i].total_cs {
                    current_cs[i] = 0;
                }
                let s = &mut sems[z];
                s.serving_ticket += 1;
                if s.serving_ticket == table.num_cs[z] {
                    s.serving_ticket = 0;
                }
                s.owner = None;
                if let Some(&head) = s.wait_queue.first() {
                    if head.1 == s.serving_ticket {
                        s.wait_queue.pop_first();
                        let next = head.2;
                        s.owner = Some(next);
                        phase[next] = Phase::Holding;
                        let next_job = offset[next] + done_jobs[next];
                        check_grant(g, &mut granted, z, next, next_job, seg[next], table)?;
                        grants += 1;
                    }
                }
                phase[i] = Phase::Ready;
            }
            _ => unreachable!("only ready or holding tasks are runnable"),
        }
        // The segment of task `i` has completed.
        seg[i] += 1;
        if seg[i] == ts.tasks[i].segments.len() {
            seg[i] = 0;
            done_jobs[i] += 1;
            if done_jobs[i] == rounds * total_jobs(i) {
                phase[i] = Phase::Done;
            }
        }
    }
}

fn check_grant(
    g: &DependencyGraph,
    granted: &mut [usize],
    z: usize,
    task: usize,
    job_no: u64,
    segment: usize,
    table: &TicketTable,
) -> Result<(), ReplayError> {
    let chain = &g.resource_chains[z];
    let position = granted[z] % chain.len();
    let expected = g.vertices[chain[position]].key;
    let occurrence = (job_no % table.tasks[task].total_jobs as u64) as usize;
    let got = VertexKey { task, occurrence, segment };
    granted[z] += 1;
    if got != expected {
        return Err(ReplayError::OrderMismatch { resource: z, position, expected, got });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskmodel::{ReleaseModel, Segment, Task};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn key(task: usize, occurrence: usize, segment: usize) -> VertexKey {
        VertexKey { task, occurrence, segment }
    }

    /// Five tasks on two resources: four with period 25, one with period 50.
    /// Tasks 1 and 2 use resource 0 then 1, tasks 3, 4 and 5 the reverse.
    fn five_task_example() -> (TaskSet, DependencyGraph) {
        let shape = |first: usize, second: usize, period| {
            Task::new(
                vec![
                    Segment::non_critical(1),
                    Segment::critical(1, first),
                    Segment::non_critical(1),
                    Segment::critical(1, second),
                    Segment::non_critical(1),
                ],
                period,
                period,
            )
        };
        let ts = TaskSet::new(
            2,
            2,
            ReleaseModel::PeriodicSynchronous,
            vec![shape(0, 1, 25), shape(0, 1, 25), shape(1, 0, 25), shape(1, 0, 25), shape(1, 0, 50)],
        );
        // Orders chosen so the table reproduces the published example.
        let r0 = vec![
            key(1, 0, 1),
            key(0, 0, 1),
            key(3, 0, 3),
            key(2, 0, 3),
            key(4, 0, 3),
            key(1, 1, 1),
            key(0, 1, 1),
            key(3, 1, 3),
            key(2, 1, 3),
        ];
        let r1 = vec![
            key(3, 0, 1),
            key(2, 0, 1),
            key(1, 0, 3),
            key(0, 0, 3),
            key(4, 0, 1),
            key(3, 1, 1),
            key(2, 1, 1),
            key(1, 1, 3),
            key(0, 1, 3),
        ];
        let g = DependencyGraph::new(&ts, &[r0, r1]).unwrap();
        g.topological_order().unwrap();
        (ts, g)
    }

    #[test]
    fn reproduces_published_table() {
        let (ts, g) = five_task_example();
        let t = build_ticket_table(&ts, &g);
        assert_eq!(t.num_cs, vec![9, 9]);
        let rows: Vec<(usize, usize, Vec<usize>)> =
            t.tasks.iter().map(|e| (e.total_jobs, e.total_cs, e.job_order.clone())).collect();
        assert_eq!(
            rows,
            vec![
                (2, 2, vec![1, 3, 6, 8, 9, 9]),
                (2, 2, vec![0, 2, 5, 7, 9, 9]),
                (2, 2, vec![1, 3, 6, 8, 9, 9]),
                (2, 2, vec![0, 2, 5, 7, 9, 9]),
                (1, 2, vec![4, 4, 9, 9]),
            ]
        );
        for e in &t.tasks {
            assert_eq!(e.job_order.len(), e.total_jobs * e.total_cs + ts.resources);
            assert_eq!(e.current_cs, 0);
        }
    }

    #[test]
    fn worked_lookup() {
        let (ts, g) = five_task_example();
        let t = build_ticket_table(&ts, &g);
        assert_eq!(get_cs_order(&t.tasks[0], 13, 1), Ok(8));
        assert_eq!(get_cs_order(&t.tasks[1], 5, 0), Ok(5));
        assert_eq!(get_cs_order(&t.tasks[0], 0, 0), Ok(1));
        assert_eq!(
            get_cs_order(&t.tasks[0], 1, 2),
            Err(TicketError::IndexOutOfRange { index: 4, limit: 4 })
        );
    }

    #[test]
    fn single_critical_section() {
        let ts = TaskSet::new(1, 1, ReleaseModel::FrameBased, vec![Task::new(vec![Segment::critical(2, 0)], 5, 5)]);
        let g = DependencyGraph::new(&ts, &[vec![key(0, 0, 0)]]).unwrap();
        let t = build_ticket_table(&ts, &g);
        assert_eq!(t.tasks[0].job_order, vec![0, 1]);
    }

    #[test]
    fn orders_are_a_bijection_per_resource() {
        let (ts, g) = five_task_example();
        let t = build_ticket_table(&ts, &g);
        for z in 0..ts.resources {
            let mut seen: Vec<usize> = Vec::new();
            for vx in &g.vertices {
                if vx.resource == Some(z) {
                    let e = &t.tasks[vx.key.task];
                    let c = ts.tasks[vx.key.task].critical_sections().position(|(s, _)| s == vx.key.segment).unwrap();
                    seen.push(get_cs_order(e, vx.key.occurrence as u64, c).unwrap());
                }
            }
            seen.sort_unstable();
            assert_eq!(seen, (0..t.num_cs[z]).collect::<Vec<_>>());
        }
    }

    #[test]
    fn replay_follows_chains() {
        let (ts, g) = five_task_example();
        let t = build_ticket_table(&ts, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert_eq!(replay(&ts, &g, &t, 3, &mut rng), Ok(54));
        }
    }

    #[test]
    fn json_uses_table_field_names() {
        let (ts, g) = five_task_example();
        let json = build_ticket_table(&ts, &g).to_json();
        for field in ["total_jobs", "total_cs", "job_order", "current_cs", "num_cs"] {
            assert!(json.contains(field), "{field}");
        }
    }
}
