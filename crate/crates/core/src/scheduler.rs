//! Event-driven multiprocessor simulation of dependency graphs.
//!
//! Segments execute for exactly their WCET. A segment is eligible once its
//! job is released and both its task predecessor and its resource-chain
//! predecessor have completed. At every event (completion or release) the
//! eligible segments with the earliest absolute sub-job deadlines run;
//! a critical section that has started is never preempted in
//! [`CsMode::NonPreemptive`]. Because a resource chain is a total order, at
//! most one critical section per resource is ever eligible, so mutual
//! exclusion follows from precedence.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depgraph::{DependencyGraph, Vertex, VertexKey};
use crate::taskmodel::{Rational, ReleaseModel, TaskSet};
use crate::time::Time;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CsMode {
    /// Any running segment may be preempted at an event.
    Preemptive,
    /// Critical sections run to completion once started.
    NonPreemptive,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedError {
    #[error("makespan is only defined for frame-based schedules")]
    NotFrameBased,
}

/// Relative deadline of every segment, indexed `[task][segment]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubJobDeadlines {
    pub relative: Vec<Vec<Time>>,
}

impl SubJobDeadlines {
    pub fn absolute(&self, v: &Vertex) -> Time {
        v.release + self.relative[v.key.task][v.key.segment]
    }
}

/// Each segment's deadline is the job deadline minus the work that still
/// follows it in the task, so deadlines grow along the chain and the last
/// segment gets the job deadline.
pub fn assign_subjob_deadlines(ts: &TaskSet) -> SubJobDeadlines {
    let relative = ts
        .tasks
        .iter()
        .map(|task| {
            let mut after: Time = 0;
            let mut out = vec![0; task.segments.len()];
            for (j, seg) in task.segments.iter().enumerate().rev() {
                out[j] = task.deadline.saturating_sub(after);
                after += seg.wcet;
            }
            out
        })
        .collect();
    SubJobDeadlines { relative }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub processor: usize,
    pub start: Time,
    pub end: Time,
    /// Vertex index in the graph.
    pub vertex: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiprocSchedule {
    pub processors: usize,
    pub release_model: ReleaseModel,
    pub hyperperiod: Time,
    /// Sorted by processor, then start.
    pub events: Vec<Event>,
    /// Completion time per vertex.
    pub completion: Vec<Time>,
    pub vertices: Vec<Vertex>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JobMiss {
    pub task: usize,
    pub occurrence: usize,
    pub completion: Time,
    pub deadline: Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Schedulable,
    /// The earliest-deadline job that misses, or one that runs past the
    /// hyper-period boundary.
    Miss(JobMiss),
}

impl Verdict {
    pub fn is_schedulable(&self) -> bool {
        matches!(self, Verdict::Schedulable)
    }
}

impl MultiprocSchedule {
    /// Maximum completion over all segments.
    pub fn makespan(&self) -> Result<Time, SchedError> {
        if self.release_model != ReleaseModel::FrameBased {
            return Err(SchedError::NotFrameBased);
        }
        Ok(self.completion.iter().copied().max().unwrap_or(0))
    }

    /// Segment running on `processor` during `[t, t + 1)`.
    pub fn at(&self, t: Time, processor: usize) -> Option<VertexKey> {
        self.events
            .iter()
            .find(|e| e.processor == processor && e.start <= t && t < e.end)
            .map(|e| self.vertices[e.vertex].key)
    }

    /// Completion time of each job, keyed by `(task, occurrence)`.
    pub fn job_completions(&self) -> Vec<(VertexKey, Time, Time)> {
        let mut out: Vec<(VertexKey, Time, Time)> = Vec::new();
        for (v, vx) in self.vertices.iter().enumerate() {
            let last = self
                .vertices
                .get(v + 1)
                .is_none_or(|n| (n.key.task, n.key.occurrence) != (vx.key.task, vx.key.occurrence));
            if last {
                out.push((vx.key, self.completion[v], vx.job_deadline));
            }
        }
        out
    }

    /// Every job must complete by its deadline, and nothing may run past the
    /// hyper-period, since the table is repeated verbatim.
    pub fn check_schedulability(&self) -> Verdict {
        let miss = self
            .job_completions()
            .into_iter()
            .filter(|&(_, c, d)| c > d || c > self.hyperperiod)
            .min_by_key(|&(k, _, d)| (d, k.task, k.occurrence));
        match miss {
            None => Verdict::Schedulable,
            Some((k, completion, deadline)) => Verdict::Miss(JobMiss {
                task: k.task,
                occurrence: k.occurrence,
                completion,
                deadline,
            }),
        }
    }

    /// Trace rows `processor,start,end,task,occurrence,segment,resource`,
    /// one-based task and segment numbers, blank resource for non-critical.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["processor", "start", "end", "task", "occurrence", "segment", "resource"])
            .expect("in-memory write");
        for e in &self.events {
            let v = &self.vertices[e.vertex];
            w.write_record([
                e.processor.to_string(),
                e.start.to_string(),
                e.end.to_string(),
                (v.key.task + 1).to_string(),
                (v.key.occurrence + 1).to_string(),
                (v.key.segment + 1).to_string(),
                v.resource.map(|r| r.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Task-to-processor assignment from worst-fit partitioning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub processor_of: Vec<usize>,
    pub loads: Vec<Rational>,
}

/// Tasks in decreasing utilization (ties: lower index first) go to the
/// processor with the least assigned utilization (ties: lower index).
pub fn worst_fit_partition(ts: &TaskSet) -> Partition {
    let m = ts.processors.max(1);
    let mut order: Vec<usize> = (0..ts.tasks.len()).collect();
    order.sort_by(|&a, &b| ts.tasks[b].utilization().cmp(&ts.tasks[a].utilization()).then(a.cmp(&b)));
    let mut loads = vec![Rational::from_integer(0); m];
    let mut processor_of = vec![0; ts.tasks.len()];
    for i in order {
        let p = (0..m).min_by(|&x, &y| loads[x].cmp(&loads[y]).then(x.cmp(&y))).expect("m >= 1");
        processor_of[i] = p;
        loads[p] += ts.tasks[i].utilization();
    }
    Partition { processor_of, loads }
}

/// Semi-partitioned LIST-EDF: any segment may run on any processor.
pub fn list_edf(ts: &TaskSet, g: &DependencyGraph, deadlines: &SubJobDeadlines, mode: CsMode) -> MultiprocSchedule {
    let sched = simulate(ts, g, deadlines, mode, None);
    debug_assert_eq!(audit(&sched, g, true), Vec::<AuditViolation>::new());
    #[cfg(debug_assertions)]
    if ts.release_model == ReleaseModel::FrameBased {
        if let Ok(len) = g.critical_path_length() {
            let m = ts.processors as u128;
            let lhs = u128::from(sched.makespan().unwrap_or(0)) * m;
            let rhs = u128::from(len) * m + u128::from(ts.total_wcet());
            assert!(lhs <= rhs, "list scheduling bound violated: {lhs} > {rhs}");
        }
    }
    sched
}

/// Partitioned EDF: tasks are bound to processors by worst-fit; precedence
/// across processors is still honoured.
pub fn p_edf(ts: &TaskSet, g: &DependencyGraph, deadlines: &SubJobDeadlines, mode: CsMode) -> MultiprocSchedule {
    let part = worst_fit_partition(ts);
    let sched = simulate(ts, g, deadlines, mode, Some(&part.processor_of));
    debug_assert_eq!(audit(&sched, g, false), Vec::<AuditViolation>::new());
    sched
}

fn simulate(
    ts: &TaskSet,
    g: &DependencyGraph,
    deadlines: &SubJobDeadlines,
    mode: CsMode,
    affinity: Option<&[usize]>,
) -> MultiprocSchedule {
    let n = g.len();
    let m = ts.processors.max(1);
    let succ = g.successors();
    let prio = |v: usize| {
        let vx = &g.vertices[v];
        (deadlines.absolute(vx), vx.key.task, vx.key.occurrence, vx.key.segment, v)
    };
    let mut waiting: Vec<usize> = (0..n).map(|v| g.predecessors(v).count()).collect();
    let mut remaining: Vec<Time> = g.vertices.iter().map(|v| v.wcet).collect();
    let mut completion = vec![0; n];
    let mut ready = BTreeSet::new();
    let mut unreleased: Vec<usize> = (0..n).filter(|&v| waiting[v] == 0).collect();
    unreleased.sort_by_key(|&v| std::cmp::Reverse((g.vertices[v].release, v)));
    let mut running: Vec<Option<usize>> = vec![None; m];
    let mut open: Vec<Option<Event>> = vec![None; m];
    let mut events = Vec::new();
    let mut t: Time = 0;

    loop {
        while unreleased.last().is_some_and(|&v| g.vertices[v].release <= t) {
            let v = unreleased.pop().expect("checked");
            ready.insert(prio(v));
        }

        // Choose what runs on each processor from t on.
        let mut next: Vec<Option<usize>> = vec![None; m];
        let mut taken = BTreeSet::new();
        for p in 0..m {
            if let Some(v) = running[p] {
                if mode == CsMode::NonPreemptive && g.vertices[v].resource.is_some() {
                    next[p] = Some(v);
                    taken.insert(v);
                }
            }
        }
        match affinity {
            None => {
                let free = next.iter().filter(|x| x.is_none()).count();
                let chosen: Vec<usize> = ready
                    .iter()
                    .map(|k| k.4)
                    .filter(|v| !taken.contains(v))
                    .take(free)
                    .collect();
                let mut newcomers = Vec::new();
                for v in chosen {
                    match running.iter().position(|&r| r == Some(v)) {
                        Some(p) if next[p].is_none() => next[p] = Some(v),
                        _ => newcomers.push(v),
                    }
                }
                let mut slots = (0..m).filter(|&p| next[p].is_none()).collect::<Vec<_>>().into_iter();
                for v in newcomers {
                    let p = slots.next().expect("enough free processors");
                    next[p] = Some(v);
                }
            }
            Some(proc_of) => {
                for p in 0..m {
                    if next[p].is_none() {
                        next[p] = ready.iter().map(|k| k.4).find(|&v| proc_of[g.vertices[v].key.task] == p);
                    }
                }
            }
        }

        // Close or open trace events where the assignment changes.
        for p in 0..m {
            if running[p] != next[p] {
                if let Some(e) = open[p].take() {
                    if t > e.start {
                        events.push(Event { end: t, ..e });
                    }
                }
                if let Some(v) = next[p] {
                    open[p] = Some(Event { processor: p, start: t, end: t, vertex: v });
                }
            }
        }
        running = next;

        let next_completion = running.iter().flatten().map(|&v| t + remaining[v]).min();
        let next_release = unreleased.last().map(|&v| g.vertices[v].release);
        let Some(t_next) = [next_completion, next_release].into_iter().flatten().min() else {
            break;
        };
        let dt = t_next - t;
        for &v in running.iter().flatten() {
            remaining[v] -= dt;
        }
        t = t_next;

        for p in 0..m {
            if let Some(v) = running[p] {
                if remaining[v] == 0 {
                    let e = open[p].take().expect("running vertex has an open event");
                    if t > e.start {
                        events.push(Event { end: t, ..e });
                    }
                    running[p] = None;
                    completion[v] = t;
                    ready.remove(&prio(v));
                    for &s in &succ[v] {
                        waiting[s] -= 1;
                        if waiting[s] == 0 {
                            if g.vertices[s].release <= t {
                                ready.insert(prio(s));
                            } else {
                                let pos = unreleased
                                    .partition_point(|&u| (g.vertices[u].release, u) > (g.vertices[s].release, s));
                                unreleased.insert(pos, s);
                            }
                        }
                    }
                }
            }
        }
    }
    events.sort_by_key(|e| (e.processor, e.start));
    MultiprocSchedule {
        processors: m,
        release_model: ts.release_model,
        hyperperiod: g.hyperperiod(),
        events,
        completion,
        vertices: g.vertices.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditViolation {
    WrongExecutedTime { vertex: VertexKey, executed: Time },
    SelfOverlap { vertex: VertexKey },
    ProcessorOverlap { processor: usize, at: Time },
    EarlyStart { vertex: VertexKey },
    MutualExclusion { resource: usize, first: VertexKey, second: VertexKey },
    NotWorkConserving { at: Time, vertex: VertexKey },
    Unfinished { vertex: VertexKey },
}

/// Structural scan of a simulated schedule: exact execution, precedence and
/// release, per-processor and per-resource exclusivity, and optionally work
/// conservation (for global scheduling).
pub fn audit(sched: &MultiprocSchedule, g: &DependencyGraph, work_conserving: bool) -> Vec<AuditViolation> {
    let mut out = Vec::new();
    let n = g.len();
    let key = |v: usize| g.vertices[v].key;
    let mut per_vertex: Vec<Vec<(Time, Time)>> = vec![Vec::new(); n];
    for e in &sched.events {
        per_vertex[e.vertex].push((e.start, e.end));
    }
    let mut first_start = vec![None; n];
    for v in 0..n {
        let iv = &mut per_vertex[v];
        iv.sort();
        let executed: Time = iv.iter().map(|(s, e)| e - s).sum();
        if executed != g.vertices[v].wcet {
            out.push(AuditViolation::WrongExecutedTime { vertex: key(v), executed });
        }
        if iv.windows(2).any(|w| w[1].0 < w[0].1) {
            out.push(AuditViolation::SelfOverlap { vertex: key(v) });
        }
        if let Some(&(_, e)) = iv.last() {
            if e != sched.completion[v] {
                out.push(AuditViolation::Unfinished { vertex: key(v) });
            }
            first_start[v] = Some(iv[0].0);
        }
        let begin = first_start[v].unwrap_or(sched.completion[v]);
        let ready = g.predecessors(v).map(|u| sched.completion[u]).max().unwrap_or(0);
        if begin < ready.max(g.vertices[v].release) {
            out.push(AuditViolation::EarlyStart { vertex: key(v) });
        }
    }
    for p in 0..sched.processors {
        let mut iv: Vec<(Time, Time)> = sched.events.iter().filter(|e| e.processor == p).map(|e| (e.start, e.end)).collect();
        iv.sort();
        if let Some(w) = iv.windows(2).find(|w| w[1].0 < w[0].1) {
            out.push(AuditViolation::ProcessorOverlap { processor: p, at: w[1].0 });
        }
    }
    // A critical section holds its lock from first start to completion.
    let resources = g.resource_chains.len();
    for z in 0..resources {
        let mut held: Vec<(Time, Time, usize)> = (0..n)
            .filter(|&v| g.vertices[v].resource == Some(z) && g.vertices[v].wcet > 0)
            .map(|v| (first_start[v].unwrap_or(sched.completion[v]), sched.completion[v], v))
            .collect();
        held.sort();
        for w in held.windows(2) {
            if w[1].0 < w[0].1 {
                out.push(AuditViolation::MutualExclusion { resource: z, first: key(w[0].2), second: key(w[1].2) });
            }
        }
    }
    if work_conserving {
        let mut points: Vec<Time> = sched.events.iter().flat_map(|e| [e.start, e.end]).collect();
        points.extend(g.vertices.iter().map(|v| v.release));
        points.sort_unstable();
        points.dedup();
        for &t in &points {
            let busy: Vec<usize> = sched.events.iter().filter(|e| e.start <= t && t < e.end).map(|e| e.vertex).collect();
            if busy.len() >= sched.processors {
                continue;
            }
            for v in 0..n {
                let vx = &g.vertices[v];
                let eligible = vx.wcet > 0
                    && vx.release <= t
                    && sched.completion[v] > t
                    && g.predecessors(v).all(|u| sched.completion[u] <= t);
                if eligible && !busy.contains(&v) {
                    out.push(AuditViolation::NotWorkConserving { at: t, vertex: vx.key });
                    break;
                }
            }
        }
    }
    out
}
