//! Dependency graphs over segment occurrences.
//!
//! A vertex is one segment of one job of a task. Each task contributes a
//! chain through its segments, and consecutive jobs of a periodic task are
//! chained end-to-start. Each resource contributes one chain that fixes the
//! order in which its critical sections execute. The graph is built from a
//! shop schedule by reading that order off the resource machines, and a
//! shop schedule is recovered from a graph by longest paths.

use std::collections::VecDeque;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::jobshop::{JobShopInstance, MachineRole, OpSource};
use crate::solver::{objective, ShopSchedule};
use crate::taskmodel::{ModelError, ReleaseModel, TaskSet};
use crate::time::Time;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("dependency graph has a cycle: {}", fmt_cycle(.0))]
    Cycle(Vec<VertexKey>),
    #[error("resource {resource} chain is not an ordering of its critical sections")]
    BadChain { resource: usize },
    #[error("schedule does not match the task set: {0}")]
    Mismatch(String),
    #[error("critical sections {0} and {1} of resource {2} start at the same time")]
    SimultaneousStart(VertexKey, VertexKey, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn fmt_cycle(c: &[VertexKey]) -> String {
    c.iter().map(ToString::to_string).collect::<Vec<_>>().join(" -> ")
}

/// Identifies a segment occurrence: task, job occurrence, segment.
pub type VertexKey = OpSource;

impl fmt::Display for OpSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "θ[{},{}]#{}", self.task + 1, self.segment + 1, self.occurrence + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub key: VertexKey,
    pub wcet: Time,
    pub resource: Option<usize>,
    /// Release of the job this segment belongs to.
    pub release: Time,
    /// Absolute deadline of that job.
    pub job_deadline: Time,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyGraph {
    pub vertices: Vec<Vertex>,
    /// Predecessor within the task: previous segment, or the last segment of
    /// the previous job for a job's first segment.
    pub task_pred: Vec<Option<usize>>,
    pub resource_pred: Vec<Option<usize>>,
    /// Per resource, its critical sections in execution order.
    pub resource_chains: Vec<Vec<usize>>,
    /// `first[task][occurrence]` is the index of that job's first vertex.
    first: Vec<Vec<usize>>,
    hyperperiod: Time,
}

impl DependencyGraph {
    /// Graph with the given per-resource orders. Chains must list every
    /// critical section of their resource exactly once; cycles are allowed
    /// here and reported by the path computations.
    pub fn new(ts: &TaskSet, chains: &[Vec<VertexKey>]) -> Result<Self, GraphError> {
        let mut g = Self::skeleton(ts)?;
        if chains.len() != ts.resources {
            return Err(GraphError::Mismatch(format!(
                "{} resource chains for {} resources",
                chains.len(),
                ts.resources
            )));
        }
        for (z, chain) in chains.iter().enumerate() {
            let mut ids = Vec::with_capacity(chain.len());
            for &key in chain {
                let v = g.index(key).ok_or(GraphError::BadChain { resource: z })?;
                if g.vertices[v].resource != Some(z) {
                    return Err(GraphError::BadChain { resource: z });
                }
                ids.push(v);
            }
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            let expected = g.vertices.iter().filter(|v| v.resource == Some(z)).count();
            if sorted.len() != ids.len() || ids.len() != expected {
                return Err(GraphError::BadChain { resource: z });
            }
            for w in ids.windows(2) {
                g.resource_pred[w[1]] = Some(w[0]);
            }
            g.resource_chains[z] = ids;
        }
        Ok(g)
    }

    fn skeleton(ts: &TaskSet) -> Result<Self, GraphError> {
        let hyperperiod = ts.hyperperiod()?;
        let mut vertices = Vec::new();
        let mut task_pred = Vec::new();
        let mut first = Vec::with_capacity(ts.tasks.len());
        for (i, task) in ts.tasks.iter().enumerate() {
            let jobs = ts.jobs_per_hyperperiod(i)? as usize;
            let mut firsts = Vec::with_capacity(jobs);
            let mut prev: Option<usize> = None;
            for occurrence in 0..jobs {
                let release = match ts.release_model {
                    ReleaseModel::FrameBased => 0,
                    ReleaseModel::PeriodicSynchronous => occurrence as Time * task.period,
                };
                firsts.push(vertices.len());
                for (segment, seg) in task.segments.iter().enumerate() {
                    task_pred.push(prev);
                    prev = Some(vertices.len());
                    vertices.push(Vertex {
                        key: VertexKey { task: i, occurrence, segment },
                        wcet: seg.wcet,
                        resource: seg.resource,
                        release,
                        job_deadline: release + task.deadline,
                    });
                }
            }
            first.push(firsts);
        }
        let n = vertices.len();
        Ok(DependencyGraph {
            vertices,
            task_pred,
            resource_pred: vec![None; n],
            resource_chains: vec![Vec::new(); ts.resources],
            first,
            hyperperiod,
        })
    }

    /// Builds the graph whose resource chains follow the execution order on
    /// each resource machine of a feasible shop schedule.
    pub fn from_schedule(ts: &TaskSet, inst: &JobShopInstance, sched: &ShopSchedule) -> Result<Self, GraphError> {
        if sched.starts.len() != inst.jobs.len() {
            return Err(GraphError::Mismatch("job count differs".into()));
        }
        let mut per_resource: Vec<Vec<(Time, VertexKey)>> = vec![Vec::new(); ts.resources];
        for (j, job) in inst.jobs.iter().enumerate() {
            if sched.starts[j].len() != job.operations.len() {
                return Err(GraphError::Mismatch(format!("job {j} operation count differs")));
            }
            for (p, op) in job.operations.iter().enumerate() {
                let src = op
                    .source
                    .ok_or_else(|| GraphError::Mismatch(format!("job {j} operation {p} has no source")))?;
                let seg = ts
                    .tasks
                    .get(src.task)
                    .and_then(|t| t.segments.get(src.segment))
                    .ok_or_else(|| GraphError::Mismatch(format!("unknown segment {src}")))?;
                if seg.wcet != op.processing {
                    return Err(GraphError::Mismatch(format!("processing time of {src} differs")));
                }
                match inst.machine_roles.get(op.machine) {
                    Some(&MachineRole::Resource(z)) => {
                        if seg.resource != Some(z) {
                            return Err(GraphError::Mismatch(format!("{src} is on resource machine {z}")));
                        }
                        per_resource[z].push((sched.starts[j][p], src));
                    }
                    Some(&MachineRole::TaskDedicated(i)) if i == src.task && seg.resource.is_none() => {}
                    _ => {
                        return Err(GraphError::Mismatch(format!("{src} is on machine {}", op.machine)));
                    }
                }
            }
        }
        let mut chains = Vec::with_capacity(ts.resources);
        for (z, mut ops) in per_resource.into_iter().enumerate() {
            ops.sort();
            for w in ops.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(GraphError::SimultaneousStart(w[0].1, w[1].1, z));
                }
            }
            chains.push(ops.into_iter().map(|(_, k)| k).collect());
        }
        let g = Self::new(ts, &chains)?;
        g.topological_order()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn hyperperiod(&self) -> Time {
        self.hyperperiod
    }

    pub fn index(&self, key: VertexKey) -> Option<usize> {
        let start = *self.first.get(key.task)?.get(key.occurrence)?;
        let v = start + key.segment;
        (self.vertices.get(v)?.key == key).then_some(v)
    }

    pub fn predecessors(&self, v: usize) -> impl Iterator<Item = usize> {
        self.task_pred[v].into_iter().chain(self.resource_pred[v])
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.len()];
        for v in 0..self.len() {
            for u in self.predecessors(v) {
                succ[u].push(v);
            }
        }
        succ
    }

    /// A topological order, or a cycle witness.
    pub fn topological_order(&self) -> Result<Vec<usize>, GraphError> {
        let n = self.len();
        let succ = self.successors();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.predecessors(v).count()).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        // Walk residual predecessors until a vertex repeats.
        let mut v = (0..n).find(|&v| indeg[v] > 0).expect("residual vertex");
        let mut seen = vec![false; n];
        while !seen[v] {
            seen[v] = true;
            v = self.predecessors(v).find(|&u| indeg[u] > 0).expect("residual predecessor");
        }
        let mut cycle = vec![self.vertices[v].key];
        let mut u = self.predecessors(v).find(|&u| indeg[u] > 0).expect("residual predecessor");
        while u != v {
            cycle.push(self.vertices[u].key);
            u = self.predecessors(u).find(|&w| indeg[w] > 0).expect("residual predecessor");
        }
        cycle.reverse();
        Err(GraphError::Cycle(cycle))
    }

    /// Per vertex, the longest weighted path ending there (own weight
    /// included). With `releases`, a job's segments cannot finish before the
    /// job's release plus their own work.
    pub fn finish_times(&self, releases: bool) -> Result<Vec<Time>, GraphError> {
        let order = self.topological_order()?;
        let mut finish = vec![0; self.len()];
        for v in order {
            let ready = self.predecessors(v).map(|u| finish[u]).max().unwrap_or(0);
            let ready = if releases { ready.max(self.vertices[v].release) } else { ready };
            finish[v] = ready + self.vertices[v].wcet;
        }
        Ok(finish)
    }

    /// `len(G)`: the longest vertex-weighted path.
    pub fn critical_path_length(&self) -> Result<Time, GraphError> {
        Ok(self.finish_times(false)?.into_iter().max().unwrap_or(0))
    }

    /// Schedules every operation of `inst` to end at the longest-path length
    /// of its vertex (release-aware for periodic graphs). For frame-based
    /// sets the makespan equals `len(G)`.
    pub fn to_shop_schedule(&self, inst: &JobShopInstance) -> Result<ShopSchedule, GraphError> {
        let finish = self.finish_times(true)?;
        let mut starts = Vec::with_capacity(inst.jobs.len());
        for (j, job) in inst.jobs.iter().enumerate() {
            let mut row = Vec::with_capacity(job.operations.len());
            for (p, op) in job.operations.iter().enumerate() {
                let v = op
                    .source
                    .and_then(|k| self.index(k))
                    .ok_or_else(|| GraphError::Mismatch(format!("job {j} operation {p} has no vertex")))?;
                row.push(finish[v] - self.vertices[v].wcet);
            }
            starts.push(row);
        }
        let mut sched = ShopSchedule { starts, objective: 0 };
        sched.objective = objective(inst, &sched).map_err(|e| GraphError::Mismatch(e.to_string()))?;
        Ok(sched)
    }

    /// Graphviz rendering: solid task edges, one dashed colour per resource.
    pub fn to_dot(&self) -> String {
        const COLORS: [&str; 6] = ["red", "blue", "darkgreen", "orange", "purple", "brown"];
        let mut out = String::from("digraph dependency {\n  rankdir=LR;\n");
        for (v, vx) in self.vertices.iter().enumerate() {
            let shape = if vx.resource.is_some() { "box" } else { "circle" };
            let _ = writeln!(out, "  v{v} [shape={shape}, label=\"{}\\n{}\"];", vx.key, vx.wcet);
        }
        for (v, p) in self.task_pred.iter().enumerate() {
            if let Some(u) = p {
                let _ = writeln!(out, "  v{u} -> v{v};");
            }
        }
        for (z, chain) in self.resource_chains.iter().enumerate() {
            let color = COLORS[z % COLORS.len()];
            for w in chain.windows(2) {
                let _ = writeln!(out, "  v{} -> v{} [style=dashed, color={color}];", w[0], w[1]);
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jobshop::reduce_frame_based;
    use crate::taskmodel::{Segment, Task};

    fn frame(tasks: Vec<Vec<Segment>>, resources: usize) -> TaskSet {
        TaskSet::new(2, resources, ReleaseModel::FrameBased, tasks.into_iter().map(|s| Task::new(s, 100, 100)).collect())
    }

    fn key(task: usize, segment: usize) -> VertexKey {
        VertexKey { task, occurrence: 0, segment }
    }

    #[test]
    fn forced_chain_from_schedule() {
        let ts = frame(vec![vec![Segment::critical(1, 0)], vec![Segment::critical(1, 0)]], 1);
        let inst = reduce_frame_based(&ts).unwrap();
        let sched = ShopSchedule { starts: vec![vec![0], vec![1]], objective: 2 };
        let g = DependencyGraph::from_schedule(&ts, &inst, &sched).unwrap();
        assert_eq!(g.resource_pred[1], Some(0));
        assert_eq!(g.critical_path_length().unwrap(), 2);
        let back = g.to_shop_schedule(&inst).unwrap();
        assert_eq!(back.starts, vec![vec![0], vec![1]]);
        assert_eq!(back.objective, 2);
    }

    #[test]
    fn single_task_chain() {
        let ts = frame(vec![vec![Segment::non_critical(2), Segment::critical(3, 0)]], 1);
        let g = DependencyGraph::new(&ts, &[vec![key(0, 1)]]).unwrap();
        assert_eq!(g.critical_path_length().unwrap(), 5);
        let inst = reduce_frame_based(&ts).unwrap();
        let s = g.to_shop_schedule(&inst).unwrap();
        assert_eq!(s.starts, vec![vec![0, 2]]);
        assert_eq!(s.objective, 5);
    }

    #[test]
    fn parallel_tasks() {
        let ts = frame(vec![vec![Segment::non_critical(3)], vec![Segment::non_critical(5)]], 1);
        let g = DependencyGraph::new(&ts, &[vec![]]).unwrap();
        assert_eq!(g.critical_path_length().unwrap(), 5);
        let single = frame(vec![vec![Segment::non_critical(4)]], 1);
        assert_eq!(DependencyGraph::new(&single, &[vec![]]).unwrap().critical_path_length().unwrap(), 4);
    }

    #[test]
    fn cycle_is_reported_with_witness() {
        let ts = frame(
            vec![
                vec![Segment::critical(1, 0), Segment::non_critical(1), Segment::critical(1, 1)],
                vec![Segment::critical(1, 1), Segment::non_critical(1), Segment::critical(1, 0)],
            ],
            2,
        );
        let g = DependencyGraph::new(&ts, &[vec![key(1, 2), key(0, 0)], vec![key(0, 2), key(1, 0)]]).unwrap();
        match g.critical_path_length() {
            Err(GraphError::Cycle(c)) => assert_eq!(c.len(), 6),
            other => panic!("expected cycle, got {other:?}"),
        }
        let inst = reduce_frame_based(&ts).unwrap();
        assert!(matches!(g.to_shop_schedule(&inst), Err(GraphError::Cycle(_))));
    }

    #[test]
    fn chains_must_cover_their_resource() {
        let ts = frame(vec![vec![Segment::critical(1, 0)], vec![Segment::critical(1, 0)]], 1);
        assert!(matches!(DependencyGraph::new(&ts, &[vec![key(0, 0)]]), Err(GraphError::BadChain { resource: 0 })));
        assert!(matches!(
            DependencyGraph::new(&ts, &[vec![key(0, 0), key(0, 0)]]),
            Err(GraphError::BadChain { .. })
        ));
    }

    #[test]
    fn simultaneous_starts_fail_loudly() {
        let ts = frame(vec![vec![Segment::critical(1, 0)], vec![Segment::critical(1, 0)]], 1);
        let inst = reduce_frame_based(&ts).unwrap();
        let sched = ShopSchedule { starts: vec![vec![0], vec![0]], objective: 1 };
        assert!(matches!(
            DependencyGraph::from_schedule(&ts, &inst, &sched),
            Err(GraphError::SimultaneousStart(..))
        ));
    }

    #[test]
    fn periodic_jobs_are_chained() {
        let ts = TaskSet::new(
            1,
            1,
            ReleaseModel::PeriodicSynchronous,
            vec![
                Task::new(vec![Segment::critical(1, 0)], 2, 2),
                Task::new(vec![Segment::non_critical(1)], 4, 4),
            ],
        );
        let chain = vec![
            VertexKey { task: 0, occurrence: 0, segment: 0 },
            VertexKey { task: 0, occurrence: 1, segment: 0 },
        ];
        let g = DependencyGraph::new(&ts, &[chain]).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.task_pred[1], Some(0));
        assert_eq!(g.vertices[1].release, 2);
        assert_eq!(g.vertices[1].job_deadline, 4);
        assert_eq!(g.finish_times(true).unwrap(), vec![1, 3, 1]);
    }

    #[test]
    fn dot_styles_resource_edges() {
        let ts = frame(vec![vec![Segment::critical(1, 0)], vec![Segment::critical(1, 0)]], 1);
        let g = DependencyGraph::new(&ts, &[vec![key(1, 0), key(0, 0)]]).unwrap();
        let dot = g.to_dot();
        assert!(dot.contains("v1 -> v0 [style=dashed, color=red];"));
        assert!(dot.contains("shape=box"));
    }
}
