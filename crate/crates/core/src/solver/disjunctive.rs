//! Disjunctive graph of a job-shop instance.
//!
//! Nodes are operations. Conjunctive arcs encode chain order (with minimum
//! gaps) and job-to-job chaining; disjunctive pairs join operations that
//! share a machine and are not already ordered by conjunctive arcs. Every
//! orientation of the pairs that is acyclic yields exactly one earliest-start
//! schedule, computed by longest paths.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::jobshop::{JobShopInstance, Objective, OpId};
use crate::time::{signed, Lateness, Time};

use super::ShopSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Unset,
    /// First operation of the pair runs before the second.
    Forward,
    Backward,
}

/// A cycle among operations, listed in arc order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cycle(pub Vec<OpId>);

#[derive(Clone, Debug)]
pub struct DisjunctiveGraph<'a> {
    inst: &'a JobShopInstance,
    ids: Vec<OpId>,
    offsets: Vec<usize>,
    pub(crate) proc: Vec<Time>,
    pub(crate) machine: Vec<usize>,
    base: Vec<Time>,
    /// Successor lists: `(to, weight)` with `start(to) >= start(from) + weight`.
    conj: Vec<Vec<(usize, Time)>>,
    conj_pred: Vec<Vec<(usize, Time)>>,
    /// Contribution of a node's completion to the objective, if it ends a job.
    sink: Vec<Option<Lateness>>,
    /// Objective contribution that no sequencing decision can change.
    floor: Option<Lateness>,
    pub pairs: Vec<(usize, usize)>,
    pub orientation: Vec<Orientation>,
    by_machine: Vec<Vec<usize>>,
}

impl<'a> DisjunctiveGraph<'a> {
    pub fn new(inst: &'a JobShopInstance) -> Self {
        let mut g = Self::without_pairs(inst);
        let reach = g.conjunctive_reachability();
        for ops in &g.by_machine {
            for (x, &a) in ops.iter().enumerate() {
                for &b in &ops[x + 1..] {
                    if !reach[a][b] && !reach[b][a] {
                        g.pairs.push((a, b));
                    }
                }
            }
        }
        g.orientation = vec![Orientation::Unset; g.pairs.len()];
        g
    }

    /// Same nodes and conjunctive arcs, but no disjunctive pair list; enough
    /// for evaluating complete machine sequences.
    pub fn without_pairs(inst: &'a JobShopInstance) -> Self {
        let mut offsets = Vec::with_capacity(inst.jobs.len());
        let mut ids = Vec::new();
        for (j, job) in inst.jobs.iter().enumerate() {
            offsets.push(ids.len());
            ids.extend((0..job.operations.len()).map(|pos| OpId { job: j, pos }));
        }
        let n = ids.len();
        let proc: Vec<Time> = ids.iter().map(|&id| inst.op(id).processing).collect();
        let machine: Vec<usize> = ids.iter().map(|&id| inst.op(id).machine).collect();
        let mut base = vec![0; n];
        let mut conj = vec![Vec::new(); n];
        let mut sink = vec![None; n];
        let mut floor: Option<Lateness> = inst.omitted.iter().map(|o| signed(o.length)).max();
        let due = |j: usize| match inst.objective {
            Objective::Makespan => 0,
            Objective::MaxLateness => inst.jobs[j].abs_deadline.map(signed).unwrap_or(0),
        };
        for (j, job) in inst.jobs.iter().enumerate() {
            let len = job.operations.len();
            if len == 0 {
                let c = signed(job.release + job.tail) - due(j);
                floor = Some(floor.map_or(c, |f| f.max(c)));
                continue;
            }
            let first = offsets[j];
            base[first] = job.release;
            for p in 1..len {
                let u = first + p - 1;
                conj[u].push((u + 1, proc[u] + job.operations[p].min_gap_after_prev));
            }
            let last = first + len - 1;
            sink[last] = Some(signed(job.tail) - due(j));
            if let Some(a) = job.after_job {
                let a_last = offsets[a] + inst.jobs[a].operations.len() - 1;
                conj[a_last].push((first, proc[a_last] + inst.jobs[a].tail));
            }
        }
        let mut conj_pred = vec![Vec::new(); n];
        for (u, succs) in conj.iter().enumerate() {
            for &(v, w) in succs {
                conj_pred[v].push((u, w));
            }
        }
        let mut g = DisjunctiveGraph {
            inst,
            ids,
            offsets,
            proc,
            machine,
            base,
            conj,
            conj_pred,
            sink,
            floor,
            pairs: Vec::new(),
            orientation: Vec::new(),
            by_machine: vec![Vec::new(); inst.machines],
        };
        for v in 0..n {
            g.by_machine[g.machine[v]].push(v);
        }
        g
    }

    pub fn instance(&self) -> &'a JobShopInstance {
        self.inst
    }

    pub fn num_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn node(&self, id: OpId) -> usize {
        self.offsets[id.job] + id.pos
    }

    pub fn op_id(&self, node: usize) -> OpId {
        self.ids[node]
    }

    pub fn machine_nodes(&self, m: usize) -> &[usize] {
        &self.by_machine[m]
    }

    fn conjunctive_reachability(&self) -> Vec<Vec<bool>> {
        let n = self.num_nodes();
        let mut reach = vec![vec![false; n]; n];
        for (s, row) in reach.iter_mut().enumerate() {
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.conj[u] {
                    if !row[v] {
                        row[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        reach
    }

    /// Arcs implied by the current orientation of disjunctive pairs.
    pub fn oriented_arcs(&self) -> Vec<(usize, usize)> {
        self.pairs
            .iter()
            .zip(&self.orientation)
            .filter_map(|(&(a, b), o)| match o {
                Orientation::Unset => None,
                Orientation::Forward => Some((a, b)),
                Orientation::Backward => Some((b, a)),
            })
            .collect()
    }

    /// Machine arcs between consecutive operations of each sequence.
    pub fn sequence_arcs(sequences: &[Vec<usize>]) -> Vec<(usize, usize)> {
        sequences
            .iter()
            .flat_map(|seq| seq.windows(2).map(|w| (w[0], w[1])))
            .collect()
    }

    fn adjacency(&self, extra: &[(usize, usize)]) -> Vec<Vec<(usize, Time)>> {
        let mut adj = self.conj.clone();
        for &(u, v) in extra {
            adj[u].push((v, self.proc[u]));
        }
        adj
    }

    fn topological(&self, adj: &[Vec<(usize, Time)>]) -> Result<Vec<usize>, Cycle> {
        let n = adj.len();
        let mut indeg = vec![0usize; n];
        for succs in adj {
            for &(v, _) in succs {
                indeg[v] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, _) in &adj[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(self.find_cycle(adj, &indeg))
        }
    }

    fn find_cycle(&self, adj: &[Vec<(usize, Time)>], indeg: &[usize]) -> Cycle {
        // Every node left with positive in-degree has a predecessor in the
        // same residual set; walking predecessors must revisit a node.
        let n = adj.len();
        let mut pred = vec![usize::MAX; n];
        for u in 0..n {
            if indeg[u] > 0 {
                for &(v, _) in &adj[u] {
                    if indeg[v] > 0 {
                        pred[v] = u;
                    }
                }
            }
        }
        let start = (0..n).find(|&v| indeg[v] > 0).expect("residual node");
        let mut seen = vec![false; n];
        let mut v = start;
        while !seen[v] {
            seen[v] = true;
            v = pred[v];
        }
        let mut cycle = vec![v];
        let mut u = pred[v];
        while u != v {
            cycle.push(u);
            u = pred[u];
        }
        cycle.reverse();
        Cycle(cycle.into_iter().map(|x| self.ids[x]).collect())
    }

    /// Earliest start of every node given extra machine arcs.
    pub fn heads(&self, extra: &[(usize, usize)]) -> Result<Vec<Time>, Cycle> {
        let adj = self.adjacency(extra);
        let order = self.topological(&adj)?;
        Ok(self.heads_in_order(&adj, &order))
    }

    fn heads_in_order(&self, adj: &[Vec<(usize, Time)>], order: &[usize]) -> Vec<Time> {
        let mut head = self.base.clone();
        for &u in order {
            for &(v, w) in &adj[u] {
                head[v] = head[v].max(head[u] + w);
            }
        }
        head
    }

    /// Heads plus, per node, the longest path from its completion to the
    /// objective sink.
    pub fn heads_and_tails(&self, extra: &[(usize, usize)]) -> Result<(Vec<Time>, Vec<Lateness>), Cycle> {
        let adj = self.adjacency(extra);
        let order = self.topological(&adj)?;
        let head = self.heads_in_order(&adj, &order);
        let mut tail: Vec<Lateness> = self.sink.iter().map(|s| s.unwrap_or(Lateness::MIN)).collect();
        for &u in order.iter().rev() {
            for &(v, w) in &adj[u] {
                if tail[v] == Lateness::MIN {
                    continue;
                }
                let through = signed(w) - signed(self.proc[u]) + signed(self.proc[v]) + tail[v];
                tail[u] = tail[u].max(through);
            }
        }
        Ok((head, tail))
    }

    /// Objective value of the earliest-start schedule with these heads.
    pub fn objective_of(&self, head: &[Time]) -> Lateness {
        let mut best = self.floor;
        for (v, s) in self.sink.iter().enumerate() {
            if let Some(s) = s {
                let c = signed(head[v] + self.proc[v]) + s;
                best = Some(best.map_or(c, |b| b.max(c)));
            }
        }
        match (best, self.inst.objective) {
            (Some(b), _) => b,
            (None, Objective::Makespan) => 0,
            (None, Objective::MaxLateness) => Lateness::MIN,
        }
    }

    /// Node ending the job that attains the objective, if any.
    pub fn objective_node(&self, head: &[Time]) -> Option<usize> {
        let mut best: Option<(Lateness, usize)> = None;
        for (v, s) in self.sink.iter().enumerate() {
            if let Some(s) = s {
                let c = signed(head[v] + self.proc[v]) + s;
                if best.is_none_or(|(b, _)| c > b) {
                    best = Some((c, v));
                }
            }
        }
        match (best, self.floor) {
            (Some((b, v)), Some(f)) if b > f => Some(v),
            (Some((_, v)), None) => Some(v),
            _ => None,
        }
    }

    /// Walks back from `end` along tight arcs, preferring the machine
    /// predecessor, and returns the path in forward order.
    pub fn critical_path(&self, head: &[Time], machine_pred: &[Option<usize>], end: usize) -> Vec<usize> {
        let mut path = vec![end];
        let mut v = end;
        loop {
            let via_machine = machine_pred[v].filter(|&u| head[u] + self.proc[u] == head[v]);
            let next = via_machine.or_else(|| {
                self.conj_pred[v].iter().find(|&&(u, w)| head[u] + w == head[v]).map(|&(u, _)| u)
            });
            match next {
                Some(u) => {
                    path.push(u);
                    v = u;
                }
                None => break,
            }
        }
        path.reverse();
        path
    }

    pub fn schedule_from_heads(&self, head: &[Time]) -> ShopSchedule {
        let starts = self
            .inst
            .jobs
            .iter()
            .enumerate()
            .map(|(j, job)| (0..job.operations.len()).map(|p| head[self.offsets[j] + p]).collect())
            .collect();
        ShopSchedule { starts, objective: self.objective_of(head) }
    }

    /// Per-machine node sequences in order of start time.
    pub fn sequences_of(&self, sched: &ShopSchedule) -> Vec<Vec<usize>> {
        self.by_machine
            .iter()
            .map(|ops| {
                let mut seq = ops.clone();
                seq.sort_by_key(|&v| {
                    let id = self.ids[v];
                    let s = sched.starts[id.job][id.pos];
                    (s, s + self.proc[v], id)
                });
                seq
            })
            .collect()
    }

    /// Graphviz rendering; unset pairs are drawn as undirected dashed edges.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph disjunctive {\n  rankdir=LR;\n");
        for (v, id) in self.ids.iter().enumerate() {
            let _ = writeln!(
                out,
                "  n{v} [label=\"J{}.{}\\nm{} p{}\"];",
                id.job, id.pos, self.machine[v], self.proc[v]
            );
        }
        for (u, succs) in self.conj.iter().enumerate() {
            for &(v, w) in succs {
                let _ = writeln!(out, "  n{u} -> n{v} [label=\"{w}\"];");
            }
        }
        for (&(a, b), o) in self.pairs.iter().zip(&self.orientation) {
            let _ = match o {
                Orientation::Unset => writeln!(out, "  n{a} -> n{b} [style=dashed, dir=none];"),
                Orientation::Forward => writeln!(out, "  n{a} -> n{b} [style=dashed];"),
                Orientation::Backward => writeln!(out, "  n{b} -> n{a} [style=dashed];"),
            };
        }
        out.push_str("}\n");
        out
    }
}
