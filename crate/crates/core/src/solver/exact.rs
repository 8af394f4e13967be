//! Branch-and-bound over disjunctive pair orientations.
//!
//! Each node fixes some pairs. Its earliest-start schedule (longest paths
//! over chain and fixed arcs) is a relaxation; if no two operations on a
//! machine overlap in it, the relaxation is feasible and optimal for the
//! subtree. Otherwise the first overlapping unset pair is branched in both
//! directions. Nodes are pruned by the larger of the relaxation objective
//! and a one-machine bound `min head + Σ proc + min tail`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::jobshop::JobShopInstance;
use crate::time::{signed, Lateness};

use super::{solve_dispatch, DisjunctiveGraph, DispatchRule, Orientation, ShopSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactLimits {
    pub max_nodes: u64,
    pub max_time: Duration,
}

impl ExactLimits {
    /// A node limit with no practical time limit, so results do not depend
    /// on machine speed.
    pub fn nodes_only(max_nodes: u64) -> Self {
        ExactLimits { max_nodes, max_time: Duration::from_secs(24 * 3600) }
    }
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits { max_nodes: 1_000_000, max_time: Duration::from_secs(60) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExactOutcome {
    /// The search completed; no schedule has a smaller objective.
    Optimal(ShopSchedule),
    /// A limit was hit; best schedule found so far.
    Incumbent(ShopSchedule),
}

#[derive(Clone, Debug)]
pub struct ExactResult {
    pub outcome: ExactOutcome,
    pub nodes: u64,
    /// Root lower bound.
    pub lower_bound: Lateness,
}

impl ExactResult {
    pub fn schedule(&self) -> &ShopSchedule {
        match &self.outcome {
            ExactOutcome::Optimal(s) | ExactOutcome::Incumbent(s) => s,
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self.outcome, ExactOutcome::Optimal(_))
    }
}

/// Exact search seeded with the best dispatch schedule.
pub fn solve_exact(inst: &JobShopInstance, limits: &ExactLimits) -> ExactResult {
    let seed = DispatchRule::ALL
        .iter()
        .map(|&r| solve_dispatch(inst, r))
        .min_by_key(|s| s.objective)
        .expect("at least one rule");
    solve_exact_from(inst, limits, seed)
}

/// Exact search starting from a known feasible schedule.
pub fn solve_exact_from(inst: &JobShopInstance, limits: &ExactLimits, incumbent: ShopSchedule) -> ExactResult {
    let mut search = Search {
        g: DisjunctiveGraph::new(inst),
        arcs: Vec::new(),
        best: incumbent,
        nodes: 0,
        limits: *limits,
        started: Instant::now(),
        aborted: false,
        root_bound: None,
    };
    search.branch();
    let lower_bound = search.root_bound.unwrap_or(search.best.objective);
    let outcome = if search.aborted {
        ExactOutcome::Incumbent(search.best)
    } else {
        ExactOutcome::Optimal(search.best)
    };
    ExactResult { outcome, nodes: search.nodes, lower_bound }
}

struct Search<'a> {
    g: DisjunctiveGraph<'a>,
    arcs: Vec<(usize, usize)>,
    best: ShopSchedule,
    nodes: u64,
    limits: ExactLimits,
    started: Instant,
    aborted: bool,
    root_bound: Option<Lateness>,
}

impl Search<'_> {
    fn out_of_budget(&mut self) -> bool {
        if self.nodes >= self.limits.max_nodes
            || (self.nodes % 256 == 0 && self.started.elapsed() >= self.limits.max_time)
        {
            self.aborted = true;
        }
        self.aborted
    }

    fn branch(&mut self) {
        if self.out_of_budget() {
            return;
        }
        self.nodes += 1;
        let Ok((head, tail)) = self.g.heads_and_tails(&self.arcs) else { return };
        let relaxed = self.g.objective_of(&head);
        let mut bound = relaxed;
        for m in 0..self.g.instance().machines {
            let ops = self.g.machine_nodes(m);
            if ops.len() < 2 {
                continue;
            }
            let min_head = ops.iter().map(|&v| head[v]).min().unwrap_or(0);
            let work: u64 = ops.iter().map(|&v| self.g.proc[v]).sum();
            let min_tail = ops.iter().map(|&v| tail[v]).min().unwrap_or(0);
            if min_tail > Lateness::MIN {
                bound = bound.max(signed(min_head + work) + min_tail);
            }
        }
        self.root_bound.get_or_insert(bound);
        if bound >= self.best.objective {
            return;
        }

        let conflict = self
            .g
            .pairs
            .iter()
            .enumerate()
            .filter(|&(k, _)| self.g.orientation[k] == Orientation::Unset)
            .filter(|&(_, &(a, b))| {
                let (pa, pb) = (self.g.proc[a], self.g.proc[b]);
                pa > 0 && pb > 0 && head[a] < head[b] + pb && head[b] < head[a] + pa
            })
            .min_by_key(|&(k, &(a, b))| (head[a].min(head[b]), k))
            .map(|(k, &pair)| (k, pair));

        let Some((k, (a, b))) = conflict else {
            // Relaxation is feasible and strictly better than the incumbent.
            self.best = self.g.schedule_from_heads(&head);
            return;
        };
        let children = if head[a] <= head[b] {
            [(Orientation::Forward, (a, b)), (Orientation::Backward, (b, a))]
        } else {
            [(Orientation::Backward, (b, a)), (Orientation::Forward, (a, b))]
        };
        for (orientation, arc) in children {
            self.g.orientation[k] = orientation;
            self.arcs.push(arc);
            self.branch();
            self.arcs.pop();
            self.g.orientation[k] = Orientation::Unset;
            if self.aborted {
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jobshop::{ShopJob, ShopOperation};
    use crate::solver::{check_feasible, machine_workload_bound};
    use crate::time::Time;

    fn job(ops: &[(usize, Time)]) -> ShopJob {
        ShopJob::new(ops.iter().map(|&(m, p)| ShopOperation::new(m, p)).collect())
    }

    #[test]
    fn single_machine_sum() {
        let inst = JobShopInstance::new(1, vec![job(&[(0, 3)]), job(&[(0, 5)])]);
        let r = solve_exact(&inst, &ExactLimits::default());
        assert!(r.is_optimal());
        assert_eq!(r.schedule().objective, 8);
    }

    #[test]
    fn crossing_jobs_interleave() {
        let inst = JobShopInstance::new(2, vec![job(&[(0, 2), (1, 2)]), job(&[(1, 2), (0, 2)])]);
        let r = solve_exact(&inst, &ExactLimits::default());
        assert!(r.is_optimal());
        assert_eq!(r.schedule().objective, 4);
        check_feasible(&inst, r.schedule()).unwrap();
    }

    #[test]
    fn objective_at_least_workload() {
        let inst = JobShopInstance::new(
            3,
            vec![job(&[(0, 3), (1, 2), (2, 2)]), job(&[(0, 2), (2, 1), (1, 4)]), job(&[(1, 4), (2, 3), (0, 1)])],
        );
        let r = solve_exact(&inst, &ExactLimits::default());
        assert!(r.schedule().objective >= signed(machine_workload_bound(&inst)));
        assert!(r.lower_bound <= r.schedule().objective);
    }

    #[test]
    fn node_limit_yields_incumbent() {
        let inst = JobShopInstance::new(
            3,
            vec![job(&[(0, 3), (1, 2), (2, 2)]), job(&[(0, 2), (2, 1), (1, 4)]), job(&[(1, 4), (2, 3), (0, 1)])],
        );
        let limits = ExactLimits { max_nodes: 0, ..Default::default() };
        let r = solve_exact(&inst, &limits);
        assert!(!r.is_optimal());
        check_feasible(&inst, r.schedule()).unwrap();
    }
}
