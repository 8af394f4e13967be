//! Critical-path neighbourhood search.
//!
//! Moves swap two operations that are adjacent both on a machine and on the
//! critical path ending at the job that sets the objective. An improving
//! move is taken as soon as one is found; when none exists a random move is
//! applied instead so the search can leave the local optimum. The best
//! sequencing seen is returned.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::jobshop::JobShopInstance;
use crate::time::{Lateness, Time};

use super::{DisjunctiveGraph, ShopSchedule};

struct State {
    seqs: Vec<Vec<usize>>,
    heads: Vec<Time>,
    objective: Lateness,
}

fn machine_preds(seqs: &[Vec<usize>], n: usize) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut pred = vec![None; n];
    let mut pos = vec![0; n];
    for seq in seqs {
        for (i, &v) in seq.iter().enumerate() {
            pos[v] = i;
            if i > 0 {
                pred[v] = Some(seq[i - 1]);
            }
        }
    }
    (pred, pos)
}

fn evaluate(g: &DisjunctiveGraph<'_>, seqs: Vec<Vec<usize>>) -> Option<State> {
    let heads = g.heads(&DisjunctiveGraph::sequence_arcs(&seqs)).ok()?;
    let objective = g.objective_of(&heads);
    Some(State { seqs, heads, objective })
}

/// Improves a feasible schedule within `budget` move evaluations. The result
/// never has a worse objective than the input.
pub fn improve_local_search(inst: &JobShopInstance, sched: &ShopSchedule, budget: usize, seed: u64) -> ShopSchedule {
    let g = DisjunctiveGraph::without_pairs(inst);
    let n = g.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = evaluate(&g, g.sequences_of(sched)).expect("input schedule is feasible");
    let mut best_seqs = current.seqs.clone();
    let mut best_obj = current.objective;
    let mut evaluations = 0usize;

    while evaluations < budget {
        let Some(end) = g.objective_node(&current.heads) else { break };
        let (pred, pos) = machine_preds(&current.seqs, n);
        let path = g.critical_path(&current.heads, &pred, end);
        let mut moves: Vec<(usize, usize)> = path
            .windows(2)
            .filter(|w| pred[w[1]] == Some(w[0]))
            .map(|w| (w[0], w[1]))
            .collect();
        if moves.is_empty() {
            // The critical path uses chain arcs only: no sequencing can beat it.
            break;
        }
        moves.shuffle(&mut rng);
        let mut improved = None;
        let mut fallback = None;
        for &(u, v) in &moves {
            if evaluations >= budget {
                break;
            }
            evaluations += 1;
            let m = g.machine[u];
            let mut seqs = current.seqs.clone();
            seqs[m].swap(pos[u], pos[v]);
            if let Some(next) = evaluate(&g, seqs) {
                if next.objective < current.objective {
                    improved = Some(next);
                    break;
                }
                if fallback.is_none() {
                    fallback = Some(next);
                }
            }
        }
        match improved.or(fallback) {
            Some(next) => current = next,
            None => break,
        }
        if current.objective < best_obj {
            best_obj = current.objective;
            best_seqs = current.seqs.clone();
        }
    }

    let best = evaluate(&g, best_seqs).expect("best sequencing stays acyclic");
    g.schedule_from_heads(&best.heads)
}
