mod common;

use common::{corpus, periodic_corpus};
use dga::depgraph::DependencyGraph;
use dga::jobshop::reduce_frame_based;
use dga::oracle::{generate_corpus, generate_periodic_corpus, optimal_shop_bruteforce};
use dga::solver::{improve_local_search, solve_dispatch, solve_exact, DispatchRule, ExactLimits};
use dga::time::signed;

#[test]
fn committed_corpus_is_current() {
    assert_eq!(corpus(), generate_corpus(2024, 50), "run scripts/regen-corpus.sh");
    assert_eq!(periodic_corpus(), generate_periodic_corpus(2024, 20), "run scripts/regen-corpus.sh");
}

#[test]
fn corpus_has_both_verdicts() {
    let c = corpus();
    let tight = c.iter().filter(|e| e.oracle_preemptive_makespan > e.taskset.tasks[0].deadline).count();
    assert!(tight > 0 && tight < c.len());
    let p = periodic_corpus();
    let feasible = p.iter().filter(|e| e.oracle_feasible).count();
    assert!(feasible > 0 && feasible < p.len());
}

#[test]
fn exact_matches_bruteforce() {
    for (i, e) in corpus().iter().enumerate() {
        let inst = reduce_frame_based(&e.taskset).unwrap();
        let r = solve_exact(&inst, &ExactLimits::default());
        assert!(r.is_optimal(), "entry {i}");
        assert_eq!(r.schedule().objective, signed(e.oracle_shop_makespan), "entry {i}");
        assert_eq!(optimal_shop_bruteforce(&inst).unwrap(), signed(e.oracle_shop_makespan));
        let g = DependencyGraph::from_schedule(&e.taskset, &inst, r.schedule()).unwrap();
        assert_eq!(g.critical_path_length().unwrap(), e.oracle_shop_makespan, "entry {i}");
    }
}

#[test]
fn local_search_escapes_fifo() {
    let c = corpus();
    let hard: Vec<_> = c
        .iter()
        .map(|e| reduce_frame_based(&e.taskset).unwrap())
        .filter(|inst| {
            solve_dispatch(inst, DispatchRule::Fifo).objective > optimal_shop_bruteforce(inst).unwrap()
        })
        .collect();
    assert!(!hard.is_empty(), "corpus has no instance where FIFO is suboptimal");
    for inst in &hard {
        let opt = optimal_shop_bruteforce(inst).unwrap();
        let start = solve_dispatch(inst, DispatchRule::Fifo);
        let hits = (0..100).filter(|&seed| improve_local_search(inst, &start, 1000, seed).objective == opt).count();
        assert!(hits >= 90, "{hits}/100 seeds reached the optimum {opt}");
    }
}
