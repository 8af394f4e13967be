#![allow(dead_code)]

use std::path::PathBuf;

use dga::oracle::{CorpusEntry, PeriodicCorpusEntry};
use dga::taskmodel::{ReleaseModel, Segment, Task, TaskSet};
use dga::Time;
use proptest::prelude::*;
use rand::Rng;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn corpus() -> Vec<CorpusEntry> {
    serde_json::from_str(&std::fs::read_to_string(data("corpus.json")).unwrap()).unwrap()
}

pub fn periodic_corpus() -> Vec<PeriodicCorpusEntry> {
    serde_json::from_str(&std::fs::read_to_string(data("periodic_corpus.json")).unwrap()).unwrap()
}

/// Alternating segments, never two non-critical ones in a row.
pub fn segments<R: Rng>(rng: &mut R, count: usize, resources: usize, max_wcet: Time) -> Vec<Segment> {
    let mut critical = rng.random_bool(0.5);
    (0..count)
        .map(|_| {
            let wcet = rng.random_range(1..=max_wcet);
            let seg = if critical {
                Segment::critical(wcet, rng.random_range(0..resources))
            } else {
                Segment::non_critical(wcet)
            };
            critical = !critical || rng.random_bool(0.5);
            seg
        })
        .collect()
}

/// Frame-based set with `M ∈ {2, 4}`, 1 to 8 tasks of 1 to 7 segments.
pub fn random_frame<R: Rng>(rng: &mut R) -> TaskSet {
    let m = if rng.random_bool(0.5) { 2 } else { 4 };
    let z = rng.random_range(1..=3);
    let n = rng.random_range(1..=8);
    let tasks = (0..n)
        .map(|_| {
            let k = rng.random_range(1..=7);
            Task::new(segments(rng, k, z, 10), 1000, 1000)
        })
        .collect();
    TaskSet::new(m, z, ReleaseModel::FrameBased, tasks)
}

/// Periodic set with small periods so hyper-periods stay short.
pub fn random_periodic<R: Rng>(rng: &mut R) -> TaskSet {
    let m = rng.random_range(1..=3);
    let z = rng.random_range(1..=2);
    let n = rng.random_range(1..=4);
    let tasks = (0..n)
        .map(|_| {
            let period = [20, 40][rng.random_range(0..2)];
            let k = rng.random_range(1..=4);
            let segs = segments(rng, k, z, 3);
            let deadline = rng.random_range(segs.iter().map(|s| s.wcet).sum::<Time>()..=period);
            Task::new(segs, period, deadline)
        })
        .collect();
    TaskSet::new(m, z, ReleaseModel::PeriodicSynchronous, tasks)
}

pub fn arb_segments(resources: usize) -> impl Strategy<Value = Vec<Segment>> {
    prop::collection::vec((1u64..=10, prop::option::weighted(0.6, 0..resources)), 1..=7).prop_map(|raw| {
        let mut out: Vec<Segment> = Vec::new();
        for (wcet, res) in raw {
            let prev_nc = out.last().is_some_and(|s| !s.is_critical());
            match res {
                None if prev_nc => out.push(Segment::critical(wcet, 0)),
                None => out.push(Segment::non_critical(wcet)),
                Some(z) => out.push(Segment::critical(wcet, z)),
            }
        }
        out
    })
}

pub fn arb_frame() -> impl Strategy<Value = TaskSet> {
    (prop_oneof![Just(2usize), Just(4usize)], 1usize..=3)
        .prop_flat_map(|(m, z)| {
            (Just(m), Just(z), prop::collection::vec(arb_segments(z), 1..=6))
        })
        .prop_map(|(m, z, segs)| {
            TaskSet::new(m, z, ReleaseModel::FrameBased, segs.into_iter().map(|s| Task::new(s, 500, 500)).collect())
        })
}

pub fn arb_periodic() -> impl Strategy<Value = TaskSet> {
    (1usize..=3, 1usize..=2)
        .prop_flat_map(|(m, z)| {
            let task = (arb_segments(z), prop_oneof![Just(20u64), Just(40u64), Just(60u64)]);
            (Just(m), Just(z), prop::collection::vec(task, 1..=3))
        })
        .prop_map(|(m, z, tasks)| {
            let tasks = tasks.into_iter().map(|(s, p)| Task::new(s, p, p)).collect();
            TaskSet::new(m, z, ReleaseModel::PeriodicSynchronous, tasks)
        })
}
