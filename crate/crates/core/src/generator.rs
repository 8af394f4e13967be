//! Synthetic task sets.
//!
//! Task utilizations come from RandomFixedSum, so they sum to the target
//! and are capped per task. Each task's execution time is split by
//! UUniFast into critical sections (fraction `H`) and one more non-critical
//! section than critical ones, interleaved starting and ending with a
//! non-critical section. Everything is rounded to integer ticks with
//! largest-remainder rounding, so totals survive quantization exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taskmodel::{ReleaseModel, Segment, Task, TaskSet};
use crate::time::{Time, DEFAULT_RESOLUTION};

/// Re-splits of one task before quantization underflow is reported.
pub const MAX_RESPLITS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("total {total} exceeds {n} values capped at {cap}")]
    Infeasible { total: f64, n: usize, cap: f64 },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("τ_{} has a segment that rounds to zero ticks", .task + 1)]
    QuantizationUnderflow { task: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub processors: usize,
    pub resources: usize,
    pub tasks: usize,
    /// Total utilization as a percentage of `processors`.
    pub utilization_percent: u32,
    pub per_task_cap: f64,
    /// Bounds on the fraction of a task's execution spent in critical
    /// sections.
    pub h_range: (f64, f64),
    /// Inclusive bounds on critical sections per task.
    pub accesses_range: (usize, usize),
    pub release_model: ReleaseModel,
    /// Candidate periods in base units; frame-based sets always use 1.
    pub periods: Vec<u64>,
    pub resolution: u64,
    pub seed: u64,
}

impl GenConfig {
    /// Ten tasks per processor, utilization cap one half, two to five
    /// critical sections per task.
    pub fn standard(processors: usize, resources: usize, h_range: (f64, f64), release_model: ReleaseModel) -> Self {
        GenConfig {
            processors,
            resources,
            tasks: 10 * processors,
            utilization_percent: 100,
            per_task_cap: 0.5,
            h_range,
            accesses_range: (2, 5),
            release_model,
            periods: vec![1, 2, 5, 10],
            resolution: DEFAULT_RESOLUTION,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidConfig(m.to_string()));
        if self.processors == 0 || self.resources == 0 {
            return bad("processor and resource counts must be positive");
        }
        if self.tasks < self.processors {
            return bad("fewer tasks than processors");
        }
        let (lo, hi) = self.h_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad("h_range must be ordered within [0, 1]");
        }
        let (a, b) = self.accesses_range;
        if a == 0 || a > b {
            return bad("accesses_range must be ordered and start at 1 or more");
        }
        if !(self.per_task_cap > 0.0 && self.per_task_cap <= 1.0) {
            return bad("per_task_cap must lie in (0, 1]");
        }
        if self.resolution == 0 {
            return bad("resolution must be positive");
        }
        if self.release_model == ReleaseModel::PeriodicSynchronous
            && (self.periods.is_empty() || self.periods.contains(&0))
        {
            return bad("periodic sets need positive candidate periods");
        }
        let total = self.total_units();
        if total > self.tasks as u64 * self.cap_units() {
            return Err(GenError::Infeasible {
                total: total as f64 / self.resolution as f64,
                n: self.tasks,
                cap: self.per_task_cap,
            });
        }
        Ok(())
    }

    /// Target total utilization in units of `1 / resolution`.
    pub fn total_units(&self) -> u64 {
        self.utilization_percent as u64 * self.processors as u64 * self.resolution / 100
    }

    fn cap_units(&self) -> u64 {
        (self.per_task_cap * self.resolution as f64).round() as u64
    }
}

/// Stafford's RandomFixedSum: `n` values, uniformly distributed over the
/// part of the simplex `Σ x = total` inside `[0, cap]^n`.
pub fn random_fixed_sum<R: Rng + ?Sized>(n: usize, total: f64, cap: f64, rng: &mut R) -> Result<Vec<f64>, GenError> {
    let infeasible = GenError::Infeasible { total, n, cap };
    if n == 0 {
        return if total == 0.0 { Ok(Vec::new()) } else { Err(infeasible) };
    }
    if !(cap > 0.0) || total < 0.0 {
        return Err(infeasible);
    }
    let s = total / cap;
    let nf = n as f64;
    if s > nf * (1.0 + 1e-12) {
        return Err(infeasible);
    }
    if s >= nf {
        return Ok(vec![cap; n]);
    }
    if s <= 0.0 {
        return Ok(vec![0.0; n]);
    }
    if n == 1 {
        return Ok(vec![total]);
    }

    let k = (s.floor() as usize).min(n - 1);
    let s = s.clamp(k as f64, (k + 1) as f64);
    let delta = s - k as f64;

    // Relative simplex volumes per state, then per-step transition
    // probabilities.
    let mut w = vec![0.0f64; n];
    w[0] = f64::MAX;
    let mut t = vec![vec![0.0f64; n]; n - 1];
    for i in 2..=n {
        let inv = 1.0 / i as f64;
        let mut prev = 0.0;
        for j in 0..i {
            let c1 = (j as f64 + delta) * inv;
            let c2 = (i as f64 - j as f64 - delta) * inv;
            let tmp1 = w[j] * c1;
            let tmp2 = prev * c2;
            prev = w[j];
            w[j] = tmp1 + tmp2;
            let denom = w[j] + f64::from_bits(1);
            t[i - 2][j] = if c2 > c1 { tmp2 / denom } else { 1.0 - tmp1 / denom };
        }
    }

    let mut out = vec![0.0; n];
    let (mut sm, mut pr, mut level) = (0.0f64, 1.0f64, s);
    let mut j = k;
    for i in (1..n).rev() {
        let e = rng.random::<f64>() <= t[i - 1][j];
        let sx = rng.random::<f64>().powf((i as f64).recip());
        sm += (1.0 - sx) * pr * level / (i + 1) as f64;
        pr *= sx;
        out[n - i - 1] = sm + if e { pr } else { 0.0 };
        if e {
            level -= 1.0;
            j -= 1;
        }
    }
    out[n - 1] = sm + pr * level;
    // Random permutation.
    for i in (1..n).rev() {
        out.swap(i, rng.random_range(0..=i));
    }
    Ok(out.into_iter().map(|x| (x * cap).clamp(0.0, cap)).collect())
}

/// UUniFast: `k` non-negative parts summing to `total`, uniformly
/// distributed over the simplex.
pub fn uunifast_split<R: Rng + ?Sized>(total: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    let mut sum = total;
    for i in 1..k {
        let next = sum * rng.random::<f64>().powf(1.0 / (k - i) as f64);
        out.push(sum - next);
        sum = next;
    }
    if k > 0 {
        out.push(sum);
    }
    out
}

/// Rounds non-negative reals to integers summing to `units`: floors first,
/// then the largest fractional parts receive the leftover units. Entries
/// never exceed `cap`.
pub fn quantize(values: &[f64], units: u64, cap: u64) -> Vec<u64> {
    if values.is_empty() {
        return Vec::new();
    }
    let sum: f64 = values.iter().sum();
    let scale = if sum > 0.0 { units as f64 / sum } else { 0.0 };
    let mut out: Vec<u64> = values.iter().map(|&v| ((v * scale).floor() as u64).min(cap)).collect();
    let mut assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..values.len()).collect();
    let frac = |i: usize| values[i] * scale - out[i] as f64;
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    while assigned > units {
        let i = (0..out.len()).rev().max_by_key(|&i| out[i]).expect("non-empty");
        out[i] -= 1;
        assigned -= 1;
    }
    let mut idx = 0;
    while assigned < units {
        let i = order[idx % order.len()];
        idx += 1;
        if out[i] < cap {
            out[i] += 1;
            assigned += 1;
        }
        if idx > 2 * order.len() * (units as usize).max(1) {
            break;
        }
    }
    out
}

/// Generates a task set from `cfg`, deterministic in `cfg.seed`.
pub fn generate_taskset(cfg: &GenConfig) -> Result<TaskSet, GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let res = cfg.resolution;
    let total_units = cfg.total_units();
    let cap_units = cfg.cap_units();
    let utils = random_fixed_sum(
        cfg.tasks,
        total_units as f64 / res as f64,
        cap_units as f64 / res as f64,
        &mut rng,
    )?;
    let units = quantize(&utils, total_units, cap_units);

    let mut tasks = Vec::with_capacity(cfg.tasks);
    for (i, &u) in units.iter().enumerate() {
        let period_units = match cfg.release_model {
            ReleaseModel::FrameBased => 1,
            ReleaseModel::PeriodicSynchronous => cfg.periods[rng.random_range(0..cfg.periods.len())],
        };
        let period: Time = period_units * res;
        let n_cs = rng.random_range(cfg.accesses_range.0..=cfg.accesses_range.1);
        let h = rng.random_range(cfg.h_range.0..=cfg.h_range.1);
        let resources: Vec<usize> = (0..n_cs).map(|_| rng.random_range(0..cfg.resources)).collect();
        // u / res of the period, in ticks.
        let wcet: Time = u * period_units;
        let segments = if wcet == 0 {
            Vec::new()
        } else {
            split_task(i, wcet, n_cs, h, &resources, &mut rng)?
        };
        tasks.push(Task::new(segments, period, period));
    }

    let mut ts = TaskSet::new(cfg.processors, cfg.resources, cfg.release_model, tasks);
    ts.resolution_denominator = res;
    Ok(ts)
}

fn split_task<R: Rng + ?Sized>(
    task: usize,
    wcet: Time,
    n_cs: usize,
    h: f64,
    resources: &[usize],
    rng: &mut R,
) -> Result<Vec<Segment>, GenError> {
    let c = wcet as f64;
    for _ in 0..MAX_RESPLITS {
        let cs = uunifast_split(h * c, n_cs, rng);
        let ncs = uunifast_split((1.0 - h) * c, n_cs + 1, rng);
        let mut real = Vec::with_capacity(2 * n_cs + 1);
        for k in 0..n_cs {
            real.push(ncs[k]);
            real.push(cs[k]);
        }
        real.push(ncs[n_cs]);
        let ticks = quantize(&real, wcet, wcet);
        if ticks.contains(&0) {
            continue;
        }
        return Ok(ticks
            .iter()
            .enumerate()
            .map(|(p, &t)| if p % 2 == 1 { Segment::critical(t, resources[p / 2]) } else { Segment::non_critical(t) })
            .collect());
    }
    Err(GenError::QuantizationUnderflow { task })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskmodel::Rational;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn forced_corner() {
        assert_eq!(random_fixed_sum(2, 1.0, 0.5, &mut rng(1)).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn infeasible_total() {
        assert!(matches!(random_fixed_sum(2, 1.5, 0.5, &mut rng(1)), Err(GenError::Infeasible { .. })));
    }

    #[test]
    fn capped_and_summing() {
        let mut r = rng(2);
        for _ in 0..200 {
            let v = random_fixed_sum(40, 4.0, 0.5, &mut r).unwrap();
            assert!(v.iter().all(|&x| (0.0..=0.5).contains(&x)));
            assert!((v.iter().sum::<f64>() - 4.0).abs() < 1e-9);
            let q = quantize(&v, 4_000_000, 500_000);
            assert_eq!(q.iter().sum::<u64>(), 4_000_000);
            assert!(q.iter().all(|&x| x <= 500_000));
        }
    }

    #[test]
    fn fixed_sum_marginal_mean() {
        let mut r = rng(3);
        let mut mean = [0.0f64; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let v = random_fixed_sum(4, 1.0, 1.0, &mut r).unwrap();
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x / draws as f64;
            }
        }
        for m in mean {
            assert!((m - 0.25).abs() <= 0.01, "{m}");
        }
    }

    #[test]
    fn fixed_sum_is_uniform_on_the_slice() {
        // For n = 3 and sum 1.5 in the unit cube, P(x < 1/4) = 5/24.
        let mut r = rng(5);
        let draws = 20_000;
        let mut below = 0;
        for _ in 0..draws {
            let v = random_fixed_sum(3, 1.5, 1.0, &mut r).unwrap();
            assert!((v.iter().sum::<f64>() - 1.5).abs() < 1e-9);
            below += usize::from(v[0] < 0.25);
        }
        assert!((below as f64 / draws as f64 - 5.0 / 24.0).abs() < 0.01);
    }

    #[test]
    fn large_sets_stay_finite() {
        let mut r = rng(6);
        for total in [0.8, 8.0, 40.0, 79.5] {
            let v = random_fixed_sum(160, total, 0.5, &mut r).unwrap();
            assert!(v.iter().all(|x| x.is_finite() && (0.0..=0.5).contains(x)));
            assert!((v.iter().sum::<f64>() - total).abs() < 1e-6);
        }
    }

    #[test]
    fn uunifast_sum_and_marginal() {
        let mut r = rng(4);
        assert_eq!(uunifast_split(3.0, 1, &mut r), vec![3.0]);
        let parts = uunifast_split(6.0, 3, &mut r);
        assert_eq!(parts.len(), 3);
        assert!(parts.iter().all(|&p| p > 0.0));
        assert!((parts.iter().sum::<f64>() - 6.0).abs() < 1e-12);
        let firsts: Vec<f64> = (0..10_000).map(|_| uunifast_split(1.0, 2, &mut r)[0]).collect();
        assert!(ks_uniform(firsts) <= 0.02);
    }

    #[test]
    fn quantize_largest_remainder() {
        assert_eq!(quantize(&[0.4, 0.35, 0.25], 10, 10), vec![4, 4, 2]);
        assert_eq!(quantize(&[1.0, 1.0, 1.0], 4, 10), vec![2, 1, 1]);
        assert_eq!(quantize(&[], 0, 1), Vec::<u64>::new());
    }

    fn small_cfg(seed: u64) -> GenConfig {
        let mut cfg = GenConfig::standard(4, 4, (0.05, 0.10), ReleaseModel::FrameBased);
        cfg.seed = seed;
        cfg
    }

    #[test]
    fn full_utilization_is_exact() {
        let ts = generate_taskset(&small_cfg(7)).unwrap();
        assert!(ts.validate().is_empty());
        assert_eq!(ts.tasks.len(), 40);
        assert_eq!(ts.total_utilization(), Rational::from_integer(4));
        assert!(ts.tasks.iter().all(|t| t.utilization() <= Rational::new(1, 2)));
    }

    #[test]
    fn interleaving_pattern() {
        let mut cfg = small_cfg(8);
        cfg.accesses_range = (2, 2);
        let ts = generate_taskset(&cfg).unwrap();
        for t in &ts.tasks {
            let crit: Vec<bool> = t.segments.iter().map(Segment::is_critical).collect();
            assert_eq!(crit, vec![false, true, false, true, false]);
        }
    }

    #[test]
    fn h_fraction_within_range() {
        let mut cfg = small_cfg(9);
        cfg.h_range = (0.10, 0.40);
        let ts = generate_taskset(&cfg).unwrap();
        for t in &ts.tasks {
            let c = t.wcet() as f64;
            let cs: u64 = t.critical_sections().map(|(_, s)| s.wcet).sum();
            let slack = t.segments.len() as f64 / c;
            let h = cs as f64 / c;
            assert!(h >= 0.10 - slack && h <= 0.40 + slack, "{h}");
        }
    }

    #[test]
    fn seeded_determinism_and_periods() {
        let mut cfg = GenConfig::standard(4, 8, (0.4, 0.5), ReleaseModel::PeriodicSynchronous);
        cfg.utilization_percent = 60;
        cfg.seed = 11;
        let a = generate_taskset(&cfg).unwrap();
        assert_eq!(a.to_json(), generate_taskset(&cfg).unwrap().to_json());
        assert!(a.validate().is_empty());
        assert_eq!(a.total_utilization(), Rational::new(12, 5));
        for t in &a.tasks {
            assert!([1, 2, 5, 10].contains(&(t.period / DEFAULT_RESOLUTION)));
            assert_eq!(t.deadline, t.period);
        }
    }

    #[test]
    fn zero_level_gives_empty_tasks() {
        let mut cfg = small_cfg(1);
        cfg.utilization_percent = 0;
        let ts = generate_taskset(&cfg).unwrap();
        assert!(ts.tasks.iter().all(|t| t.segments.is_empty()));
        assert!(ts.validate().is_empty());
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small_cfg(1);
        cfg.h_range = (0.5, 0.1);
        assert!(matches!(generate_taskset(&cfg), Err(GenError::InvalidConfig(_))));
        let mut cfg = small_cfg(1);
        cfg.tasks = 3;
        assert!(generate_taskset(&cfg).is_err());
    }
}
