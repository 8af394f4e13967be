//! Sporadic task model with alternating critical and non-critical segments.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{checked_lcm, Time, DEFAULT_RESOLUTION};

/// Exact rational used for utilizations and workload bounds.
pub type Rational = Ratio<u128>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("hyper-period overflows the time representation: lcm({acc}, {period}) at task {task}")]
    HyperperiodOverflow { acc: Time, period: Time, task: usize },
    #[error("invalid task set: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("malformed task set JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// One computation segment of a task. `resource` is `Some` iff the segment
/// is a critical section guarded by that resource's mutex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub wcet: Time,
    pub resource: Option<usize>,
}

impl Segment {
    pub fn critical(wcet: Time, resource: usize) -> Self {
        Segment { wcet, resource: Some(resource) }
    }

    pub fn non_critical(wcet: Time) -> Self {
        Segment { wcet, resource: None }
    }

    pub fn is_critical(&self) -> bool {
        self.resource.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub period: Time,
    pub deadline: Time,
    pub segments: Vec<Segment>,
}

impl Task {
    pub fn new(segments: Vec<Segment>, period: Time, deadline: Time) -> Self {
        Task { period, deadline, segments }
    }

    /// Total WCET `C_i`.
    pub fn wcet(&self) -> Time {
        self.segments.iter().map(|s| s.wcet).sum()
    }

    /// Exact `C_i / T_i`.
    pub fn utilization(&self) -> Rational {
        Rational::new(u128::from(self.wcet()), u128::from(self.period))
    }

    pub fn critical_sections(&self) -> impl Iterator<Item = (usize, &Segment)> {
        self.segments.iter().enumerate().filter(|(_, s)| s.is_critical())
    }

    pub fn num_critical(&self) -> usize {
        self.critical_sections().count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReleaseModel {
    /// All tasks share one period and deadline and release together.
    #[serde(rename = "frame")]
    FrameBased,
    /// Periodic tasks, all first released at time zero.
    #[serde(rename = "periodic")]
    PeriodicSynchronous,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSet {
    pub processors: usize,
    pub resources: usize,
    pub release_model: ReleaseModel,
    /// Ticks per base time unit.
    pub resolution_denominator: u64,
    pub tasks: Vec<Task>,
}

/// A violated model constraint. Task and segment indices are zero-based
/// internally and printed one-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoProcessors,
    NoResources,
    ZeroResolution,
    ZeroPeriod { task: usize },
    DeadlineExceedsPeriod { task: usize, deadline: Time, period: Time },
    AdjacentNonCritical { task: usize, position: usize },
    ZeroLengthSegment { task: usize, segment: usize },
    ResourceOutOfRange { task: usize, segment: usize, resource: usize },
    FrameMismatch { task: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NoProcessors => write!(f, "processor count must be at least 1"),
            Violation::NoResources => write!(f, "resource count must be at least 1"),
            Violation::ZeroResolution => write!(f, "resolution denominator must be positive"),
            Violation::ZeroPeriod { task } => write!(f, "zero period at τ_{}", task + 1),
            Violation::DeadlineExceedsPeriod { task, deadline, period } => write!(
                f,
                "deadline exceeds period at τ_{} ({deadline} > {period})",
                task + 1
            ),
            Violation::AdjacentNonCritical { task, position } => write!(
                f,
                "adjacent non-critical at τ_{} positions {},{}",
                task + 1,
                position + 1,
                position + 2
            ),
            Violation::ZeroLengthSegment { task, segment } => {
                write!(f, "zero-length segment at τ_{} position {}", task + 1, segment + 1)
            }
            Violation::ResourceOutOfRange { task, segment, resource } => write!(
                f,
                "resource {resource} out of range at τ_{} position {}",
                task + 1,
                segment + 1
            ),
            Violation::FrameMismatch { task } => write!(
                f,
                "frame-based set requires equal periods and deadlines, τ_{} differs",
                task + 1
            ),
        }
    }
}

/// Witness for [`TaskSet::classify_access_pattern`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AccessPattern {
    /// Every task visits resources consistently with this total order.
    FlowShopCompatible(Vec<usize>),
    JobShopOnly,
}

impl TaskSet {
    pub fn new(processors: usize, resources: usize, release_model: ReleaseModel, tasks: Vec<Task>) -> Self {
        TaskSet {
            processors,
            resources,
            release_model,
            resolution_denominator: DEFAULT_RESOLUTION,
            tasks,
        }
    }

    /// Parses and validates a task set document.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let ts: TaskSet = serde_json::from_str(text)?;
        let violations = ts.validate();
        if violations.is_empty() {
            Ok(ts)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task set serializes")
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.processors == 0 {
            out.push(Violation::NoProcessors);
        }
        if self.resources == 0 {
            out.push(Violation::NoResources);
        }
        if self.resolution_denominator == 0 {
            out.push(Violation::ZeroResolution);
        }
        for (i, task) in self.tasks.iter().enumerate() {
            if task.period == 0 {
                out.push(Violation::ZeroPeriod { task: i });
            }
            if task.deadline > task.period {
                out.push(Violation::DeadlineExceedsPeriod {
                    task: i,
                    deadline: task.deadline,
                    period: task.period,
                });
            }
            for (j, seg) in task.segments.iter().enumerate() {
                if seg.wcet == 0 {
                    out.push(Violation::ZeroLengthSegment { task: i, segment: j });
                }
                if let Some(z) = seg.resource {
                    if z >= self.resources {
                        out.push(Violation::ResourceOutOfRange { task: i, segment: j, resource: z });
                    }
                }
            }
            for (j, pair) in task.segments.windows(2).enumerate() {
                if !pair[0].is_critical() && !pair[1].is_critical() {
                    out.push(Violation::AdjacentNonCritical { task: i, position: j });
                }
            }
            if self.release_model == ReleaseModel::FrameBased {
                let first = &self.tasks[0];
                if task.period != first.period || task.deadline != first.deadline {
                    out.push(Violation::FrameMismatch { task: i });
                }
            }
        }
        out
    }

    pub fn hyperperiod(&self) -> Result<Time, ModelError> {
        let mut acc: Time = 1;
        for (i, task) in self.tasks.iter().enumerate() {
            acc = checked_lcm(acc, task.period).ok_or(ModelError::HyperperiodOverflow {
                acc,
                period: task.period,
                task: i,
            })?;
        }
        Ok(if self.tasks.is_empty() { 0 } else { acc })
    }

    /// Number of jobs task `i` releases in one hyper-period.
    pub fn jobs_per_hyperperiod(&self, i: usize) -> Result<u64, ModelError> {
        match self.release_model {
            ReleaseModel::FrameBased => Ok(1),
            ReleaseModel::PeriodicSynchronous => Ok(self.hyperperiod()? / self.tasks[i].period),
        }
    }

    pub fn total_wcet(&self) -> Time {
        self.tasks.iter().map(Task::wcet).sum()
    }

    pub fn total_utilization(&self) -> Rational {
        self.tasks.iter().map(Task::utilization).sum()
    }

    /// `Σ C_i / M`, the average per-processor workload.
    pub fn workload_bound(&self) -> Rational {
        Rational::new(u128::from(self.total_wcet()), self.processors.max(1) as u128)
    }

    pub fn classify_access_pattern(&self) -> AccessPattern {
        let z = self.resources;
        let mut before: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); z];
        for task in &self.tasks {
            let seq: Vec<usize> = task.segments.iter().filter_map(|s| s.resource).collect();
            let distinct: BTreeSet<usize> = seq.iter().copied().collect();
            if distinct.len() != seq.len() {
                return AccessPattern::JobShopOnly;
            }
            for w in seq.windows(2) {
                before[w[1]].insert(w[0]);
            }
        }
        // Kahn's algorithm, lowest index first.
        let mut indegree: Vec<usize> = before.iter().map(BTreeSet::len).collect();
        let mut ready: BTreeSet<usize> = (0..z).filter(|&r| indegree[r] == 0).collect();
        let mut order = Vec::with_capacity(z);
        while let Some(r) = ready.pop_first() {
            order.push(r);
            for (succ, preds) in before.iter().enumerate() {
                if preds.contains(&r) {
                    indegree[succ] -= 1;
                    if indegree[succ] == 0 {
                        ready.insert(succ);
                    }
                }
            }
        }
        if order.len() == z {
            AccessPattern::FlowShopCompatible(order)
        } else {
            AccessPattern::JobShopOnly
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nc(c: Time) -> Segment {
        Segment::non_critical(c)
    }
    fn cs(c: Time, r: usize) -> Segment {
        Segment::critical(c, r)
    }

    fn single(task: Task) -> TaskSet {
        TaskSet::new(1, 1, ReleaseModel::PeriodicSynchronous, vec![task])
    }

    #[test]
    fn adjacent_non_critical_is_reported() {
        let v = single(Task::new(vec![nc(2), nc(3)], 10, 10)).validate();
        assert_eq!(v, vec![Violation::AdjacentNonCritical { task: 0, position: 0 }]);
        assert_eq!(v[0].to_string(), "adjacent non-critical at τ_1 positions 1,2");
    }

    #[test]
    fn minimal_alternation_is_valid() {
        assert!(single(Task::new(vec![nc(1), cs(1, 0), nc(1)], 5, 5)).validate().is_empty());
    }

    #[test]
    fn constrained_deadline() {
        let v = single(Task::new(vec![cs(1, 0)], 5, 6)).validate();
        assert!(matches!(v[0], Violation::DeadlineExceedsPeriod { task: 0, .. }));
        assert!(v[0].to_string().starts_with("deadline exceeds period"));
    }

    #[test]
    fn zero_segments_and_bad_resources() {
        let ts = TaskSet::new(1, 1, ReleaseModel::FrameBased, vec![Task::new(vec![cs(0, 0), nc(1), cs(1, 3)], 5, 5)]);
        let v = ts.validate();
        assert!(v.contains(&Violation::ZeroLengthSegment { task: 0, segment: 0 }));
        assert!(v.contains(&Violation::ResourceOutOfRange { task: 0, segment: 2, resource: 3 }));
    }

    #[test]
    fn frame_based_requires_common_period() {
        let ts = TaskSet::new(
            2,
            1,
            ReleaseModel::FrameBased,
            vec![Task::new(vec![nc(1)], 5, 5), Task::new(vec![nc(1)], 6, 6)],
        );
        assert_eq!(ts.validate(), vec![Violation::FrameMismatch { task: 1 }]);
    }

    #[test]
    fn parse_rejects_zero_length_non_critical() {
        let json = r#"{"processors":1,"resources":1,"release_model":"frame","resolution_denominator":1,
            "tasks":[{"period":4,"deadline":4,"segments":[{"wcet":0,"resource":null},{"wcet":1,"resource":0}]}]}"#;
        assert!(matches!(TaskSet::from_json(json), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn json_layout() {
        let ts = TaskSet::new(2, 1, ReleaseModel::FrameBased, vec![Task::new(vec![nc(1), cs(2, 0)], 4, 4)]);
        let value: serde_json::Value = serde_json::from_str(&ts.to_json()).unwrap();
        assert_eq!(value["release_model"], "frame");
        assert_eq!(value["tasks"][0]["segments"][0]["resource"], serde_json::Value::Null);
        assert_eq!(value["tasks"][0]["segments"][1]["resource"], 0);
        assert_eq!(TaskSet::from_json(&ts.to_json()).unwrap(), ts);
    }

    fn periodic(periods: &[Time]) -> TaskSet {
        TaskSet::new(
            1,
            1,
            ReleaseModel::PeriodicSynchronous,
            periods.iter().map(|&p| Task::new(vec![nc(1)], p, p)).collect(),
        )
    }

    #[test]
    fn hyperperiods() {
        assert_eq!(periodic(&[1, 2, 5, 10]).hyperperiod().unwrap(), 10);
        assert_eq!(periodic(&[7]).hyperperiod().unwrap(), 7);
        assert_eq!(periodic(&[4, 6]).hyperperiod().unwrap(), 12);
        let err = periodic(&[u64::MAX - 1, u64::MAX - 2]).hyperperiod().unwrap_err();
        assert!(err.to_string().contains("lcm("), "{err}");
    }

    #[test]
    fn utilizations() {
        assert_eq!(Task::new(vec![cs(2, 0)], 5, 5).utilization(), Rational::new(2, 5));
        assert_eq!(Task::new(vec![], 5, 5).utilization(), Rational::new(0, 1));
        assert_eq!(
            Task::new(vec![nc(1), cs(1, 0), nc(2)], 10, 10).utilization(),
            Rational::new(4, 10)
        );
    }

    fn pattern(seqs: &[&[usize]]) -> AccessPattern {
        let tasks = seqs
            .iter()
            .map(|seq| {
                let mut segs = Vec::new();
                for &r in *seq {
                    segs.push(cs(1, r));
                    segs.push(nc(1));
                }
                Task::new(segs, 100, 100)
            })
            .collect();
        TaskSet::new(1, 2, ReleaseModel::FrameBased, tasks).classify_access_pattern()
    }

    #[test]
    fn access_patterns() {
        assert_eq!(pattern(&[&[0, 1], &[1]]), AccessPattern::FlowShopCompatible(vec![0, 1]));
        assert_eq!(pattern(&[&[1], &[1, 0]]), AccessPattern::FlowShopCompatible(vec![1, 0]));
        assert_eq!(pattern(&[&[0, 1], &[1, 0]]), AccessPattern::JobShopOnly);
        assert_eq!(pattern(&[&[0, 0]]), AccessPattern::JobShopOnly);
    }
}
