//! Job-shop instances and the reductions from task sets.
//!
//! Three reductions are provided:
//!
//! * [`reduce_frame_based`]: `Z + n` machines, one per resource and one per
//!   task for its non-critical sections, makespan objective.
//! * [`reduce_with_delays`]: `Z` machines; non-critical sections become
//!   minimum gaps between critical sections, leading ones become release
//!   times and trailing ones a post-completion tail.
//! * [`reduce_periodic`]: the `Z + n` form unrolled over one hyper-period,
//!   with per-job releases and deadlines and a max-lateness objective.
//!
//! Machines `[0, Z)` always host resources and `[Z, Z + n)` the tasks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taskmodel::{ModelError, ReleaseModel, TaskSet};
use crate::time::Time;

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("reduction requires a frame-based task set")]
    NotFrameBased,
    #[error("reduction requires a periodic task set")]
    NotPeriodic,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("job {job} operation {position} uses machine {machine} but the instance has {machines}")]
    MachineOutOfRange { job: usize, position: usize, machine: usize, machines: usize },
    #[error("max-lateness objective but job {0} has no deadline")]
    MissingDeadline(usize),
    #[error("job {job} chains after job {after}, which is not an earlier non-empty job")]
    BadJobChain { job: usize, after: usize },
}

/// Where an operation came from in the task set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpSource {
    pub task: usize,
    pub occurrence: usize,
    pub segment: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShopOperation {
    pub machine: usize,
    pub processing: Time,
    /// Minimum delay between the previous operation's completion and this
    /// operation's start.
    pub min_gap_after_prev: Time,
    pub source: Option<OpSource>,
}

impl ShopOperation {
    pub fn new(machine: usize, processing: Time) -> Self {
        ShopOperation { machine, processing, min_gap_after_prev: 0, source: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShopJob {
    pub operations: Vec<ShopOperation>,
    pub release: Time,
    pub abs_deadline: Option<Time>,
    /// Work that follows the last operation but occupies no machine.
    pub tail: Time,
    /// The job may only start after this job has completed (tail included).
    pub after_job: Option<usize>,
}

impl ShopJob {
    pub fn new(operations: Vec<ShopOperation>) -> Self {
        ShopJob { operations, ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Makespan,
    MaxLateness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MachineRole {
    Resource(usize),
    TaskDedicated(usize),
    Generic,
}

/// A task dropped from the delay-form reduction because it has no critical
/// section; it still finishes `length` after time zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmittedTask {
    pub task: usize,
    pub length: Time,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobShopInstance {
    pub machines: usize,
    pub jobs: Vec<ShopJob>,
    pub objective: Objective,
    pub machine_roles: Vec<MachineRole>,
    pub omitted: Vec<OmittedTask>,
}

/// Position of an operation: job index and position within the job's chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpId {
    pub job: usize,
    pub pos: usize,
}

impl JobShopInstance {
    /// A plain makespan instance over `machines` generic machines.
    pub fn new(machines: usize, jobs: Vec<ShopJob>) -> Self {
        JobShopInstance {
            machines,
            jobs,
            objective: Objective::Makespan,
            machine_roles: vec![MachineRole::Generic; machines],
            omitted: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        for (j, job) in self.jobs.iter().enumerate() {
            for (p, op) in job.operations.iter().enumerate() {
                if op.machine >= self.machines {
                    return Err(InstanceError::MachineOutOfRange {
                        job: j,
                        position: p,
                        machine: op.machine,
                        machines: self.machines,
                    });
                }
            }
            if self.objective == Objective::MaxLateness && job.abs_deadline.is_none() {
                return Err(InstanceError::MissingDeadline(j));
            }
            if let Some(a) = job.after_job {
                if a >= j || self.jobs[a].operations.is_empty() {
                    return Err(InstanceError::BadJobChain { job: j, after: a });
                }
            }
        }
        Ok(())
    }

    pub fn op(&self, id: OpId) -> &ShopOperation {
        &self.jobs[id.job].operations[id.pos]
    }

    pub fn num_ops(&self) -> usize {
        self.jobs.iter().map(|j| j.operations.len()).sum()
    }

    pub fn op_ids(&self) -> impl Iterator<Item = OpId> + '_ {
        self.jobs
            .iter()
            .enumerate()
            .flat_map(|(job, j)| (0..j.operations.len()).map(move |pos| OpId { job, pos }))
    }

    /// Total processing time per machine.
    pub fn machine_loads(&self) -> Vec<Time> {
        let mut loads = vec![0; self.machines];
        for job in &self.jobs {
            for op in &job.operations {
                loads[op.machine] += op.processing;
            }
        }
        loads
    }

    pub fn total_processing(&self) -> Time {
        self.machine_loads().iter().sum()
    }

    /// Finds the operation that came from a given task segment occurrence.
    pub fn find_source(&self, source: OpSource) -> Option<OpId> {
        self.op_ids().find(|&id| self.op(id).source == Some(source))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

fn roles(ts: &TaskSet) -> Vec<MachineRole> {
    (0..ts.resources)
        .map(MachineRole::Resource)
        .chain((0..ts.tasks.len()).map(MachineRole::TaskDedicated))
        .collect()
}

fn segment_machine(ts: &TaskSet, task: usize, resource: Option<usize>) -> usize {
    resource.unwrap_or(ts.resources + task)
}

fn full_chain(ts: &TaskSet, task: usize, occurrence: usize) -> Vec<ShopOperation> {
    ts.tasks[task]
        .segments
        .iter()
        .enumerate()
        .map(|(segment, seg)| ShopOperation {
            machine: segment_machine(ts, task, seg.resource),
            processing: seg.wcet,
            min_gap_after_prev: 0,
            source: Some(OpSource { task, occurrence, segment }),
        })
        .collect()
}

/// `Z + n`-machine makespan form of a frame-based task set.
pub fn reduce_frame_based(ts: &TaskSet) -> Result<JobShopInstance, ReduceError> {
    if ts.release_model != ReleaseModel::FrameBased {
        return Err(ReduceError::NotFrameBased);
    }
    let jobs = (0..ts.tasks.len()).map(|i| ShopJob::new(full_chain(ts, i, 0))).collect();
    Ok(JobShopInstance {
        machines: ts.resources + ts.tasks.len(),
        jobs,
        objective: Objective::Makespan,
        machine_roles: roles(ts),
        omitted: Vec::new(),
    })
}

/// `Z`-machine form with release times, chain delays and tails.
pub fn reduce_with_delays(ts: &TaskSet) -> Result<JobShopInstance, ReduceError> {
    if ts.release_model != ReleaseModel::FrameBased {
        return Err(ReduceError::NotFrameBased);
    }
    let mut jobs = Vec::new();
    let mut omitted = Vec::new();
    for (i, task) in ts.tasks.iter().enumerate() {
        if task.num_critical() == 0 {
            omitted.push(OmittedTask { task: i, length: task.wcet() });
            continue;
        }
        let mut job = ShopJob::default();
        let mut pending: Time = 0;
        for (segment, seg) in task.segments.iter().enumerate() {
            match seg.resource {
                None => pending += seg.wcet,
                Some(z) => {
                    let gap = if job.operations.is_empty() {
                        job.release = pending;
                        0
                    } else {
                        pending
                    };
                    job.operations.push(ShopOperation {
                        machine: z,
                        processing: seg.wcet,
                        min_gap_after_prev: gap,
                        source: Some(OpSource { task: i, occurrence: 0, segment }),
                    });
                    pending = 0;
                }
            }
        }
        job.tail = pending;
        jobs.push(job);
    }
    Ok(JobShopInstance {
        machines: ts.resources,
        jobs,
        objective: Objective::Makespan,
        machine_roles: (0..ts.resources).map(MachineRole::Resource).collect(),
        omitted,
    })
}

/// `Z + n`-machine max-lateness form with all jobs of one hyper-period.
///
/// Occurrence `ℓ + 1` of a task is chained after occurrence `ℓ` so that the
/// jobs of one task never overlap.
pub fn reduce_periodic(ts: &TaskSet) -> Result<JobShopInstance, ReduceError> {
    if ts.release_model != ReleaseModel::PeriodicSynchronous {
        return Err(ReduceError::NotPeriodic);
    }
    let hyper = ts.hyperperiod()?;
    let mut jobs: Vec<ShopJob> = Vec::new();
    for (i, task) in ts.tasks.iter().enumerate() {
        if task.segments.is_empty() {
            continue;
        }
        let count = hyper / task.period;
        for occurrence in 0..count as usize {
            let release = occurrence as Time * task.period;
            let after_job = (occurrence > 0).then(|| jobs.len() - 1);
            jobs.push(ShopJob {
                operations: full_chain(ts, i, occurrence),
                release,
                abs_deadline: Some(release + task.deadline),
                tail: 0,
                after_job,
            });
        }
    }
    Ok(JobShopInstance {
        machines: ts.resources + ts.tasks.len(),
        jobs,
        objective: Objective::MaxLateness,
        machine_roles: roles(ts),
        omitted: Vec::new(),
    })
}

/// Dispatches to the reduction matching the task set's release model.
pub fn reduce(ts: &TaskSet) -> Result<JobShopInstance, ReduceError> {
    match ts.release_model {
        ReleaseModel::FrameBased => reduce_frame_based(ts),
        ReleaseModel::PeriodicSynchronous => reduce_periodic(ts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskmodel::{Segment, Task};

    fn nc(c: Time) -> Segment {
        Segment::non_critical(c)
    }
    fn cs(c: Time, r: usize) -> Segment {
        Segment::critical(c, r)
    }
    fn frame(z: usize, tasks: Vec<Vec<Segment>>) -> TaskSet {
        TaskSet::new(2, z, ReleaseModel::FrameBased, tasks.into_iter().map(|s| Task::new(s, 100, 100)).collect())
    }

    #[test]
    fn frame_single_non_critical() {
        let inst = reduce_frame_based(&frame(1, vec![vec![nc(2)]])).unwrap();
        assert_eq!(inst.machines, 2);
        assert_eq!(inst.jobs.len(), 1);
        assert_eq!(inst.jobs[0].operations[0].machine, 1);
        assert_eq!(inst.machine_roles, vec![MachineRole::Resource(0), MachineRole::TaskDedicated(0)]);
    }

    #[test]
    fn frame_four_tasks_two_resources() {
        let task = vec![nc(1), cs(1, 0), nc(1), cs(1, 1), nc(1)];
        let inst = reduce_frame_based(&frame(2, vec![task; 4])).unwrap();
        assert_eq!(inst.machines, 6);
        assert_eq!(inst.jobs.len(), 4);
        assert!(inst.jobs.iter().all(|j| j.operations.len() == 5));
        assert_eq!(inst.jobs[3].operations[2].machine, 5);
    }

    #[test]
    fn frame_rejects_periodic() {
        let ts = TaskSet::new(1, 1, ReleaseModel::PeriodicSynchronous, vec![]);
        assert!(matches!(reduce_frame_based(&ts), Err(ReduceError::NotFrameBased)));
        assert!(matches!(reduce_with_delays(&ts), Err(ReduceError::NotFrameBased)));
    }

    #[test]
    fn delays_leading_non_critical_is_release() {
        let inst = reduce_with_delays(&frame(1, vec![vec![nc(3), cs(2, 0)]])).unwrap();
        let job = &inst.jobs[0];
        assert_eq!(job.release, 3);
        assert_eq!(job.operations.len(), 1);
        assert_eq!((job.operations[0].machine, job.operations[0].processing), (0, 2));
        assert_eq!(job.operations[0].min_gap_after_prev, 0);
    }

    #[test]
    fn delays_gap_between_critical_sections() {
        let inst = reduce_with_delays(&frame(2, vec![vec![cs(1, 0), nc(4), cs(1, 1)]])).unwrap();
        let ops = &inst.jobs[0].operations;
        assert_eq!(ops.len(), 2);
        assert_eq!(ops[1].min_gap_after_prev, 4);
        assert_eq!(ops[1].machine, 1);
    }

    #[test]
    fn delays_adjacent_critical_sections() {
        let inst = reduce_with_delays(&frame(2, vec![vec![cs(1, 0), cs(1, 1), nc(5)]])).unwrap();
        let job = &inst.jobs[0];
        assert_eq!(job.operations[1].min_gap_after_prev, 0);
        assert_eq!(job.tail, 5);
    }

    #[test]
    fn delays_omit_tasks_without_critical_sections() {
        let inst = reduce_with_delays(&frame(1, vec![vec![nc(7)], vec![cs(1, 0)]])).unwrap();
        assert_eq!(inst.jobs.len(), 1);
        assert_eq!(inst.omitted, vec![OmittedTask { task: 0, length: 7 }]);
    }

    #[test]
    fn periodic_unrolls_hyperperiod() {
        let ts = TaskSet::new(
            2,
            1,
            ReleaseModel::PeriodicSynchronous,
            vec![Task::new(vec![cs(1, 0)], 5, 5), Task::new(vec![nc(1)], 10, 10)],
        );
        let inst = reduce_periodic(&ts).unwrap();
        assert_eq!(inst.objective, Objective::MaxLateness);
        let releases: Vec<_> = inst.jobs.iter().map(|j| (j.release, j.abs_deadline)).collect();
        assert_eq!(releases, vec![(0, Some(5)), (5, Some(10)), (0, Some(10))]);
        assert_eq!(inst.jobs[1].after_job, Some(0));
        assert_eq!(inst.jobs[2].after_job, None);
        assert_eq!(inst.validate(), Ok(()));
    }

    #[test]
    fn periodic_single_task_matches_frame_machines() {
        let segs = vec![nc(1), cs(2, 0), nc(1)];
        let p = TaskSet::new(1, 1, ReleaseModel::PeriodicSynchronous, vec![Task::new(segs.clone(), 9, 9)]);
        let f = TaskSet::new(1, 1, ReleaseModel::FrameBased, vec![Task::new(segs, 9, 9)]);
        let pi = reduce_periodic(&p).unwrap();
        let fi = reduce_frame_based(&f).unwrap();
        assert_eq!(pi.jobs.len(), 1);
        let machines = |i: &JobShopInstance| i.jobs[0].operations.iter().map(|o| o.machine).collect::<Vec<_>>();
        assert_eq!(machines(&pi), machines(&fi));
    }

    #[test]
    fn periodic_long_period_task_has_one_job() {
        let segs = vec![nc(1), cs(1, 1), nc(1), cs(1, 0), nc(1)];
        let mut tasks: Vec<Task> = (0..4).map(|_| Task::new(segs.clone(), 25, 25)).collect();
        tasks.push(Task::new(segs, 50, 50));
        let ts = TaskSet::new(2, 2, ReleaseModel::PeriodicSynchronous, tasks);
        let inst = reduce_periodic(&ts).unwrap();
        assert_eq!(inst.jobs.len(), 9);
        let fifth = inst.jobs.iter().filter(|j| j.operations[0].source.unwrap().task == 4).count();
        assert_eq!(fifth, 1);
    }

    #[test]
    fn validate_catches_bad_machine() {
        let inst = JobShopInstance::new(1, vec![ShopJob::new(vec![ShopOperation::new(1, 1)])]);
        assert!(matches!(inst.validate(), Err(InstanceError::MachineOutOfRange { .. })));
    }
}
