//! Dependency-graph scheduling for multiprocessor real-time tasks that
//! access shared resources through multiple critical sections.
//!
//! The pipeline reduces a task set to a job-shop instance, solves it, reads
//! the per-resource execution order off the shop schedule into a dependency
//! graph, and then schedules that graph on `M` processors with LIST-EDF or
//! partitioned EDF. Schedulability is decided exactly by simulating one
//! hyper-period.
//!
//! ```
//! use dga::taskmodel::{Segment, Task, TaskSet, ReleaseModel};
//! use dga::jobshop::reduce_frame_based;
//! use dga::solver::{solve_exact, ExactLimits};
//! use dga::depgraph::DependencyGraph;
//!
//! let ts = TaskSet::new(
//!     2,
//!     1,
//!     ReleaseModel::FrameBased,
//!     vec![
//!         Task::new(vec![Segment::critical(1, 0), Segment::non_critical(2)], 10, 10),
//!         Task::new(vec![Segment::non_critical(2), Segment::critical(1, 0)], 10, 10),
//!     ],
//! );
//! let inst = reduce_frame_based(&ts).unwrap();
//! let sched = solve_exact(&inst, &ExactLimits::default()).schedule().clone();
//! let graph = DependencyGraph::from_schedule(&ts, &inst, &sched).unwrap();
//! assert_eq!(graph.critical_path_length().unwrap(), 3);
//! ```

pub mod depgraph;
pub mod generator;
pub mod harness;
pub mod jobshop;
pub mod oracle;
pub mod scheduler;
pub mod solver;
pub mod taskmodel;
pub mod tickets;
pub mod time;

pub use time::Time;
