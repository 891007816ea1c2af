//! Shard-parallel scheduling for multi-model deep-learning training.
//!
//! Training many candidate models at once gives a scheduler more than one
//! chain of work to choose from. This crate expands each model's training job
//! into per-shard forward/backward tasks, schedules them with one of three
//! policies, and simulates the result on a cluster of devices:
//!
//! - [`Policy::TaskParallel`]: each whole model trains on one device;
//! - [`Policy::ModelParallel`]: one model at a time, sharded across devices;
//! - [`Policy::ShardParallel`]: any ready shard task of any model runs on
//!   any idle device.
//!
//! [`numkernel`] holds a small dense network whose shard-by-shard training is
//! bit-for-bit identical to monolithic training.
//!
//! ```
//! use shardsim::{generate_synthetic, simulate, Exact, Policy};
//!
//! let spec = generate_synthetic(4, 4, 4, (Exact::ONE, Exact::ONE), "tight", 0).unwrap();
//! let (metrics, _trace) = simulate(&spec, Policy::ShardParallel).unwrap();
//! assert_eq!(metrics.makespan, Exact::from_int(8));
//! ```

pub mod cli;
pub mod exact;
pub mod numkernel;
pub mod scheduler;
pub mod simengine;
pub mod taskgraph;
pub mod workload;

pub use exact::Exact;
pub use scheduler::{Assignment, Policy};
pub use simengine::{
    lower_bounds, simulate, verify_trace, LowerBounds, Metrics, SimError, Trace, TraceDoc,
};
pub use taskgraph::{Direction, TaskGraph, TaskId};
pub use workload::{
    generate_synthetic, parse_workload, serialize_workload, DeviceSpec, MemoryProfile, ModelSpec,
    ShardSpec, SyntheticParams, WorkloadSpec,
};
