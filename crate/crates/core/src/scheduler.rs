//! Placement policies: task-parallel, model-parallel and shard-parallel.
//!
//! Each policy is a pure decision function called by the simulator whenever
//! the set of ready tasks or idle devices changes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::exact::Exact;
use crate::taskgraph::{Direction, Task, TaskGraph, TaskId};
use crate::workload::WorkloadSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    /// Whole models, each pinned to device `model mod D`.
    TaskParallel,
    /// One model at a time, shard `s` statically on device `s mod D`.
    ModelParallel,
    /// Any ready shard task of any model on the lowest-id idle device.
    ShardParallel,
}

impl Policy {
    pub const ALL: [Policy; 3] = [
        Policy::ShardParallel,
        Policy::ModelParallel,
        Policy::TaskParallel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::TaskParallel => "task",
            Policy::ModelParallel => "model",
            Policy::ShardParallel => "shard",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown policy `{0}` (expected task, model or shard)")]
pub struct UnknownPolicy(pub String);

impl FromStr for Policy {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "task" => Ok(Policy::TaskParallel),
            "model" => Ok(Policy::ModelParallel),
            "shard" => Ok(Policy::ShardParallel),
            other => Err(UnknownPolicy(other.to_string())),
        }
    }
}

/// Runtime view of one device.
///
/// Stashed activations are tracked but do not count against capacity: they
/// spill to host memory at no cost. Only the running task's working set is
/// resident.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceState {
    pub id: usize,
    pub busy_until: Exact,
    pub running: Option<TaskId>,
    pub resident_working_set: Exact,
    pub stashes: BTreeSet<TaskId>,
}

impl DeviceState {
    pub fn new(id: usize) -> Self {
        Self {
            id,
            busy_until: Exact::ZERO,
            running: None,
            resident_working_set: Exact::ZERO,
            stashes: BTreeSet::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.running.is_none()
    }
}

/// One scheduled execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub task: TaskId,
    pub device: usize,
    pub start: Exact,
    pub end: Exact,
}

/// Device each already-started task was placed on.
pub type Placements = HashMap<TaskId, usize>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedError {
    #[error("{0} has no placed forward task to take activations from")]
    MissingForward(TaskId),
    #[error("task {0} is not part of the graph")]
    UnknownTask(TaskId),
    #[error(
        "task parallelism infeasible: model {model} needs {residency} memory units on device {device} (capacity {capacity})"
    )]
    TaskParallelInfeasible {
        model: u32,
        device: usize,
        residency: Exact,
        capacity: Exact,
    },
}

/// Everything a decision may look at; an immutable snapshot.
#[derive(Debug, Clone, Copy)]
pub struct SchedContext<'a> {
    pub spec: &'a WorkloadSpec,
    pub graph: &'a TaskGraph,
    /// Indexed by device id.
    pub devices: &'a [DeviceState],
    pub placements: &'a Placements,
    /// Models with at least one task not yet completed.
    pub unfinished_models: &'a BTreeSet<u32>,
}

/// Backward tasks must run where their forward stashed activations; forward
/// tasks are free.
pub fn affinity_of(task: &TaskId, placements: &Placements) -> Result<Option<usize>, SchedError> {
    match task.matching_fwd() {
        None => Ok(None),
        Some(fwd) => placements
            .get(&fwd)
            .map(|&d| Some(d))
            .ok_or(SchedError::MissingForward(*task)),
    }
}

/// Device a task-parallel model is pinned to.
pub fn pinned_device(model: u32, n_devices: usize) -> usize {
    model as usize % n_devices
}

/// Device a model-parallel shard is statically placed on.
pub fn static_device(shard: u32, n_devices: usize) -> usize {
    shard as usize % n_devices
}

/// Memory, idleness and affinity check for one (task, device) pair, plus
/// pinning and whole-model residency under task parallelism.
pub fn feasible(
    policy: Policy,
    task: &Task,
    device: &DeviceState,
    spec: &WorkloadSpec,
    placements: &Placements,
) -> bool {
    let Some(dev) = spec.device(device.id) else {
        return false;
    };
    if !device.is_idle() || task.working_set > dev.memory_capacity {
        return false;
    }
    match affinity_of(&task.id, placements) {
        Ok(Some(d)) if d != device.id => return false,
        Err(_) => return false,
        _ => {}
    }
    if policy == Policy::TaskParallel {
        if device.id != pinned_device(task.id.model, spec.devices.len()) {
            return false;
        }
        match spec.model(task.id.model) {
            Some(m) if m.full_residency() <= dev.memory_capacity => {}
            _ => return false,
        }
    }
    true
}

/// Chooses which ready tasks start now and where. Each device receives at
/// most one task; ties go to the lowest device id.
pub fn decide(
    policy: Policy,
    ready: &[TaskId],
    ctx: &SchedContext<'_>,
) -> Result<Vec<(TaskId, usize)>, SchedError> {
    let mut taken = vec![false; ctx.devices.len()];
    let mut out = Vec::new();
    let n_devices = ctx.devices.len();

    let lookup = |id: &TaskId| ctx.graph.task(id).ok_or(SchedError::UnknownTask(*id));
    let try_place = |task: &Task, device: usize, taken: &mut Vec<bool>, out: &mut Vec<_>| {
        if device < n_devices
            && !taken[device]
            && feasible(policy, task, &ctx.devices[device], ctx.spec, ctx.placements)
        {
            taken[device] = true;
            out.push((task.id, device));
            true
        } else {
            false
        }
    };

    match policy {
        Policy::ShardParallel => {
            // Affinity-bound tasks claim their devices before free ones walk.
            let mut free = Vec::new();
            for id in ready {
                let task = lookup(id)?;
                match affinity_of(id, ctx.placements)? {
                    Some(d) => {
                        try_place(task, d, &mut taken, &mut out);
                    }
                    None => free.push(task),
                }
            }
            for task in free {
                for d in 0..n_devices {
                    if try_place(task, d, &mut taken, &mut out) {
                        break;
                    }
                }
            }
        }
        Policy::ModelParallel => {
            let Some(&active) = ctx.unfinished_models.first() else {
                return Ok(out);
            };
            for id in ready.iter().filter(|t| t.model == active) {
                let task = lookup(id)?;
                let target = match affinity_of(id, ctx.placements)? {
                    Some(d) => d,
                    None => static_device(id.shard, n_devices),
                };
                try_place(task, target, &mut taken, &mut out);
            }
        }
        Policy::TaskParallel => {
            for id in ready {
                let task = lookup(id)?;
                let device = pinned_device(id.model, n_devices);
                let capacity = ctx
                    .spec
                    .device(device)
                    .map_or(Exact::ZERO, |d| d.memory_capacity);
                let residency = ctx
                    .spec
                    .model(id.model)
                    .map_or(Exact::ZERO, |m| m.full_residency());
                if residency > capacity {
                    return Err(SchedError::TaskParallelInfeasible {
                        model: id.model,
                        device,
                        residency,
                        capacity,
                    });
                }
                if id.direction == Direction::Bwd {
                    affinity_of(id, ctx.placements)?;
                }
                try_place(task, device, &mut taken, &mut out);
            }
        }
    }
    Ok(out)
}
