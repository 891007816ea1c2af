//! Deterministic discrete-event simulation of a policy over a task graph.
//!
//! Time is exact. Completion events are ordered by `(time, device, task)`;
//! all completions at one instant are applied before the policy is asked for
//! new assignments, so a device finishing at `t` is idle at `t`.

mod trace;
mod verify;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

pub use trace::{fingerprint, Metrics, Trace, TraceDoc};
pub use verify::{verify_trace, TraceViolation};

use crate::exact::Exact;
use crate::scheduler::{
    decide, Assignment, DeviceState, Placements, Policy, SchedContext, SchedError,
};
use crate::taskgraph::{TaskGraph, TaskId};
use crate::workload::{Violation, WorkloadSpec};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid workload: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidWorkload(Vec<Violation>),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error("deadlock at t={time}: {} task(s) can never start, first {}", .blocked.len(), .blocked.first().map(ToString::to_string).unwrap_or_default())]
    Deadlock { time: Exact, blocked: Vec<TaskId> },
}

impl SimError {
    /// True when the policy cannot run this workload at all, as opposed to
    /// bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            SimError::Sched(SchedError::TaskParallelInfeasible { .. }) | SimError::Deadlock { .. }
        )
    }
}

/// `work` spreads all task cost over the combined speed of every device;
/// `chain` is the slowest model run serially on the fastest device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowerBounds {
    pub work: Exact,
    pub chain: Exact,
}

impl LowerBounds {
    pub fn max(&self) -> Exact {
        self.work.max(self.chain)
    }
}

pub fn lower_bounds(spec: &WorkloadSpec, graph: &TaskGraph) -> LowerBounds {
    let total_speed: Exact = spec.devices.iter().map(|d| d.speed).sum();
    let max_speed = spec
        .devices
        .iter()
        .map(|d| d.speed)
        .max()
        .unwrap_or(Exact::ZERO);
    let total: Exact = graph.tasks().iter().map(|t| t.cost).sum();
    let longest_model = graph
        .models()
        .map(|m| graph.model_tasks(m).map(|t| t.cost).sum::<Exact>())
        .max()
        .unwrap_or(Exact::ZERO);
    let div = |x: Exact, by: Exact| {
        if by.is_positive() {
            x / by
        } else {
            Exact::ZERO
        }
    };
    LowerBounds {
        work: div(total, total_speed),
        chain: div(longest_model, max_speed),
    }
}

struct Engine<'a> {
    spec: &'a WorkloadSpec,
    graph: TaskGraph,
    policy: Policy,
    now: Exact,
    devices: Vec<DeviceState>,
    speeds: Vec<Exact>,
    remaining_deps: Vec<usize>,
    remaining_per_model: HashMap<u32, usize>,
    unfinished_models: BTreeSet<u32>,
    ready: BTreeSet<TaskId>,
    placements: Placements,
    completed: usize,
    events: BinaryHeap<Reverse<(Exact, usize, TaskId)>>,
    assignments: Vec<Assignment>,
    busy: Vec<Exact>,
    peak_memory: Vec<Exact>,
}

impl<'a> Engine<'a> {
    fn new(spec: &'a WorkloadSpec, policy: Policy) -> Self {
        let graph = TaskGraph::expand(spec);
        let n = spec.devices.len();
        let mut speeds = vec![Exact::ONE; n];
        for d in &spec.devices {
            speeds[d.id] = d.speed;
        }
        let remaining_deps: Vec<usize> = graph.tasks().iter().map(|t| t.deps.len()).collect();
        let ready = graph
            .tasks()
            .iter()
            .zip(&remaining_deps)
            .filter(|(_, &r)| r == 0)
            .map(|(t, _)| t.id)
            .collect();
        let remaining_per_model: HashMap<u32, usize> = graph
            .models()
            .map(|m| (m, graph.model_tasks(m).count()))
            .filter(|&(_, c)| c > 0)
            .collect();
        let unfinished_models = remaining_per_model.keys().copied().collect();
        Self {
            spec,
            policy,
            now: Exact::ZERO,
            devices: (0..n).map(DeviceState::new).collect(),
            speeds,
            remaining_deps,
            remaining_per_model,
            unfinished_models,
            ready,
            placements: Placements::new(),
            completed: 0,
            events: BinaryHeap::new(),
            assignments: Vec::new(),
            busy: vec![Exact::ZERO; n],
            peak_memory: vec![Exact::ZERO; n],
            graph,
        }
    }

    fn start(&mut self, id: TaskId, device: usize) {
        let task = self
            .graph
            .task(&id)
            .expect("decide only returns graph tasks");
        let crossings = task
            .deps
            .iter()
            .filter(|d| self.placements.get(d).is_some_and(|&p| p != device))
            .count();
        let duration =
            task.cost / self.speeds[device] + self.spec.comm_cost * Exact::from(crossings);
        let end = self.now + duration;
        let working_set = task.working_set;

        let state = &mut self.devices[device];
        state.running = Some(id);
        state.busy_until = end;
        state.resident_working_set = working_set;
        self.peak_memory[device] = self.peak_memory[device].max(working_set);
        self.busy[device] += duration;

        self.ready.remove(&id);
        self.placements.insert(id, device);
        self.assignments.push(Assignment {
            task: id,
            device,
            start: self.now,
            end,
        });
        self.events.push(Reverse((end, device, id)));
    }

    fn complete(&mut self, device: usize, id: TaskId) {
        let state = &mut self.devices[device];
        state.running = None;
        state.resident_working_set = Exact::ZERO;
        match id.matching_fwd() {
            None => {
                state.stashes.insert(id);
            }
            Some(fwd) => {
                state.stashes.remove(&fwd);
            }
        }

        self.completed += 1;
        if let Some(left) = self.remaining_per_model.get_mut(&id.model) {
            *left -= 1;
            if *left == 0 {
                self.unfinished_models.remove(&id.model);
            }
        }
        let index = self.graph.index_of(&id).expect("graph task");
        for k in 0..self.graph.dependents(index).len() {
            let j = self.graph.dependents(index)[k];
            self.remaining_deps[j] -= 1;
            if self.remaining_deps[j] == 0 {
                self.ready.insert(self.graph.tasks()[j].id);
            }
        }
    }

    fn run(mut self) -> Result<(Metrics, Trace), SimError> {
        loop {
            let ready: Vec<TaskId> = self.ready.iter().copied().collect();
            let decisions = {
                let ctx = SchedContext {
                    spec: self.spec,
                    graph: &self.graph,
                    devices: &self.devices,
                    placements: &self.placements,
                    unfinished_models: &self.unfinished_models,
                };
                decide(self.policy, &ready, &ctx)?
            };
            for (id, device) in decisions {
                self.start(id, device);
            }

            let Some(Reverse((t, _, _))) = self.events.peek().copied() else {
                if self.completed == self.graph.len() {
                    break;
                }
                let placed = &self.placements;
                let blocked = {
                    let mut v: Vec<TaskId> = self
                        .graph
                        .tasks()
                        .iter()
                        .map(|t| t.id)
                        .filter(|id| !placed.contains_key(id))
                        .collect();
                    v.sort();
                    v
                };
                return Err(SimError::Deadlock {
                    time: self.now,
                    blocked,
                });
            };
            self.now = t;
            while let Some(Reverse((te, device, id))) = self.events.peek().copied() {
                if te != t {
                    break;
                }
                self.events.pop();
                self.complete(device, id);
            }
        }
        Ok(self.finish())
    }

    fn finish(mut self) -> (Metrics, Trace) {
        self.assignments.sort_by_key(|a| (a.start, a.device));
        let makespan = self
            .assignments
            .iter()
            .map(|a| a.end)
            .max()
            .unwrap_or(Exact::ZERO);
        let total_busy: Exact = self.busy.iter().sum();
        let capacity_time = Exact::from(self.devices.len()) * makespan;
        let utilization = if capacity_time.is_positive() {
            total_busy / capacity_time
        } else {
            Exact::ZERO
        };
        let metrics = Metrics {
            makespan,
            total_busy,
            utilization,
            per_device_busy: self.busy,
            per_device_peak_memory: self.peak_memory,
            task_count: self.assignments.len(),
        };
        let trace = Trace {
            policy: self.policy,
            workload_fingerprint: fingerprint(self.spec),
            assignments: self.assignments,
        };
        (metrics, trace)
    }
}

/// Runs `policy` on `spec` to completion.
pub fn simulate(spec: &WorkloadSpec, policy: Policy) -> Result<(Metrics, Trace), SimError> {
    let violations = spec.validate();
    if !violations.is_empty() {
        return Err(SimError::InvalidWorkload(violations));
    }
    Engine::new(spec, policy).run()
}
