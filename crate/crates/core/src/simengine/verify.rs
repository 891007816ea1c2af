//! Schedule validity checker.
//!
//! Works only from the workload, the task graph and the trace itself, never
//! from simulator state, so it can audit traces produced anywhere.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::exact::Exact;
use crate::scheduler::Assignment;
use crate::taskgraph::{TaskGraph, TaskId};
use crate::workload::WorkloadSpec;

use super::Trace;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceViolation {
    /// (a) a graph task never ran.
    Missing { task: TaskId },
    /// (a) a task ran more than once.
    Duplicate { task: TaskId },
    /// (a) the trace names a task that is not in the graph.
    UnknownTask { task: TaskId },
    /// (b) a task started before one of its dependencies ended.
    DependencyOrder {
        task: TaskId,
        dep: TaskId,
        start: Exact,
        dep_end: Exact,
    },
    /// (c) two intervals on one device intersect.
    Overlap {
        device: usize,
        first: TaskId,
        second: TaskId,
    },
    /// (d) a task's working set exceeds its device's capacity, or the device
    /// does not exist.
    Memory {
        task: TaskId,
        device: usize,
        working_set: Exact,
        capacity: Option<Exact>,
    },
    /// (e) a backward pass ran away from its forward pass.
    Affinity {
        task: TaskId,
        expected: usize,
        found: usize,
    },
    /// (f) the interval length disagrees with cost, speed and communication.
    Duration {
        task: TaskId,
        expected: Exact,
        found: Exact,
    },
}

impl TraceViolation {
    /// Which audit rule (`'a'` to `'f'`) was broken.
    pub fn rule(&self) -> char {
        match self {
            TraceViolation::Missing { .. }
            | TraceViolation::Duplicate { .. }
            | TraceViolation::UnknownTask { .. } => 'a',
            TraceViolation::DependencyOrder { .. } => 'b',
            TraceViolation::Overlap { .. } => 'c',
            TraceViolation::Memory { .. } => 'd',
            TraceViolation::Affinity { .. } => 'e',
            TraceViolation::Duration { .. } => 'f',
        }
    }
}

impl fmt::Display for TraceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceViolation::Missing { task } => write!(f, "(a) {task} never ran"),
            TraceViolation::Duplicate { task } => write!(f, "(a) {task} ran more than once"),
            TraceViolation::UnknownTask { task } => write!(f, "(a) {task} is not in the graph"),
            TraceViolation::DependencyOrder {
                task,
                dep,
                start,
                dep_end,
            } => {
                write!(
                    f,
                    "(b) {task} starts at {start} before {dep} ends at {dep_end}"
                )
            }
            TraceViolation::Overlap {
                device,
                first,
                second,
            } => {
                write!(f, "(c) {first} and {second} overlap on device {device}")
            }
            TraceViolation::Memory {
                task,
                device,
                working_set,
                capacity,
            } => match capacity {
                Some(c) => write!(
                    f,
                    "(d) {task} needs {working_set} on device {device} of capacity {c}"
                ),
                None => write!(f, "(d) {task} ran on unknown device {device}"),
            },
            TraceViolation::Affinity {
                task,
                expected,
                found,
            } => {
                write!(
                    f,
                    "(e) {task} ran on device {found}, activations are on {expected}"
                )
            }
            TraceViolation::Duration {
                task,
                expected,
                found,
            } => {
                write!(f, "(f) {task} lasted {found}, expected {expected}")
            }
        }
    }
}

/// Every rule the trace breaks; empty means the schedule is valid.
pub fn verify_trace(spec: &WorkloadSpec, graph: &TaskGraph, trace: &Trace) -> Vec<TraceViolation> {
    let mut out = Vec::new();

    let mut by_task: HashMap<TaskId, &Assignment> = HashMap::new();
    for a in &trace.assignments {
        if graph.task(&a.task).is_none() {
            out.push(TraceViolation::UnknownTask { task: a.task });
        } else if by_task.insert(a.task, a).is_some() {
            out.push(TraceViolation::Duplicate { task: a.task });
        }
    }
    for t in graph.tasks() {
        if !by_task.contains_key(&t.id) {
            out.push(TraceViolation::Missing { task: t.id });
        }
    }

    for t in graph.tasks() {
        let Some(a) = by_task.get(&t.id) else {
            continue;
        };

        for dep in &t.deps {
            if let Some(d) = by_task.get(dep) {
                if a.start < d.end {
                    out.push(TraceViolation::DependencyOrder {
                        task: t.id,
                        dep: *dep,
                        start: a.start,
                        dep_end: d.end,
                    });
                }
            }
        }

        let device = spec.device(a.device);
        match device {
            Some(dev) if t.working_set <= dev.memory_capacity => {}
            _ => out.push(TraceViolation::Memory {
                task: t.id,
                device: a.device,
                working_set: t.working_set,
                capacity: device.map(|d| d.memory_capacity),
            }),
        }

        if let Some(fwd) = t.id.matching_fwd() {
            if let Some(f) = by_task.get(&fwd) {
                if f.device != a.device {
                    out.push(TraceViolation::Affinity {
                        task: t.id,
                        expected: f.device,
                        found: a.device,
                    });
                }
            }
        }

        if let Some(dev) = device {
            let crossings = t
                .deps
                .iter()
                .filter_map(|d| by_task.get(d))
                .filter(|d| d.device != a.device)
                .count();
            let expected = t.cost / dev.speed + spec.comm_cost * Exact::from(crossings);
            let found = a.end - a.start;
            if found != expected {
                out.push(TraceViolation::Duration {
                    task: t.id,
                    expected,
                    found,
                });
            }
        }
    }

    let mut per_device: BTreeMap<usize, Vec<&Assignment>> = BTreeMap::new();
    for a in &trace.assignments {
        per_device.entry(a.device).or_default().push(a);
    }
    for (device, mut list) in per_device {
        list.sort_by_key(|a| (a.start, a.end, a.task));
        for pair in list.windows(2) {
            if pair[1].start < pair[0].end {
                out.push(TraceViolation::Overlap {
                    device,
                    first: pair[0].task,
                    second: pair[1].task,
                });
            }
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::Policy;
    use crate::simengine::simulate;
    use crate::workload::generate_synthetic;

    fn w1_run() -> (WorkloadSpec, TaskGraph, Trace) {
        let spec = generate_synthetic(4, 4, 4, (Exact::ONE, Exact::ONE), "tight", 0).unwrap();
        let graph = TaskGraph::expand(&spec);
        let (_, trace) = simulate(&spec, Policy::ShardParallel).unwrap();
        (spec, graph, trace)
    }

    fn rules(v: &[TraceViolation]) -> Vec<char> {
        let mut r: Vec<char> = v.iter().map(TraceViolation::rule).collect();
        r.dedup();
        r
    }

    #[test]
    fn simulated_w1_is_clean() {
        let (spec, graph, trace) = w1_run();
        assert!(verify_trace(&spec, &graph, &trace).is_empty());
    }

    #[test]
    fn backward_before_forward_ends() {
        let (spec, graph, mut trace) = w1_run();
        let fwd = trace
            .assignments
            .iter()
            .find(|a| a.task == TaskId::fwd(0, 3, 0, 0))
            .copied()
            .unwrap();
        let bwd = trace
            .assignments
            .iter_mut()
            .find(|a| a.task == TaskId::bwd(0, 3, 0, 0))
            .unwrap();
        bwd.start = fwd.end - Exact::new(1, 2);
        bwd.end = bwd.start + Exact::ONE;
        let v = verify_trace(&spec, &graph, &trace);
        assert!(v.iter().any(|x| matches!(
            x,
            TraceViolation::DependencyOrder { task, .. } if *task == TaskId::bwd(0, 3, 0, 0)
        )));
    }

    #[test]
    fn overlap_on_device_one() {
        let (spec, graph, mut trace) = w1_run();
        let victims: Vec<usize> = trace
            .assignments
            .iter()
            .enumerate()
            .filter(|(_, a)| a.device == 1)
            .map(|(i, _)| i)
            .take(2)
            .collect();
        let first = trace.assignments[victims[0]];
        let second = &mut trace.assignments[victims[1]];
        second.start = first.start + Exact::new(1, 2);
        second.end = second.start + Exact::ONE;
        let v = verify_trace(&spec, &graph, &trace);
        assert!(v
            .iter()
            .any(|x| matches!(x, TraceViolation::Overlap { device: 1, .. })));
    }

    #[test]
    fn missing_duplicate_unknown() {
        let (spec, graph, mut trace) = w1_run();
        let last = trace.assignments.pop().unwrap();
        let v = verify_trace(&spec, &graph, &trace);
        assert_eq!(v, vec![TraceViolation::Missing { task: last.task }]);

        trace.assignments.push(last);
        trace.assignments.push(last);
        let mut bogus = last;
        bogus.task.model = 42;
        trace.assignments.push(bogus);
        let v = verify_trace(&spec, &graph, &trace);
        assert!(v.contains(&TraceViolation::Duplicate { task: last.task }));
        assert!(v.contains(&TraceViolation::UnknownTask { task: bogus.task }));
    }

    #[test]
    fn wrong_device_breaks_affinity_and_memory() {
        let (mut spec, graph, mut trace) = w1_run();
        spec.devices[3].memory_capacity = Exact::ONE;
        let bwd = trace
            .assignments
            .iter_mut()
            .find(|a| a.task == TaskId::bwd(0, 0, 0, 0))
            .unwrap();
        bwd.device = 3;
        let r = rules(&verify_trace(&spec, &graph, &trace));
        assert!(r.contains(&'d') && r.contains(&'e'), "{r:?}");
    }

    #[test]
    fn stretched_interval() {
        let (spec, graph, mut trace) = w1_run();
        let last = trace.assignments.last_mut().unwrap();
        last.end += Exact::ONE;
        let v = verify_trace(&spec, &graph, &trace);
        assert_eq!(rules(&v), vec!['f']);
    }
}
