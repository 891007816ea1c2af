use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exact::Exact;
use crate::scheduler::{Assignment, Policy};
use crate::taskgraph::{Direction, TaskId};
use crate::workload::{serialize_workload, WorkloadSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metrics {
    pub makespan: Exact,
    pub total_busy: Exact,
    /// `total_busy / (devices * makespan)`.
    pub utilization: Exact,
    pub per_device_busy: Vec<Exact>,
    pub per_device_peak_memory: Vec<Exact>,
    pub task_count: usize,
}

impl Metrics {
    pub fn peak_memory(&self) -> Exact {
        self.per_device_peak_memory
            .iter()
            .copied()
            .max()
            .unwrap_or(Exact::ZERO)
    }
}

/// Who ran what, where and when, in start-time order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub policy: Policy,
    pub workload_fingerprint: String,
    pub assignments: Vec<Assignment>,
}

/// SHA-256 of the serialized workload document, hex encoded.
pub fn fingerprint(spec: &WorkloadSpec) -> String {
    let text = serialize_workload(spec).unwrap_or_else(|_| format!("{spec:?}"));
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentDoc {
    pub model: u32,
    pub shard: u32,
    pub epoch: u32,
    pub minibatch: u32,
    pub direction: Direction,
    pub device: usize,
    pub start: Exact,
    pub end: Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsDoc {
    pub makespan: Exact,
    #[serde(with = "ratio")]
    pub utilization: Exact,
    pub per_device_busy: Vec<Exact>,
    pub per_device_peak_memory: Vec<Exact>,
}

/// On-disk trace file. All quantities are exact decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDoc {
    pub policy: String,
    pub workload_fingerprint: String,
    pub assignments: Vec<AssignmentDoc>,
    pub metrics: MetricsDoc,
}

mod ratio {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::exact::Exact;

    pub fn serialize<S: Serializer>(x: &Exact, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&x.ratio_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Exact, D::Error> {
        Exact::deserialize(d)
    }
}

impl TraceDoc {
    pub fn new(trace: &Trace, metrics: &Metrics) -> Self {
        Self {
            policy: trace.policy.name().to_string(),
            workload_fingerprint: trace.workload_fingerprint.clone(),
            assignments: trace
                .assignments
                .iter()
                .map(|a| AssignmentDoc {
                    model: a.task.model,
                    shard: a.task.shard,
                    epoch: a.task.epoch,
                    minibatch: a.task.minibatch,
                    direction: a.task.direction,
                    device: a.device,
                    start: a.start,
                    end: a.end,
                })
                .collect(),
            metrics: MetricsDoc {
                makespan: metrics.makespan,
                utilization: metrics.utilization,
                per_device_busy: metrics.per_device_busy.clone(),
                per_device_peak_memory: metrics.per_device_peak_memory.clone(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Rebuilds the in-memory trace; `None` if the policy name is unknown.
    pub fn to_trace(&self) -> Option<Trace> {
        Some(Trace {
            policy: self.policy.parse().ok()?,
            workload_fingerprint: self.workload_fingerprint.clone(),
            assignments: self
                .assignments
                .iter()
                .map(|a| Assignment {
                    task: TaskId {
                        model: a.model,
                        shard: a.shard,
                        epoch: a.epoch,
                        minibatch: a.minibatch,
                        direction: a.direction,
                    },
                    device: a.device,
                    start: a.start,
                    end: a.end,
                })
                .collect(),
        })
    }
}
