//! Devices, models and their shard chains: the complete input of one
//! experiment.

mod config;
mod synth;

use std::collections::BTreeMap;
use std::fmt;

pub use config::{parse_workload, serialize_workload};
pub use synth::{generate_synthetic, MemoryProfile, SyntheticParams};

use crate::exact::Exact;

/// One accelerator. A task of cost `c` occupies it for `c / speed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceSpec {
    pub id: usize,
    pub memory_capacity: Exact,
    pub speed: Exact,
}

impl DeviceSpec {
    pub fn new(id: usize, memory_capacity: impl Into<Exact>) -> Self {
        Self {
            id,
            memory_capacity: memory_capacity.into(),
            speed: Exact::ONE,
        }
    }
}

/// A contiguous slice of a model's layers, scheduled as one unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardSpec {
    pub model_id: u32,
    pub index: u32,
    pub param_memory: Exact,
    /// Per minibatch.
    pub activation_memory: Exact,
    pub fwd_cost: Exact,
    pub bwd_cost: Exact,
}

impl ShardSpec {
    /// Memory a forward or backward task of this shard holds while running.
    pub fn working_set(&self) -> Exact {
        self.param_memory + self.activation_memory
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub id: u32,
    pub shards: Vec<ShardSpec>,
    pub epochs: u32,
    pub minibatches_per_epoch: u32,
}

impl ModelSpec {
    /// Builds a model whose shards get consistent `model_id`/`index` fields.
    /// Each tuple is `(param_memory, activation_memory, fwd_cost, bwd_cost)`.
    pub fn from_shards(
        id: u32,
        epochs: u32,
        minibatches_per_epoch: u32,
        shards: impl IntoIterator<Item = (Exact, Exact, Exact, Exact)>,
    ) -> Self {
        let shards = shards
            .into_iter()
            .enumerate()
            .map(|(i, (param, act, fwd, bwd))| ShardSpec {
                model_id: id,
                index: i as u32,
                param_memory: param,
                activation_memory: act,
                fwd_cost: fwd,
                bwd_cost: bwd,
            })
            .collect();
        Self {
            id,
            shards,
            epochs,
            minibatches_per_epoch,
        }
    }

    pub fn total_minibatches(&self) -> u32 {
        self.epochs * self.minibatches_per_epoch
    }

    /// Memory needed to train the whole model on one device: every shard's
    /// parameters plus one minibatch of activations.
    pub fn full_residency(&self) -> Exact {
        self.shards.iter().map(ShardSpec::working_set).sum()
    }

    /// Time to run the whole job serially at speed 1.
    pub fn serial_cost(&self) -> Exact {
        let per_batch: Exact = self.shards.iter().map(|s| s.fwd_cost + s.bwd_cost).sum();
        per_batch * Exact::from(self.total_minibatches())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub devices: Vec<DeviceSpec>,
    pub models: Vec<ModelSpec>,
    /// Added once per dependency edge whose endpoints ran on different devices.
    pub comm_cost: Exact,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn max_capacity(&self) -> Option<Exact> {
        self.devices.iter().map(|d| d.memory_capacity).max()
    }

    pub fn device(&self, id: usize) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn model(&self, id: u32) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.id == id)
    }

    /// Every typed invariant that does not hold; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

/// A broken invariant, located by a field path such as
/// `models[0].shards[2].fwd_cost`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("malformed workload document at `{path}`: {message}")]
    Malformed { path: String, message: String },
    #[error("invalid workload: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("`{path}` value {value} has no exact decimal representation")]
    NotDecimal { path: String, value: Exact },
    #[error("unknown memory profile `{0}` (expected `tight` or `roomy`)")]
    UnknownProfile(String),
    #[error("invalid generator parameters: {0}")]
    InvalidGenerator(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn validate(spec: &WorkloadSpec) -> Vec<Violation> {
    let mut out = Vec::new();

    if spec.devices.is_empty() {
        out.push(Violation::new("devices", "at least one device is required"));
    }
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    let mut duplicate = false;
    for (i, d) in spec.devices.iter().enumerate() {
        if let Some(first) = seen.insert(d.id, i) {
            duplicate = true;
            out.push(Violation::new(
                format!("devices[{i}].id"),
                format!("duplicate device id {} (also devices[{first}])", d.id),
            ));
        }
        if !d.memory_capacity.is_positive() {
            out.push(Violation::new(
                format!("devices[{i}].memory_capacity"),
                "must be > 0",
            ));
        }
        if !d.speed.is_positive() {
            out.push(Violation::new(format!("devices[{i}].speed"), "must be > 0"));
        }
    }
    if !duplicate && seen.keys().copied().ne(0..spec.devices.len()) {
        out.push(Violation::new(
            "devices",
            "device ids must be contiguous from 0",
        ));
    }

    if spec.comm_cost.is_negative() {
        out.push(Violation::new("comm_cost", "must be >= 0"));
    }

    if spec.models.is_empty() {
        out.push(Violation::new("models", "at least one model is required"));
    }
    let capacity = spec.max_capacity();
    let mut model_ids: BTreeMap<u32, usize> = BTreeMap::new();
    for (mi, m) in spec.models.iter().enumerate() {
        let path = format!("models[{mi}]");
        if let Some(first) = model_ids.insert(m.id, mi) {
            out.push(Violation::new(
                format!("{path}.id"),
                format!("duplicate model id {} (also models[{first}])", m.id),
            ));
        }
        if m.epochs == 0 {
            out.push(Violation::new(format!("{path}.epochs"), "must be >= 1"));
        }
        if m.minibatches_per_epoch == 0 {
            out.push(Violation::new(
                format!("{path}.minibatches"),
                "must be >= 1",
            ));
        }
        if m.shards.is_empty() {
            out.push(Violation::new(
                format!("{path}.shards"),
                "at least one shard is required",
            ));
        }
        for (si, s) in m.shards.iter().enumerate() {
            let path = format!("{path}.shards[{si}]");
            if s.model_id != m.id {
                out.push(Violation::new(
                    format!("{path}.model_id"),
                    format!(
                        "shard belongs to model {} but is listed under model {}",
                        s.model_id, m.id
                    ),
                ));
            }
            if s.index as usize != si {
                out.push(Violation::new(
                    format!("{path}.index"),
                    format!("index {} at chain position {si}", s.index),
                ));
            }
            for (field, v) in [("fwd_cost", s.fwd_cost), ("bwd_cost", s.bwd_cost)] {
                if !v.is_positive() {
                    out.push(Violation::new(format!("{path}.{field}"), "must be > 0"));
                }
            }
            for (field, v) in [
                ("param_memory", s.param_memory),
                ("activation_memory", s.activation_memory),
            ] {
                if v.is_negative() {
                    out.push(Violation::new(format!("{path}.{field}"), "must be >= 0"));
                }
            }
            if let Some(cap) = capacity {
                if s.working_set() > cap {
                    out.push(Violation::new(
                        path,
                        format!(
                            "working set {} (model {} shard {si}) exceeds the largest device capacity {cap}",
                            s.working_set(),
                            m.id
                        ),
                    ));
                }
            }
        }
    }
    out
}
