//! JSON workload configuration documents.
//!
//! Numbers are carried as their literal decimal text and converted to
//! [`Exact`] without passing through binary floating point.

use serde::{Deserialize, Serialize};
use serde_json::Number;

use super::{validate, DeviceSpec, ModelSpec, ShardSpec, WorkloadError, WorkloadSpec};
use crate::exact::Exact;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadDoc {
    devices: Vec<DeviceDoc>,
    models: Vec<ModelDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comm_cost: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceDoc {
    id: usize,
    memory_capacity: Number,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed: Option<Number>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    id: u32,
    epochs: u32,
    minibatches: u32,
    shards: Vec<ShardDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShardDoc {
    param_memory: Number,
    activation_memory: Number,
    fwd_cost: Number,
    bwd_cost: Number,
}

fn to_exact(n: &Number, path: impl FnOnce() -> String) -> Result<Exact, WorkloadError> {
    Exact::parse(&n.to_string()).map_err(|e| WorkloadError::Malformed {
        path: path(),
        message: e.to_string(),
    })
}

fn to_number(x: Exact, path: impl FnOnce() -> String) -> Result<Number, WorkloadError> {
    let text = x.to_string();
    if text.contains('/') {
        return Err(WorkloadError::NotDecimal {
            path: path(),
            value: x,
        });
    }
    Ok(text.parse().expect("exact decimals are valid JSON numbers"))
}

/// Parses and validates a workload document, applying defaults
/// (`speed = 1`, `comm_cost = 0`, `seed = 0`).
pub fn parse_workload(text: &str) -> Result<WorkloadSpec, WorkloadError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: WorkloadDoc =
        serde_path_to_error::deserialize(de).map_err(|e| WorkloadError::Malformed {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;

    let devices = doc
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| {
            Ok(DeviceSpec {
                id: d.id,
                memory_capacity: to_exact(&d.memory_capacity, || {
                    format!("devices[{i}].memory_capacity")
                })?,
                speed: match &d.speed {
                    Some(s) => to_exact(s, || format!("devices[{i}].speed"))?,
                    None => Exact::ONE,
                },
            })
        })
        .collect::<Result<Vec<_>, WorkloadError>>()?;

    let models = doc
        .models
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let shards = m
                .shards
                .iter()
                .enumerate()
                .map(|(si, s)| {
                    let field = |name: &str| format!("models[{mi}].shards[{si}].{name}");
                    Ok(ShardSpec {
                        model_id: m.id,
                        index: si as u32,
                        param_memory: to_exact(&s.param_memory, || field("param_memory"))?,
                        activation_memory: to_exact(&s.activation_memory, || {
                            field("activation_memory")
                        })?,
                        fwd_cost: to_exact(&s.fwd_cost, || field("fwd_cost"))?,
                        bwd_cost: to_exact(&s.bwd_cost, || field("bwd_cost"))?,
                    })
                })
                .collect::<Result<Vec<_>, WorkloadError>>()?;
            Ok(ModelSpec {
                id: m.id,
                shards,
                epochs: m.epochs,
                minibatches_per_epoch: m.minibatches,
            })
        })
        .collect::<Result<Vec<_>, WorkloadError>>()?;

    let spec = WorkloadSpec {
        devices,
        models,
        comm_cost: match &doc.comm_cost {
            Some(c) => to_exact(c, || "comm_cost".to_string())?,
            None => Exact::ZERO,
        },
        seed: doc.seed.unwrap_or(0),
    };

    let violations = validate(&spec);
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(WorkloadError::Invalid(violations))
    }
}

/// Pretty-printed document with every field written out. Deterministic for a
/// given spec. Fails only if a quantity has no finite decimal expansion.
pub fn serialize_workload(spec: &WorkloadSpec) -> Result<String, WorkloadError> {
    let devices = spec
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| {
            Ok(DeviceDoc {
                id: d.id,
                memory_capacity: to_number(d.memory_capacity, || {
                    format!("devices[{i}].memory_capacity")
                })?,
                speed: Some(to_number(d.speed, || format!("devices[{i}].speed"))?),
            })
        })
        .collect::<Result<Vec<_>, WorkloadError>>()?;
    let models = spec
        .models
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let shards = m
                .shards
                .iter()
                .enumerate()
                .map(|(si, s)| {
                    let field = |name: &str| format!("models[{mi}].shards[{si}].{name}");
                    Ok(ShardDoc {
                        param_memory: to_number(s.param_memory, || field("param_memory"))?,
                        activation_memory: to_number(s.activation_memory, || {
                            field("activation_memory")
                        })?,
                        fwd_cost: to_number(s.fwd_cost, || field("fwd_cost"))?,
                        bwd_cost: to_number(s.bwd_cost, || field("bwd_cost"))?,
                    })
                })
                .collect::<Result<Vec<_>, WorkloadError>>()?;
            Ok(ModelDoc {
                id: m.id,
                epochs: m.epochs,
                minibatches: m.minibatches_per_epoch,
                shards,
            })
        })
        .collect::<Result<Vec<_>, WorkloadError>>()?;
    let doc = WorkloadDoc {
        devices,
        models,
        comm_cost: Some(to_number(spec.comm_cost, || "comm_cost".to_string())?),
        seed: Some(spec.seed),
    };
    Ok(serde_json::to_string_pretty(&doc).expect("document types always serialize"))
}
