//! Deterministic synthetic workloads for policy comparisons.

use std::str::FromStr;

use super::{DeviceSpec, ModelSpec, WorkloadError, WorkloadSpec};
use crate::exact::Exact;
use crate::numkernel::Prng;

/// Draws are quantized to this many steps across `[lo, hi]` so every
/// generated quantity is an exact decimal.
const QUANTUM_STEPS: i128 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryProfile {
    /// Device capacity equals the largest shard working set.
    Tight,
    /// Device capacity equals the largest whole-model residency.
    Roomy,
}

impl FromStr for MemoryProfile {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tight" => Ok(MemoryProfile::Tight),
            "roomy" => Ok(MemoryProfile::Roomy),
            other => Err(WorkloadError::UnknownProfile(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticParams {
    pub models: u32,
    pub shards_per_model: u32,
    pub devices: usize,
    pub cost_range: (Exact, Exact),
    pub profile: MemoryProfile,
    pub seed: u64,
    pub minibatches: u32,
    pub epochs: u32,
}

impl SyntheticParams {
    pub fn new(
        models: u32,
        shards_per_model: u32,
        devices: usize,
        cost_range: (Exact, Exact),
        profile: MemoryProfile,
        seed: u64,
    ) -> Self {
        Self {
            models,
            shards_per_model,
            devices,
            cost_range,
            profile,
            seed,
            minibatches: 1,
            epochs: 1,
        }
    }

    pub fn with_minibatches(mut self, minibatches: u32) -> Self {
        self.minibatches = minibatches;
        self
    }

    pub fn with_epochs(mut self, epochs: u32) -> Self {
        self.epochs = epochs;
        self
    }

    /// Per shard, four draws in order: fwd cost, bwd cost, parameter memory,
    /// activation memory, each uniform on `cost_range`.
    pub fn generate(&self) -> Result<WorkloadSpec, WorkloadError> {
        let (lo, hi) = self.cost_range;
        if self.models == 0 || self.shards_per_model == 0 || self.devices == 0 {
            return Err(WorkloadError::InvalidGenerator(
                "models, shards and devices must all be >= 1".into(),
            ));
        }
        if self.minibatches == 0 || self.epochs == 0 {
            return Err(WorkloadError::InvalidGenerator(
                "minibatches and epochs must be >= 1".into(),
            ));
        }
        if !lo.is_positive() || lo > hi {
            return Err(WorkloadError::InvalidGenerator(format!(
                "cost range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }

        let mut rng = Prng::from_any_seed(self.seed);
        let mut draw = || {
            let steps = (rng.next_f64() * QUANTUM_STEPS as f64).round() as i128;
            lo + (hi - lo) * Exact::new(steps, QUANTUM_STEPS)
        };
        let models: Vec<ModelSpec> = (0..self.models)
            .map(|id| {
                let shards: Vec<_> = (0..self.shards_per_model)
                    .map(|_| {
                        let fwd = draw();
                        let bwd = draw();
                        let param = draw();
                        let act = draw();
                        (param, act, fwd, bwd)
                    })
                    .collect();
                ModelSpec::from_shards(id, self.epochs, self.minibatches, shards)
            })
            .collect();

        let capacity = match self.profile {
            MemoryProfile::Tight => models
                .iter()
                .flat_map(|m| m.shards.iter().map(|s| s.working_set()))
                .max(),
            MemoryProfile::Roomy => models.iter().map(ModelSpec::full_residency).max(),
        }
        .expect("at least one shard");

        Ok(WorkloadSpec {
            devices: (0..self.devices)
                .map(|id| DeviceSpec::new(id, capacity))
                .collect(),
            models,
            comm_cost: Exact::ZERO,
            seed: self.seed,
        })
    }
}

/// Single-minibatch, single-epoch generator keyed by profile name.
pub fn generate_synthetic(
    n_models: u32,
    shards_per_model: u32,
    n_devices: usize,
    cost_range: (Exact, Exact),
    memory_profile: &str,
    seed: u64,
) -> Result<WorkloadSpec, WorkloadError> {
    let profile = memory_profile.parse()?;
    SyntheticParams::new(
        n_models,
        shards_per_model,
        n_devices,
        cost_range,
        profile,
        seed,
    )
    .generate()
}
