//! Test-only oracles shared by the integration suites.

#![allow(dead_code)]

use shardsim::{Direction, Exact, MemoryProfile, SyntheticParams, TaskGraph, WorkloadSpec};

/// Optimal makespan by exhaustive search over dispatch sequences.
///
/// Every semi-active schedule is produced by appending tasks in start-time
/// order, each at the later of its device's last end and its dependencies'
/// ends, so enumerating all (ready task, allowed device) sequences covers an
/// optimal schedule. Honours backward affinity, capacity, speed and
/// communication cost; shares no code with the simulator or the policies.
pub fn optimal_makespan(spec: &WorkloadSpec) -> Exact {
    let graph = TaskGraph::expand(spec);
    let tasks = graph.tasks();
    let n = tasks.len();
    assert!(n <= 16, "brute force is for tiny instances");
    let deps: Vec<Vec<usize>> = tasks
        .iter()
        .map(|t| t.deps.iter().map(|d| graph.index_of(d).unwrap()).collect())
        .collect();
    let fwd_of: Vec<Option<usize>> = tasks
        .iter()
        .map(|t| t.id.matching_fwd().map(|f| graph.index_of(&f).unwrap()))
        .collect();
    let mut devices: Vec<_> = spec.devices.clone();
    devices.sort_by_key(|d| d.id);

    struct Search<'a> {
        tasks: &'a [shardsim::taskgraph::Task],
        deps: Vec<Vec<usize>>,
        fwd_of: Vec<Option<usize>>,
        devices: Vec<shardsim::DeviceSpec>,
        comm: Exact,
        best: Option<Exact>,
        remaining_work: Exact,
        total_speed: Exact,
    }

    impl Search<'_> {
        fn go(
            &mut self,
            done: u32,
            free: &mut Vec<Exact>,
            end: &mut Vec<Exact>,
            dev: &mut Vec<usize>,
            makespan: Exact,
        ) {
            let n = self.tasks.len();
            if done.count_ones() as usize == n {
                if self.best.is_none_or(|b| makespan < b) {
                    self.best = Some(makespan);
                }
                return;
            }
            if let Some(b) = self.best {
                let earliest_free = free.iter().copied().min().unwrap();
                if makespan >= b || earliest_free + self.remaining_work / self.total_speed >= b {
                    return;
                }
            }
            for i in 0..n {
                if done & (1 << i) != 0 || self.deps[i].iter().any(|&d| done & (1 << d) == 0) {
                    continue;
                }
                let t = &self.tasks[i];
                for d in 0..self.devices.len() {
                    if let Some(f) = self.fwd_of[i] {
                        if dev[f] != d {
                            continue;
                        }
                    }
                    if t.working_set > self.devices[d].memory_capacity {
                        continue;
                    }
                    let ready_at = self.deps[i]
                        .iter()
                        .map(|&j| end[j])
                        .max()
                        .unwrap_or(Exact::ZERO);
                    let crossings = self.deps[i].iter().filter(|&&j| dev[j] != d).count();
                    let start = free[d].max(ready_at);
                    let finish =
                        start + t.cost / self.devices[d].speed + self.comm * Exact::from(crossings);

                    let (old_free, old_end, old_dev) = (free[d], end[i], dev[i]);
                    free[d] = finish;
                    end[i] = finish;
                    dev[i] = d;
                    self.remaining_work -= t.cost;
                    self.go(done | (1 << i), free, end, dev, makespan.max(finish));
                    self.remaining_work += t.cost;
                    free[d] = old_free;
                    end[i] = old_end;
                    dev[i] = old_dev;
                }
            }
        }
    }

    let mut search = Search {
        tasks,
        deps,
        fwd_of,
        comm: spec.comm_cost,
        best: None,
        remaining_work: tasks.iter().map(|t| t.cost).sum(),
        total_speed: devices.iter().map(|d| d.speed).sum(),
        devices,
    };
    let mut free = vec![Exact::ZERO; search.devices.len()];
    let mut end = vec![Exact::ZERO; n];
    let mut dev = vec![usize::MAX; n];
    search.go(0, &mut free, &mut end, &mut dev, Exact::ZERO);
    search.best.expect("some schedule exists")
}

/// Deterministic enumeration of tiny workloads: at most `max_tasks` tasks on
/// two devices, over model/shard/minibatch shapes and several seeds.
pub fn tiny_instances(max_tasks: usize, seeds: u64) -> Vec<WorkloadSpec> {
    let mut out = Vec::new();
    for models in 1..=4u32 {
        for shards in 1..=4u32 {
            for minibatches in 1..=2u32 {
                let tasks = (2 * models * shards * minibatches) as usize;
                if tasks > max_tasks {
                    continue;
                }
                for profile in [MemoryProfile::Tight, MemoryProfile::Roomy] {
                    for seed in 0..seeds {
                        let spec = SyntheticParams::new(
                            models,
                            shards,
                            2,
                            (Exact::ONE, Exact::from_int(4)),
                            profile,
                            seed,
                        )
                        .with_minibatches(minibatches)
                        .generate()
                        .unwrap();
                        out.push(spec);
                    }
                }
            }
        }
    }
    out
}

/// Serial time of each model: forward plus backward costs over all minibatches.
pub fn model_serial_times(spec: &WorkloadSpec) -> Vec<Exact> {
    spec.models.iter().map(|m| m.serial_cost()).collect()
}

pub fn count_direction(graph: &TaskGraph, dir: Direction) -> usize {
    graph
        .tasks()
        .iter()
        .filter(|t| t.id.direction == dir)
        .count()
}

/// Parameters in one BERT-Large encoder layer: fused QKV, attention output,
/// two layer norms and the 1024-4096-1024 feed-forward block.
pub const ENCODER_LAYER_PARAMS: i64 = 3 * (1024 * 1024 + 1024)
    + (1024 * 1024 + 1024)
    + 2 * 1024
    + (1024 * 4096 + 4096)
    + (4096 * 1024 + 1024)
    + 2 * 1024;

/// Word, position and token-type embeddings plus their layer norm.
pub const EMBEDDING_PARAMS: i64 = 30522 * 1024 + 512 * 1024 + 2 * 1024 + 2 * 1024;

/// A single BERT-Large-shaped model cut into four shards of six encoder
/// layers, with the embeddings riding on the first shard. Memory is counted
/// in parameters; each shard stashes the same activation volume. Four devices
/// sized to the largest shard.
pub fn bert_large_like() -> WorkloadSpec {
    let activations = 6 * 1024 * 384;
    let shard = |params: i64| {
        (
            Exact::from_int(params),
            Exact::from_int(activations),
            Exact::from_int(6),
            Exact::from_int(12),
        )
    };
    let body = 6 * ENCODER_LAYER_PARAMS;
    let model = shardsim::ModelSpec::from_shards(
        0,
        1,
        1,
        [
            shard(EMBEDDING_PARAMS + body),
            shard(body),
            shard(body),
            shard(body),
        ],
    );
    let capacity = model.shards.iter().map(|s| s.working_set()).max().unwrap();
    WorkloadSpec {
        devices: (0..4)
            .map(|i| shardsim::DeviceSpec::new(i, capacity))
            .collect(),
        models: vec![model],
        comm_cost: Exact::ZERO,
        seed: 0,
    }
}
