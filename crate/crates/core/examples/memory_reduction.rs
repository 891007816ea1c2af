//! Per-device memory when one large model is striped over four devices,
//! against what a single device would need to hold the whole model.
//!
//!     cargo run --example memory_reduction

use shardsim::{simulate, DeviceSpec, Exact, ModelSpec, Policy, WorkloadSpec};

// BERT-Large parameter counts.
const LAYER: i64 = 3 * (1024 * 1024 + 1024)
    + (1024 * 1024 + 1024)
    + 2 * 1024
    + (1024 * 4096 + 4096)
    + (4096 * 1024 + 1024)
    + 2 * 1024;
const EMBEDDINGS: i64 = 30522 * 1024 + 512 * 1024 + 2 * 1024 + 2 * 1024;

fn report(name: &str, shards: Vec<(i64, i64)>) {
    let model = ModelSpec::from_shards(
        0,
        1,
        1,
        shards.iter().map(|&(p, a)| {
            (
                Exact::from_int(p),
                Exact::from_int(a),
                Exact::ONE,
                Exact::ONE,
            )
        }),
    );
    let capacity = model.shards.iter().map(|s| s.working_set()).max().unwrap();
    let whole = model.full_residency();
    let spec = WorkloadSpec {
        devices: (0..4).map(|i| DeviceSpec::new(i, capacity)).collect(),
        models: vec![model],
        comm_cost: Exact::ZERO,
        seed: 0,
    };
    let (metrics, _) = simulate(&spec, Policy::ShardParallel).unwrap();
    let peak = metrics.peak_memory();
    println!(
        "{name:<12} whole model {whole:>11}  peak per device {peak:>11}  reduction {:.3}x",
        (whole / peak).to_f64()
    );
    match simulate(&spec, Policy::TaskParallel) {
        Ok(_) => println!("{:<12} task parallel fits", ""),
        Err(e) => println!("{:<12} task parallel: {e}", ""),
    }
}

fn main() {
    report("equal", vec![(3, 1); 4]);

    let acts = 6 * 1024 * 384;
    let body = 6 * LAYER;
    report(
        "bert-large",
        vec![
            (EMBEDDINGS + body, acts),
            (body, acts),
            (body, acts),
            (body, acts),
        ],
    );
}
