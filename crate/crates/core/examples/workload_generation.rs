//! Generates a synthetic workload, prints its config document, reads it back
//! and reports the task graph size and lower bounds.
//!
//!     cargo run --example workload_generation

use shardsim::{
    lower_bounds, parse_workload, serialize_workload, Exact, MemoryProfile, SyntheticParams,
    TaskGraph,
};

fn main() {
    let spec = SyntheticParams::new(
        2,
        3,
        2,
        (Exact::new(1, 2), Exact::from_int(2)),
        MemoryProfile::Tight,
        5,
    )
    .with_minibatches(2)
    .generate()
    .unwrap();

    let text = serialize_workload(&spec).unwrap();
    println!("{text}");
    let parsed = parse_workload(&text).unwrap();
    assert_eq!(parsed, spec);

    let graph = TaskGraph::expand(&parsed);
    let bounds = lower_bounds(&parsed, &graph);
    println!(
        "{} tasks, critical path {}, work bound {}, chain bound {}",
        graph.len(),
        graph.critical_path(),
        bounds.work,
        bounds.chain
    );

    let mut broken = parsed.clone();
    broken.models[1].shards[0].param_memory = Exact::from_int(100);
    for v in broken.validate() {
        println!("invalid: {}: {}", v.path, v.message);
    }
}
