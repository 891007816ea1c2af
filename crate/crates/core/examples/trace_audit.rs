//! Writes a schedule trace as JSON, reads it back, tampers with it and lets
//! the independent checker find what broke.
//!
//!     cargo run --example trace_audit

use shardsim::{generate_synthetic, simulate, verify_trace, Exact, Policy, TaskGraph, TraceDoc};

fn main() {
    let spec = generate_synthetic(3, 3, 2, (Exact::ONE, Exact::from_int(3)), "tight", 8).unwrap();
    let graph = TaskGraph::expand(&spec);
    let (metrics, trace) = simulate(&spec, Policy::ShardParallel).unwrap();

    let json = TraceDoc::new(&trace, &metrics).to_json();
    println!("{} bytes of trace, first lines:", json.len());
    for line in json.lines().take(12) {
        println!("  {line}");
    }

    let restored = TraceDoc::from_json(&json).unwrap().to_trace().unwrap();
    println!(
        "clean trace: {} violations",
        verify_trace(&spec, &graph, &restored).len()
    );

    let mut tampered = restored.clone();
    // Move the first backward pass to the other device and start the last
    // task early.
    let bwd = tampered
        .assignments
        .iter_mut()
        .find(|a| a.task.direction == shardsim::Direction::Bwd)
        .unwrap();
    bwd.device = 1 - bwd.device;
    let last = tampered.assignments.last_mut().unwrap();
    last.start = Exact::ZERO;
    tampered.assignments.remove(1);

    for v in verify_trace(&spec, &graph, &tampered) {
        println!("  {v}");
    }
}
