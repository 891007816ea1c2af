//! Text Gantt charts of W1 under model and shard parallelism. The idle cells
//! under model parallelism are the pipeline bubble.
//!
//!     cargo run --example gantt

use shardsim::{generate_synthetic, simulate, Direction, Exact, Policy};

fn chart(policy: Policy) {
    let spec = generate_synthetic(4, 4, 4, (Exact::ONE, Exact::ONE), "tight", 0).unwrap();
    let (metrics, trace) = simulate(&spec, policy).unwrap();
    let width = metrics.makespan.numer() as usize;
    let mut rows = vec![vec!["  .".to_string(); width]; spec.devices.len()];
    for a in &trace.assignments {
        let dir = if a.task.direction == Direction::Fwd {
            'F'
        } else {
            'B'
        };
        let label = format!("{dir}{}{}", a.task.model, a.task.shard);
        for t in a.start.numer()..a.end.numer() {
            rows[a.device][t as usize] = format!("{label:>3}");
        }
    }
    println!(
        "{policy}: makespan {}, utilization {}",
        metrics.makespan,
        metrics.utilization.ratio_string()
    );
    for (d, row) in rows.iter().enumerate() {
        println!("  dev{d} |{}", row.join(""));
    }
}

fn main() {
    chart(Policy::ModelParallel);
    println!();
    chart(Policy::ShardParallel);
    println!();
    println!("F/B = forward/backward, then model and shard index");
}
