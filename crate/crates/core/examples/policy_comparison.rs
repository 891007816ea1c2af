//! Makespan and utilization of the three policies on W1 and on a few
//! randomly costed workloads.
//!
//!     cargo run --example policy_comparison

use shardsim::cli::{compare_csv, compare_policies};
use shardsim::{generate_synthetic, Exact};

fn main() {
    let w1 = generate_synthetic(4, 4, 4, (Exact::ONE, Exact::ONE), "tight", 0).unwrap();
    println!("W1: 4 models x 4 unit shards, 4 devices, capacity = one shard");
    print!("{}", compare_csv(&compare_policies(&w1).unwrap()));

    for (models, shards, devices, profile, seed) in [
        (8, 4, 4, "roomy", 1),
        (8, 4, 4, "tight", 2),
        (3, 6, 2, "roomy", 3),
    ] {
        let spec = generate_synthetic(
            models,
            shards,
            devices,
            (Exact::ONE, Exact::from_int(5)),
            profile,
            seed,
        )
        .unwrap();
        println!();
        println!(
            "{models} models x {shards} shards on {devices} devices, {profile} memory, seed {seed}"
        );
        print!("{}", compare_csv(&compare_policies(&spec).unwrap()));
    }
}
