//! Trains one network twice, whole and split into shards, and checks that the
//! parameters agree bit for bit. Also runs a finite-difference gradient check.
//!
//!     cargo run --release --example exact_sharded_training

use shardsim::numkernel::{
    bitwise_equal, compare_models, finite_difference_check, monolithic_step, regression_batch,
    sharded_step, Mlp, Prng, ShardedMlp, DEFAULT_STEP,
};

fn main() {
    let dims = [16, 64, 64, 32, 4];
    let model = Mlp::init(&dims, 3).unwrap();
    let mut rng = Prng::new(4).unwrap();
    let (x, t) = regression_batch(32, dims[0], dims[4], &mut rng);
    println!("network {dims:?}, {} parameters", model.param_count());

    let fd = finite_difference_check(&model, &x, &t, DEFAULT_STEP, None).unwrap();
    println!(
        "finite differences: {} compared, {} at a relu kink, max relative error {:.2e}",
        fd.checked, fd.skipped_kinks, fd.max_rel_error
    );

    for shards in 1..=4 {
        let sharding = ShardedMlp::even(4, shards).unwrap();
        let (mut mono, mut split) = (model.clone(), model.clone());
        let mut loss = 0.0;
        for _ in 0..100 {
            let (m, l) = monolithic_step(&mono, &x, &t, 0.05).unwrap();
            mono = m;
            loss = l;
            split = sharded_step(&split, &sharding, &x, &t, 0.05).unwrap().0;
        }
        println!(
            "S={shards} {:?}: loss {loss:.6}, max_diff {}, bitwise equal {}",
            sharding.boundaries(),
            compare_models(&mono, &split).unwrap(),
            bitwise_equal(&mono, &split)
        );
    }
}
