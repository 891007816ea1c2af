//! Exact dense-network numerics used to show that shard-by-shard training
//! reproduces monolithic training bit for bit.

mod gradcheck;
mod matrix;
mod mlp;
mod prng;
mod shard;

pub use gradcheck::{
    finite_difference_check, relative_error, GradCheckReport, DEFAULT_STEP, GRADIENT_FLOOR,
};
pub use matrix::Matrix;
pub use mlp::{
    bitwise_equal, compare_models, monolithic_step, mse_loss, regression_batch, Activation, Dense,
    ForwardPass, Gradients, LayerGrad, Mlp,
};
pub use prng::Prng;
pub use shard::{sharded_step, ShardedMlp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KernelError {
    #[error("seed must be non-zero")]
    ZeroSeed,
    #[error("need at least two non-zero layer dimensions")]
    EmptyDims,
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer} input width does not match the previous layer's output")]
    LayerMismatch { layer: usize },
    #[error("the output layer must use the identity activation")]
    NonlinearOutput,
    #[error("invalid sharding: {0}")]
    InvalidSharding(String),
    #[error("models have different architectures")]
    ArchitectureMismatch,
}
