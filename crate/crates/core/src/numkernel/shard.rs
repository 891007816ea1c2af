//! Contiguous-layer sharding of an [`Mlp`] and shard-by-shard training.
//!
//! Each shard owns its layers and the activations it produced; only boundary
//! activations travel forward and only boundary gradients travel backward.

use std::ops::Range;

use super::mlp::{mse_loss, Dense, LayerGrad, Mlp};
use super::{KernelError, Matrix};

/// Partition of a layer list into contiguous, non-empty, ordered ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardedMlp {
    boundaries: Vec<Range<usize>>,
}

impl ShardedMlp {
    pub fn new(boundaries: Vec<Range<usize>>, n_layers: usize) -> Result<Self, KernelError> {
        if boundaries.is_empty() {
            return Err(KernelError::InvalidSharding("no shards".into()));
        }
        let mut next = 0;
        for (s, r) in boundaries.iter().enumerate() {
            if r.start != next {
                return Err(KernelError::InvalidSharding(format!(
                    "shard {s} starts at layer {} but layer {next} is the next uncovered layer",
                    r.start
                )));
            }
            if r.is_empty() {
                return Err(KernelError::InvalidSharding(format!("shard {s} is empty")));
            }
            next = r.end;
        }
        if next != n_layers {
            return Err(KernelError::InvalidSharding(format!(
                "shards cover layers 0..{next} of {n_layers}"
            )));
        }
        Ok(Self { boundaries })
    }

    /// Splits `n_layers` into `shards` contiguous ranges whose sizes differ
    /// by at most one, larger ranges first.
    pub fn even(n_layers: usize, shards: usize) -> Result<Self, KernelError> {
        if shards == 0 || shards > n_layers {
            return Err(KernelError::InvalidSharding(format!(
                "cannot split {n_layers} layers into {shards} shards"
            )));
        }
        let (base, extra) = (n_layers / shards, n_layers % shards);
        let mut start = 0;
        let boundaries = (0..shards)
            .map(|s| {
                let len = base + usize::from(s < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Self::new(boundaries, n_layers)
    }

    pub fn boundaries(&self) -> &[Range<usize>] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }
}

/// One shard's layers plus the activations it stashed during forward.
struct ShardWorker {
    layers: Vec<Dense>,
    stash: Vec<Matrix>,
    grads: Vec<LayerGrad>,
}

impl ShardWorker {
    fn forward(&mut self, boundary_in: Matrix) -> Result<Matrix, KernelError> {
        self.stash.clear();
        self.stash.push(boundary_in);
        for layer in &self.layers {
            let next = layer.forward(self.stash.last().expect("non-empty"))?;
            self.stash.push(next);
        }
        Ok(self.stash.last().expect("non-empty").clone())
    }

    fn backward(&mut self, boundary_grad: Matrix) -> Result<Matrix, KernelError> {
        let mut grad = boundary_grad;
        self.grads.clear();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (g, grad_in) = layer.backward(&self.stash[k], &self.stash[k + 1], &grad)?;
            self.grads.push(g);
            grad = grad_in;
        }
        self.grads.reverse();
        self.stash.clear();
        Ok(grad)
    }

    fn update(&mut self, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&self.grads) {
            layer.apply_sgd(g, lr);
        }
    }
}

/// One SGD step executed shard by shard.
pub fn sharded_step(
    model: &Mlp,
    sharding: &ShardedMlp,
    batch: &Matrix,
    targets: &Matrix,
    lr: f64,
) -> Result<(Mlp, f64), KernelError> {
    let sharding = ShardedMlp::new(sharding.boundaries.clone(), model.layers.len())?;
    let mut workers: Vec<ShardWorker> = sharding
        .boundaries
        .iter()
        .map(|r| ShardWorker {
            layers: model.layers[r.clone()].to_vec(),
            stash: Vec::new(),
            grads: Vec::new(),
        })
        .collect();

    let mut boundary = batch.clone();
    for w in &mut workers {
        boundary = w.forward(boundary)?;
    }
    let (loss, mut grad) = mse_loss(&boundary, targets)?;
    for w in workers.iter_mut().rev() {
        grad = w.backward(grad)?;
    }
    for w in &mut workers {
        w.update(lr);
    }

    let layers = workers.into_iter().flat_map(|w| w.layers).collect();
    Ok((Mlp { layers }, loss))
}
