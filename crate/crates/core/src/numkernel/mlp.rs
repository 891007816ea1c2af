//! Dense feed-forward network with exact, order-fixed forward and backward
//! kernels. The per-layer kernels here are the only arithmetic used by both
//! the monolithic and the sharded training paths.

use super::{KernelError, Matrix, Prng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the layer output.
    #[inline]
    fn derivative_at_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer `act(x W + b)` with `W` stored `[fan_in x fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    /// `x W + b` before the activation.
    pub fn pre_activations(&self, input: &Matrix) -> Result<Matrix, KernelError> {
        if input.cols() != self.fan_in() {
            return Err(KernelError::ShapeMismatch {
                what: "layer input width",
                expected: self.fan_in(),
                found: input.cols(),
            });
        }
        let (batch, fan_in, fan_out) = (input.rows(), self.fan_in(), self.fan_out());
        let mut out = Matrix::zeros(batch, fan_out);
        for b in 0..batch {
            let x = input.row(b);
            for j in 0..fan_out {
                let mut acc = 0.0;
                for (i, &xi) in x.iter().enumerate().take(fan_in) {
                    acc += xi * self.weights.get(i, j);
                }
                out.set(b, j, acc + self.bias[j]);
            }
        }
        Ok(out)
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix, KernelError> {
        let mut out = self.pre_activations(input)?;
        for z in out.data_mut() {
            *z = self.activation.apply(*z);
        }
        Ok(out)
    }

    /// Returns this layer's parameter gradients and the gradient with respect
    /// to its input. Batch reductions are innermost.
    pub fn backward(
        &self,
        input: &Matrix,
        output: &Matrix,
        grad_output: &Matrix,
    ) -> Result<(LayerGrad, Matrix), KernelError> {
        let (batch, fan_in, fan_out) = (input.rows(), self.fan_in(), self.fan_out());
        for (what, m, cols) in [
            ("layer output", output, fan_out),
            ("output gradient", grad_output, fan_out),
        ] {
            if m.rows() != batch || m.cols() != cols {
                return Err(KernelError::ShapeMismatch {
                    what,
                    expected: batch * cols,
                    found: m.rows() * m.cols(),
                });
            }
        }

        let mut delta = Matrix::zeros(batch, fan_out);
        for b in 0..batch {
            for j in 0..fan_out {
                let d =
                    grad_output.get(b, j) * self.activation.derivative_at_output(output.get(b, j));
                delta.set(b, j, d);
            }
        }

        let mut dw = Matrix::zeros(fan_in, fan_out);
        for i in 0..fan_in {
            for j in 0..fan_out {
                let mut acc = 0.0;
                for b in 0..batch {
                    acc += input.get(b, i) * delta.get(b, j);
                }
                dw.set(i, j, acc);
            }
        }

        let mut db = vec![0.0; fan_out];
        for (j, slot) in db.iter_mut().enumerate() {
            let mut acc = 0.0;
            for b in 0..batch {
                acc += delta.get(b, j);
            }
            *slot = acc;
        }

        let mut grad_input = Matrix::zeros(batch, fan_in);
        for b in 0..batch {
            for i in 0..fan_in {
                let mut acc = 0.0;
                for j in 0..fan_out {
                    acc += delta.get(b, j) * self.weights.get(i, j);
                }
                grad_input.set(b, i, acc);
            }
        }

        Ok((
            LayerGrad {
                weights: dw,
                bias: db,
            },
            grad_input,
        ))
    }

    pub fn apply_sgd(&mut self, grad: &LayerGrad, lr: f64) {
        for (w, g) in self.weights.data_mut().iter_mut().zip(grad.weights.data()) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }
}

/// Mean squared error `(1 / (2 * batch)) * sum ||y - t||^2` and its gradient
/// with respect to `y`.
pub fn mse_loss(output: &Matrix, targets: &Matrix) -> Result<(f64, Matrix), KernelError> {
    if output.rows() != targets.rows() || output.cols() != targets.cols() {
        return Err(KernelError::ShapeMismatch {
            what: "targets",
            expected: output.rows() * output.cols(),
            found: targets.rows() * targets.cols(),
        });
    }
    let batch = output.rows() as f64;
    let mut sum = 0.0;
    let mut grad = Matrix::zeros(output.rows(), output.cols());
    for b in 0..output.rows() {
        for j in 0..output.cols() {
            let diff = output.get(b, j) - targets.get(b, j);
            sum += diff * diff;
            grad.set(b, j, diff / batch);
        }
    }
    Ok((sum / (2.0 * batch), grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// All activations of one forward pass; `activations[0]` is the input and the
/// last entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub activations: Vec<Matrix>,
}

impl ForwardPass {
    pub fn output(&self) -> &Matrix {
        self.activations
            .last()
            .expect("forward pass always holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Mlp {
    /// Validates layer chaining and that the final layer is linear.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, KernelError> {
        if layers.is_empty() {
            return Err(KernelError::EmptyDims);
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(KernelError::LayerMismatch { layer: k + 1 });
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.fan_out() {
                return Err(KernelError::ShapeMismatch {
                    what: "bias length",
                    expected: layer.fan_out(),
                    found: layer.bias.len(),
                });
            }
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(KernelError::NonlinearOutput);
        }
        Ok(Self { layers })
    }

    /// ReLU hidden layers and a linear output layer; weights are drawn
    /// row-major, layer by layer, as `(2u - 1) / sqrt(fan_in)`; biases are zero.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self, KernelError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(KernelError::EmptyDims);
        }
        let mut rng = Prng::new(seed)?;
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, pair)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let scale = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| (2.0 * rng.next_f64() - 1.0) * scale)
                    .collect();
                Dense {
                    weights: Matrix::new(fan_in, fan_out, data).expect("sized above"),
                    bias: vec![0.0; fan_out],
                    activation: if k + 1 == n_layers {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in()];
        dims.extend(self.layers.iter().map(Dense::fan_out));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn forward(&self, input: &Matrix) -> Result<ForwardPass, KernelError> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        Ok(ForwardPass { activations })
    }

    pub fn backward(
        &self,
        pass: &ForwardPass,
        targets: &Matrix,
    ) -> Result<(Gradients, f64), KernelError> {
        if pass.activations.len() != self.layers.len() + 1 {
            return Err(KernelError::ShapeMismatch {
                what: "activation count",
                expected: self.layers.len() + 1,
                found: pass.activations.len(),
            });
        }
        let (loss, mut grad) = mse_loss(pass.output(), targets)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (g, grad_in) =
                layer.backward(&pass.activations[k], &pass.activations[k + 1], &grad)?;
            grads.push(g);
            grad = grad_in;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, loss))
    }

    /// Loss only, for finite-difference probing.
    pub fn loss(&self, input: &Matrix, targets: &Matrix) -> Result<f64, KernelError> {
        let pass = self.forward(input)?;
        Ok(mse_loss(pass.output(), targets)?.0)
    }

    /// Flat parameter view: per layer, weights row-major then bias.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data().iter().chain(&l.bias).copied())
    }

    pub(crate) fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weights.data().len();
            if index < nw {
                return &mut layer.weights.data_mut()[index];
            }
            index -= nw;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl Gradients {
    /// Flat view in the same order as [`Mlp::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.data().iter().chain(&g.bias).copied())
            .collect()
    }
}

/// One full-batch SGD step on the whole network.
pub fn monolithic_step(
    model: &Mlp,
    batch: &Matrix,
    targets: &Matrix,
    lr: f64,
) -> Result<(Mlp, f64), KernelError> {
    let pass = model.forward(batch)?;
    let (grads, loss) = model.backward(&pass, targets)?;
    let mut updated = model.clone();
    for (layer, g) in updated.layers.iter_mut().zip(&grads.layers) {
        layer.apply_sgd(g, lr);
    }
    Ok((updated, loss))
}

/// Maximum absolute parameter difference between two same-shaped networks.
pub fn compare_models(a: &Mlp, b: &Mlp) -> Result<f64, KernelError> {
    if a.dims() != b.dims() {
        return Err(KernelError::ArchitectureMismatch);
    }
    Ok(a.params()
        .zip(b.params())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// True when every parameter has the same bit pattern.
pub fn bitwise_equal(a: &Mlp, b: &Mlp) -> bool {
    a.dims() == b.dims()
        && a.params()
            .zip(b.params())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Inputs and targets uniform in [-1, 1).
pub fn regression_batch(
    batch: usize,
    input_dim: usize,
    output_dim: usize,
    rng: &mut Prng,
) -> (Matrix, Matrix) {
    let mut draw = |rows, cols| {
        let data = (0..rows * cols)
            .map(|_| 2.0 * rng.next_f64() - 1.0)
            .collect();
        Matrix::new(rows, cols, data).expect("sized above")
    };
    let x = draw(batch, input_dim);
    let t = draw(batch, output_dim);
    (x, t)
}
