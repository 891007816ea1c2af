//! Central finite-difference check of analytic gradients.

use super::{mse_loss, Activation, KernelError, Matrix, Mlp};

/// Gradients smaller than this are compared on an absolute scale; below it
/// the central difference is dominated by rounding noise of order
/// `eps * loss / h`.
pub const GRADIENT_FLOOR: f64 = 1e-4;

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub checked: usize,
    /// Probes skipped because `p - h` and `p + h` fall on different sides of
    /// a ReLU kink, where the loss has no derivative to compare against.
    pub skipped_kinks: usize,
}

/// Sign of every hidden ReLU pre-activation, plus the loss.
fn probe(model: &Mlp, batch: &Matrix, targets: &Matrix) -> Result<(f64, Vec<i8>), KernelError> {
    let mut signs = Vec::new();
    let mut x = batch.clone();
    for layer in &model.layers {
        let z = layer.pre_activations(&x)?;
        if layer.activation == Activation::Relu {
            signs.extend(z.data().iter().map(|&v| {
                if v > 0.0 {
                    1
                } else if v < 0.0 {
                    -1
                } else {
                    0
                }
            }));
        }
        x = layer.forward(&x)?;
    }
    Ok((mse_loss(&x, targets)?.0, signs))
}

/// `|a - n| / max(|a|, |n|, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares backprop gradients with `(L(p + h) - L(p - h)) / 2h` for every
/// parameter, or for an evenly strided subset of at most `max_params`.
pub fn finite_difference_check(
    model: &Mlp,
    batch: &Matrix,
    targets: &Matrix,
    step: f64,
    max_params: Option<usize>,
) -> Result<GradCheckReport, KernelError> {
    let pass = model.forward(batch)?;
    let (grads, _) = model.backward(&pass, targets)?;
    let analytic = grads.flat();

    let total = analytic.len();
    let stride = match max_params {
        Some(limit) if limit > 0 && total > limit => total.div_ceil(limit),
        _ => 1,
    };

    let mut probe_model = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: 0,
        checked: 0,
        skipped_kinks: 0,
    };
    for index in (0..total).step_by(stride) {
        let original = *probe_model.param_mut(index);
        *probe_model.param_mut(index) = original + step;
        let (plus, signs_plus) = probe(&probe_model, batch, targets)?;
        *probe_model.param_mut(index) = original - step;
        let (minus, signs_minus) = probe(&probe_model, batch, targets)?;
        *probe_model.param_mut(index) = original;
        if signs_plus != signs_minus {
            report.skipped_kinks += 1;
            continue;
        }

        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[index], numeric);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_param = index;
        }
        report.checked += 1;
    }
    Ok(report)
}
