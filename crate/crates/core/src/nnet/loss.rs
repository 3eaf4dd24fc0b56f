use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::model::MlpModel;
use crate::datagen::{argmax, check_target_mode, one_hot_index, TargetMode};
use crate::error::{Error, Result};

/// Per-row losses, averaged over the batch:
///
/// * `Mse`: `Σ_k (z_k − t_k)²`
/// * `CrossEntropy`: `−Σ_k t_k log softmax(z)_k` (soft targets summing to 1)
/// * `Bce`: `−Σ_k [t_k log σ(z_k) + (1 − t_k) log(1 − σ(z_k))]` ({0,1} targets)
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
    Bce,
}

impl LossKind {
    /// Target mode the loss consumes, if it requires one.
    pub fn required_mode(self) -> Option<TargetMode> {
        match self {
            LossKind::Mse => None,
            LossKind::CrossEntropy => Some(TargetMode::Distribution),
            LossKind::Bce => Some(TargetMode::MultiHot),
        }
    }
}

/// `log Σ exp(z)` with the max shift.
pub fn log_sum_exp(z: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = z.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean loss over rows and its gradient with respect to the logits.
pub fn loss_and_logit_grad(
    logits: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    kind: LossKind,
) -> Result<(f64, Array2<f64>)> {
    if logits.dim() != targets.dim() {
        return Err(Error::DimensionMismatch {
            expected: logits.ncols(),
            got: targets.ncols(),
            context: "targets vs logits",
        });
    }
    if let Some(mode) = kind.required_mode() {
        check_target_mode(targets, mode)?;
    }
    let b = logits.nrows().max(1) as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut total = 0.0;
    for ((z, t), mut g) in logits
        .rows()
        .into_iter()
        .zip(targets.rows())
        .zip(grad.rows_mut())
    {
        match kind {
            LossKind::Mse => {
                for k in 0..z.len() {
                    let r = z[k] - t[k];
                    total += r * r;
                    g[k] = 2.0 * r;
                }
            }
            LossKind::CrossEntropy => {
                let lse = log_sum_exp(z.iter().copied());
                let mass: f64 = t.sum();
                for k in 0..z.len() {
                    if t[k] != 0.0 {
                        total += t[k] * (lse - z[k]);
                    }
                    g[k] = mass * (z[k] - lse).exp() - t[k];
                }
            }
            LossKind::Bce => {
                for k in 0..z.len() {
                    total += softplus(z[k]) - z[k] * t[k];
                    g[k] = sigmoid(z[k]) - t[k];
                }
            }
        }
    }
    grad /= b;
    let loss = total / b;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok((loss, grad))
}

/// Mean loss and its gradient with respect to every parameter.
pub fn loss_and_grad(
    model: &MlpModel,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    kind: LossKind,
) -> Result<(f64, MlpModel)> {
    if x.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: targets.nrows(),
            context: "batch rows",
        });
    }
    if targets.ncols() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim(),
            got: targets.ncols(),
            context: "target width vs network outputs",
        });
    }
    let act = model.activations(x)?;
    let (loss, g_logits) = loss_and_logit_grad(act.logits.view(), targets, kind)?;

    let w2 = g_logits.t().dot(&act.hidden);
    let b2 = g_logits.sum_axis(Axis(0));
    let mut g_pre = g_logits.dot(&model.w2);
    ndarray::Zip::from(&mut g_pre)
        .and(&act.pre)
        .for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
    let w1 = g_pre.t().dot(&x);
    let b1 = g_pre.sum_axis(Axis(0));
    Ok((loss, MlpModel { w1, b1, w2, b2 }))
}

/// Loss only; no gradient bookkeeping.
pub fn loss_only(
    model: &MlpModel,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    kind: LossKind,
) -> Result<f64> {
    let logits = model.forward(x)?;
    Ok(loss_and_logit_grad(logits.view(), targets, kind)?.0)
}

/// Fraction of rows whose logit argmax differs from the target's class.
/// Ties go to the lowest index. Targets must be one-hot.
pub fn classify_error(
    model: &MlpModel,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<f64> {
    let logits = model.forward(x)?;
    error_from_logits(logits.view(), targets)
}

pub fn error_from_logits(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    let mut wrong = 0usize;
    for (i, (z, t)) in logits.rows().into_iter().zip(targets.rows()).enumerate() {
        let label = one_hot_index(t).ok_or_else(|| {
            Error::ModeMismatch(format!(
                "classification error needs one-hot targets (row {i})"
            ))
        })?;
        if argmax(z) != label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / logits.nrows().max(1) as f64)
}
