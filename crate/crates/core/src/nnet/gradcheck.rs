use ndarray::ArrayView2;

use super::loss::{loss_and_grad, loss_only, LossKind};
use super::model::MlpModel;
use crate::error::{Error, Result};

/// Largest relative deviation `|a − f| / max(1e-8, |a| + |f|)` between the
/// analytic gradient `a` and the central difference
/// `f = (L(θ + ε) − L(θ − ε)) / 2ε`, over every parameter.
pub fn grad_check(
    model: &MlpModel,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    kind: LossKind,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grad_check eps {eps} must be > 0"
        )));
    }
    let (_, analytic) = loss_and_grad(model, x, targets, kind)?;
    let analytic: Vec<f64> = analytic.params().collect();
    let originals: Vec<f64> = model.params().collect();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (k, (&a, &original)) in analytic.iter().zip(&originals).enumerate() {
        set_param(&mut probe, k, original + eps);
        let plus = loss_only(&probe, x, targets, kind)?;
        set_param(&mut probe, k, original - eps);
        let minus = loss_only(&probe, x, targets, kind)?;
        set_param(&mut probe, k, original);
        let f = (plus - minus) / (2.0 * eps);
        worst = worst.max((a - f).abs() / (a.abs() + f.abs()).max(1e-8));
    }
    Ok(worst)
}

fn set_param(model: &mut MlpModel, k: usize, value: f64) {
    *model.params_mut().nth(k).expect("index in range") = value;
}

/// Smallest `|pre-activation|` over a batch; finite differences are only
/// meaningful away from the ReLU kink.
pub fn min_kink_distance(model: &MlpModel, x: ArrayView2<f64>) -> Result<f64> {
    let pre = model.activations(x)?.pre;
    Ok(pre.iter().fold(f64::INFINITY, |m, z| m.min(z.abs())))
}
