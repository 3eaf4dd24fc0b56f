//! Randomized property suites for the gradient and the lift construction.

use ndarray::{concatenate, Array2, Axis};
use serde::Serialize;

use super::gradcheck::{grad_check, min_kink_distance};
use super::loss::LossKind;
use super::model::{init_mlp, lift_model, MlpModel};
use crate::error::Result;
use crate::rng::Rng;

/// Finite-difference step used by [`gradient_suite`].
pub const GRAD_EPS: f64 = 1e-5;
/// Draws whose pre-activations come closer than this to zero are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;
pub const GRAD_TOL: f64 = 1e-4;
pub const LIFT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradSuiteReport {
    pub draws: usize,
    /// Draws rejected for lying near a ReLU kink.
    pub redrawn: usize,
    pub max_rel_dev: f64,
    /// Worst draw as `(loss, d_in, hidden, classes, batch)`.
    pub worst: Option<(LossKind, usize, usize, usize, usize)>,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_dev < GRAD_TOL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiftSuiteReport {
    pub draws: usize,
    /// Worst `|lift(m)([x | x]) − m(x)|`.
    pub max_self_dev: f64,
    /// Worst `|lift(m)([x1 | x2]) − (m(x1) + m(x2)) / 2|`.
    pub max_pair_dev: f64,
}

impl LiftSuiteReport {
    pub fn passed(&self) -> bool {
        self.max_self_dev < LIFT_TOL && self.max_pair_dev < LIFT_TOL
    }
}

/// A network with random weights and biases.
pub fn random_model(d: usize, h: usize, c: usize, rng: &mut Rng) -> Result<MlpModel> {
    let mut m = init_mlp(d, h, c, rng)?;
    m.b1.mapv_inplace(|_| 0.5 * rng.normal());
    m.b2.mapv_inplace(|_| 0.5 * rng.normal());
    Ok(m)
}

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.normal())
}

/// Targets suited to `kind`: real values for MSE, one-hot or two-hot rows
/// for cross-entropy, random 0/1 rows for BCE.
pub fn random_targets(rows: usize, c: usize, kind: LossKind, rng: &mut Rng) -> Array2<f64> {
    let mut t = Array2::zeros((rows, c));
    for mut row in t.rows_mut() {
        match kind {
            LossKind::Mse => row.mapv_inplace(|_| rng.normal()),
            LossKind::CrossEntropy => {
                let a = rng.below_usize(c);
                let b = rng.below_usize(c);
                row[a] += 0.5;
                row[b] += 0.5;
            }
            LossKind::Bce => row.mapv_inplace(|_| rng.below(2) as f64),
        }
    }
    t
}

/// `draws` random `(model, batch, loss)` triples checked against central
/// differences. Draws near a ReLU kink are redrawn.
pub fn gradient_suite(draws: usize, seed: u64) -> Result<GradSuiteReport> {
    let mut rng = Rng::new(seed);
    let kinds = [LossKind::Mse, LossKind::CrossEntropy, LossKind::Bce];
    let mut report = GradSuiteReport {
        draws,
        redrawn: 0,
        max_rel_dev: 0.0,
        worst: None,
    };
    let mut done = 0;
    while done < draws {
        let kind = kinds[done % kinds.len()];
        let d = 1 + rng.below_usize(6);
        let h = 1 + rng.below_usize(6);
        let c = 2 + rng.below_usize(4);
        let b = 1 + rng.below_usize(5);
        let model = random_model(d, h, c, &mut rng)?;
        let x = gaussian(b, d, &mut rng);
        let t = random_targets(b, c, kind, &mut rng);
        if min_kink_distance(&model, x.view())? < KINK_MARGIN {
            report.redrawn += 1;
            continue;
        }
        let dev = grad_check(&model, x.view(), t.view(), kind, GRAD_EPS)?;
        if dev > report.max_rel_dev || report.worst.is_none() {
            report.max_rel_dev = report.max_rel_dev.max(dev);
            report.worst = Some((kind, d, h, c, b));
        }
        done += 1;
    }
    Ok(report)
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Both lift identities on `draws` random networks and input batches.
pub fn lift_suite(draws: usize, seed: u64) -> Result<LiftSuiteReport> {
    let mut rng = Rng::new(seed);
    let mut report = LiftSuiteReport {
        draws,
        max_self_dev: 0.0,
        max_pair_dev: 0.0,
    };
    for _ in 0..draws {
        let d = 1 + rng.below_usize(8);
        let h = 1 + rng.below_usize(8);
        let c = 1 + rng.below_usize(5);
        let b = 1 + rng.below_usize(4);
        let model = random_model(d, h, c, &mut rng)?;
        let lifted = lift_model(&model);
        let x1 = gaussian(b, d, &mut rng);
        let x2 = gaussian(b, d, &mut rng);

        let base1 = model.forward(x1.view())?;
        let base2 = model.forward(x2.view())?;
        let same = lifted.forward(concatenate![Axis(1), x1, x1].view())?;
        let pair = lifted.forward(concatenate![Axis(1), x1, x2].view())?;
        let mean = (&base1 + &base2) * 0.5;
        report.max_self_dev = report.max_self_dev.max(max_abs_diff(&same, &base1));
        report.max_pair_dev = report.max_pair_dev.max(max_abs_diff(&pair, &mean));
    }
    Ok(report)
}
