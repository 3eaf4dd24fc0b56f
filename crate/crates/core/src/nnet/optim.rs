use ndarray::{Array, Dimension, Zip};
use serde::{Deserialize, Serialize};

use super::model::MlpModel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LrSchedule {
    Constant,
    /// `lr * factor^floor((epoch - 1) / every)`.
    StepDecay {
        factor: f64,
        every: usize,
    },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay { factor, every } => {
                let steps = epoch.saturating_sub(1) / every.max(1);
                base * factor.powi(steps as i32)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
}

impl OptimConfig {
    /// Adam with lr 1e-3, betas (0.9, 0.999).
    pub fn adam(learning_rate: f64) -> Self {
        OptimConfig {
            kind: OptimizerKind::Adam,
            learning_rate,
            momentum: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            schedule: LrSchedule::Constant,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        OptimConfig {
            kind: OptimizerKind::Sgd,
            ..Self::adam(learning_rate)
        }
    }

    /// SGD with momentum 0.9, weight decay 5e-4 and a 10x decay every 200
    /// epochs.
    pub fn momentum_preset() -> Self {
        OptimConfig {
            kind: OptimizerKind::Momentum,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            schedule: LrSchedule::StepDecay {
                factor: 0.1,
                every: 200,
            },
            ..Self::adam(0.1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("optimizer: {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must be in [0, 1)");
        }
        if !(self.eps >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("eps and weight_decay must be >= 0");
        }
        if let LrSchedule::StepDecay { factor, every } = self.schedule {
            if !(factor > 0.0) || every == 0 {
                return bad("step decay needs factor > 0 and every >= 1");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub config: OptimConfig,
    /// Current learning rate after scheduling.
    pub lr: f64,
    pub step: u64,
    first_moment: Option<MlpModel>,
    second_moment: Option<MlpModel>,
}

impl OptimState {
    pub fn new(config: OptimConfig) -> Result<Self> {
        config.validate()?;
        Ok(OptimState {
            config,
            lr: config.learning_rate,
            step: 0,
            first_moment: None,
            second_moment: None,
        })
    }

    /// Applies the schedule for a 1-based epoch.
    pub fn start_epoch(&mut self, epoch: usize) {
        self.lr = self.config.schedule.rate(self.config.learning_rate, epoch);
    }

    pub fn first_moment(&self) -> Option<&MlpModel> {
        self.first_moment.as_ref()
    }
}

fn zeros_like(m: &MlpModel) -> MlpModel {
    MlpModel::zeros(m.input_dim(), m.hidden_units(), m.output_dim())
}

#[derive(Clone, Copy)]
struct Step {
    kind: OptimizerKind,
    lr: f64,
    decay: f64,
    momentum: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bias1: f64,
    bias2: f64,
}

fn update<D: Dimension>(
    p: &mut Array<f64, D>,
    g: &Array<f64, D>,
    m: &mut Array<f64, D>,
    v: &mut Array<f64, D>,
    s: Step,
) {
    Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *p -= s.decay * *p;
        match s.kind {
            OptimizerKind::Sgd => *p -= s.lr * g,
            OptimizerKind::Momentum => {
                *m = s.momentum * *m + g;
                *p -= s.lr * *m;
            }
            OptimizerKind::Adam => {
                *m = s.beta1 * *m + (1.0 - s.beta1) * g;
                *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
                let m_hat = *m / s.bias1;
                let v_hat = *v / s.bias2;
                *p -= s.lr * m_hat / (v_hat.sqrt() + s.eps);
            }
        }
    });
}

/// One optimizer step. Weight decay is decoupled: `θ ← θ − lr·wd·θ`
/// precedes the gradient update. Momentum keeps `v ← μv + g`,
/// `θ ← θ − lr·v`; Adam uses bias-corrected moments.
pub fn opt_step(model: &mut MlpModel, grads: &MlpModel, state: &mut OptimState) -> Result<()> {
    if !model.same_shape(grads) {
        return Err(Error::DimensionMismatch {
            expected: model.param_count(),
            got: grads.param_count(),
            context: "gradient shape",
        });
    }
    let c = state.config;
    if state.first_moment.is_none() {
        state.first_moment = Some(zeros_like(model));
        state.second_moment = Some(zeros_like(model));
    }
    state.step += 1;
    let t = state.step as i32;
    let s = Step {
        kind: c.kind,
        lr: state.lr,
        decay: state.lr * c.weight_decay,
        momentum: c.momentum,
        beta1: c.beta1,
        beta2: c.beta2,
        eps: c.eps,
        bias1: 1.0 - c.beta1.powi(t),
        bias2: 1.0 - c.beta2.powi(t),
    };
    let m = state.first_moment.as_mut().expect("initialized above");
    let v = state.second_moment.as_mut().expect("initialized above");
    update(&mut model.w1, &grads.w1, &mut m.w1, &mut v.w1, s);
    update(&mut model.b1, &grads.b1, &mut m.b1, &mut v.b1, s);
    update(&mut model.w2, &grads.w2, &mut m.w2, &mut v.w2, s);
    update(&mut model.b2, &grads.b2, &mut m.b2, &mut v.b2, s);
    Ok(())
}
