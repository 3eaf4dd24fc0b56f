use std::time::Instant;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::loss::{error_from_logits, loss_and_grad, loss_and_logit_grad, LossKind};
use super::model::MlpModel;
use super::optim::{opt_step, OptimConfig, OptimState};
use crate::augment::{sample_pair_indices, ConcatView};
use crate::datagen::{check_target_mode, ClassificationDataset};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Rows per chunk when evaluating a whole dataset.
const EVAL_CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub optimizer: OptimConfig,
    /// Pairs per concatenated epoch, as a multiple of the base size.
    pub e_mult: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.e_mult == 0 {
            return Err(Error::InvalidArgument("e_mult must be >= 1".into()));
        }
        self.optimizer.validate()
    }
}

/// Training data: plain rows, or the virtual pair grid of a base set.
#[derive(Clone, Copy, Debug)]
pub enum TrainSource<'a> {
    Plain(&'a ClassificationDataset),
    Concat(ConcatView<'a, ClassificationDataset>),
}

impl TrainSource<'_> {
    pub fn input_dim(&self) -> usize {
        match self {
            TrainSource::Plain(ds) => ds.dim(),
            TrainSource::Concat(v) => v.input_dim(),
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            TrainSource::Plain(ds) => ds.class_count(),
            TrainSource::Concat(v) => v.class_count(),
        }
    }

    pub fn base_len(&self) -> usize {
        match self {
            TrainSource::Plain(ds) => ds.len(),
            TrainSource::Concat(v) => v.base_len(),
        }
    }

    fn check_loss(&self, loss: LossKind) -> Result<()> {
        let Some(mode) = loss.required_mode() else {
            return Ok(());
        };
        match self {
            TrainSource::Plain(ds) => check_target_mode(ds.targets.view(), mode),
            TrainSource::Concat(v) if v.target_mode() == mode => Ok(()),
            TrainSource::Concat(v) => Err(Error::ModeMismatch(format!(
                "{loss:?} loss cannot train on {:?} pair targets",
                v.mode()
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    /// Present when the set is one-hot.
    pub error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub train_loss: f64,
    /// Absent for concatenated sources.
    pub train_error: Option<f64>,
    /// One entry per evaluation set, in the order given to [`train`].
    pub evals: Vec<EvalMetrics>,
    pub wall_secs: f64,
}

impl TraceRow {
    pub fn test_loss(&self) -> Option<f64> {
        self.evals.first().map(|e| e.loss)
    }

    pub fn test_error(&self) -> Option<f64> {
        self.evals.first().and_then(|e| e.error)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Equality on everything but wall time.
    pub fn same_metrics(&self, other: &TrainTrace) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.train_error.map(f64::to_bits) == b.train_error.map(f64::to_bits)
                    && a.evals.len() == b.evals.len()
                    && a.evals.iter().zip(&b.evals).all(|(x, y)| {
                        x.loss.to_bits() == y.loss.to_bits()
                            && x.error.map(f64::to_bits) == y.error.map(f64::to_bits)
                    })
            })
    }
}

/// Loss and (for one-hot sets) classification error over a whole dataset.
pub fn evaluate(
    model: &MlpModel,
    ds: &ClassificationDataset,
    loss: LossKind,
) -> Result<EvalMetrics> {
    let n = ds.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "evaluate on an empty dataset".into(),
        ));
    }
    let one_hot = ds.is_one_hot();
    let mut total = 0.0;
    let mut wrong = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let x = ds.features.slice(s![start..end, ..]);
        let t = ds.targets.slice(s![start..end, ..]);
        let logits = model.forward(x)?;
        let (l, _) = loss_and_logit_grad(logits.view(), t, loss)?;
        total += l * (end - start) as f64;
        if one_hot {
            wrong += error_from_logits(logits.view(), t)? * (end - start) as f64;
        }
        start = end;
    }
    Ok(EvalMetrics {
        loss: total / n as f64,
        error: one_hot.then(|| wrong / n as f64),
    })
}

fn gather(ds: &ClassificationDataset, rows: &[usize]) -> (Array2<f64>, Array2<f64>) {
    (
        ds.features.select(Axis(0), rows),
        ds.targets.select(Axis(0), rows),
    )
}

/// Mini-batch training.
///
/// Every epoch a plain source is visited in a fresh seeded permutation; a
/// concatenated source contributes `n * e_mult` distinct pairs drawn from
/// its `n^2` grid. After each epoch the trace records the train loss (a full
/// pass for plain sources, the size-weighted mean of batch losses for pair
/// sources) and loss/error on every evaluation set. Single-threaded and
/// deterministic given the seed.
pub fn train(
    mut model: MlpModel,
    source: TrainSource<'_>,
    cfg: &TrainConfig,
    evals: &[&ClassificationDataset],
) -> Result<(MlpModel, TrainTrace)> {
    cfg.validate()?;
    if source.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: source.input_dim(),
            context: "training inputs vs network",
        });
    }
    if source.class_count() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim(),
            got: source.class_count(),
            context: "training classes vs network outputs",
        });
    }
    source.check_loss(cfg.loss)?;
    let n = source.base_len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if let TrainSource::Concat(v) = source {
        if (n as u64).saturating_mul(cfg.e_mult as u64) > v.pair_count() {
            return Err(Error::InvalidArgument(format!(
                "e_mult {} asks for more than the {} available pairs",
                cfg.e_mult,
                v.pair_count()
            )));
        }
    }

    let mut rng = Rng::new(cfg.seed);
    let mut opt = OptimState::new(cfg.optimizer)?;
    let mut trace = TrainTrace::default();
    let started = Instant::now();

    for epoch in 1..=cfg.epochs {
        opt.start_epoch(epoch);
        let diverged = |loss: f64| Error::Diverged { epoch, loss };
        let mut step = |x: &Array2<f64>, t: &Array2<f64>, model: &mut MlpModel| -> Result<f64> {
            let (loss, grads) = match loss_and_grad(model, x.view(), t.view(), cfg.loss) {
                Err(Error::NonFinite(_)) => return Err(diverged(f64::NAN)),
                other => other?,
            };
            opt_step(model, &grads, &mut opt)?;
            if !model.is_finite() {
                return Err(diverged(loss));
            }
            Ok(loss)
        };

        let (train_loss, train_error) = match source {
            TrainSource::Plain(ds) => {
                let perm = rng.permutation(n);
                for chunk in perm.chunks(cfg.batch_size) {
                    let (x, t) = gather(ds, chunk);
                    step(&x, &t, &mut model)?;
                }
                let m = evaluate(&model, ds, cfg.loss)?;
                (m.loss, m.error)
            }
            TrainSource::Concat(view) => {
                let pairs = sample_pair_indices(&view, n * cfg.e_mult, &mut rng)?;
                let mut weighted = 0.0;
                for chunk in pairs.chunks(cfg.batch_size) {
                    let batch = view.batch(chunk);
                    weighted +=
                        step(&batch.features, &batch.targets, &mut model)? * chunk.len() as f64;
                }
                (weighted / pairs.len() as f64, None)
            }
        };
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let evals = evals
            .iter()
            .map(|ds| evaluate(&model, ds, cfg.loss))
            .collect::<Result<Vec<_>>>()?;
        trace.rows.push(TraceRow {
            epoch,
            train_loss,
            train_error,
            evals,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok((model, trace))
}
