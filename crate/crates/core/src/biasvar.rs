//! KL bias-variance decomposition of the expected cross-entropy.
//!
//! For a one-hot label `π` and predictions `π̂_1..π̂_K`, with `π̄` the
//! normalized geometric mean of the predictions,
//!
//! ```text
//! mean_j CE(π, π̂_j) = KL(π ‖ π̄) + mean_j KL(π̄ ‖ π̂_j)
//!      risk               bias          variance
//! ```
//!
//! holds exactly: every term is evaluated from the same log-probabilities.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::augment::{ConcatView, PairMode, SelfConcat};
use crate::datagen::{split_indices, ClassificationDataset};
use crate::error::{Error, Result};
use crate::nnet::{init_mlp, log_sum_exp, train, TrainConfig, TrainSource};
use crate::rng::{mix, Rng};
use crate::sweep::{format_float, Variant};

/// Smallest probability kept before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// A categorical distribution stored as log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbDist {
    log_probs: Vec<f64>,
    /// `|Σ p − 1|` after flooring, before renormalization.
    correction: f64,
}

impl ProbDist {
    pub fn from_probs(p: &[f64]) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidDimension("empty distribution".into()));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and >= 0".into(),
            ));
        }
        let floored: Vec<f64> = p.iter().map(|&v| v.max(PROB_FLOOR)).collect();
        let sum: f64 = floored.iter().sum();
        let log_sum = sum.ln();
        Ok(ProbDist {
            log_probs: floored.iter().map(|v| v.ln() - log_sum).collect(),
            correction: (sum - 1.0).abs(),
        })
    }

    /// `log softmax(z)`, floored at `ln 1e-300` and renormalized.
    pub fn from_logits(z: ArrayView1<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidDimension("empty logits".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        let lse = log_sum_exp(z.iter().copied());
        Ok(Self::from_log_weights(z.iter().map(|v| v - lse).collect()))
    }

    /// Normalizes unnormalized log-weights, applying the floor.
    fn from_log_weights(mut w: Vec<f64>) -> Self {
        let floor = PROB_FLOOR.ln();
        let lse = log_sum_exp(w.iter().copied());
        let mut floored = false;
        for v in w.iter_mut() {
            *v -= lse;
            if *v < floor {
                *v = floor;
                floored = true;
            }
        }
        let mut correction = 0.0;
        if floored {
            let lse = log_sum_exp(w.iter().copied());
            correction = lse.exp_m1().abs();
            w.iter_mut().for_each(|v| *v -= lse);
        }
        ProbDist {
            log_probs: w,
            correction,
        }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn correction(&self) -> f64 {
        self.correction
    }

    /// Index of the mass-one class when the distribution is one-hot up to
    /// the floor.
    pub fn one_hot_class(&self) -> Option<usize> {
        let hot: Vec<usize> = (0..self.len())
            .filter(|&k| self.log_probs[k] > -1e-9)
            .collect();
        let rest_tiny = self
            .log_probs
            .iter()
            .enumerate()
            .all(|(k, &l)| hot.contains(&k) || l < (1e-12f64).ln());
        (hot.len() == 1 && rest_tiny).then(|| hot[0])
    }

    pub fn one_hot(class: usize, c: usize) -> Result<Self> {
        if class >= c {
            return Err(Error::InvalidArgument(format!("class {class} >= {c}")));
        }
        let mut p = vec![0.0; c];
        p[class] = 1.0;
        Self::from_probs(&p)
    }
}

fn check_arity(a: &ProbDist, b: &ProbDist) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
            context: "distribution arity",
        });
    }
    Ok(())
}

/// `π̄_k ∝ exp(mean_j log π̂_jk)`.
pub fn log_geometric_mean(dists: &[ProbDist]) -> Result<ProbDist> {
    let first = dists
        .first()
        .ok_or_else(|| Error::InvalidArgument("geometric mean of no distributions".into()))?;
    for d in dists {
        check_arity(first, d)?;
    }
    if dists.iter().all(|d| d.log_probs == first.log_probs) {
        return Ok(first.clone());
    }
    let k = dists.len() as f64;
    let mean: Vec<f64> = (0..first.len())
        .map(|c| dists.iter().map(|d| d.log_probs[c]).sum::<f64>() / k)
        .collect();
    Ok(ProbDist::from_log_weights(mean))
}

/// `Σ p_k (log p_k − log q_k)`; terms with `p_k = 0` (after exp) vanish.
/// Roundoff below zero is clamped.
pub fn kl(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    check_arity(p, q)?;
    let sum: f64 = p
        .log_probs
        .iter()
        .zip(&q.log_probs)
        .map(|(&lp, &lq)| {
            let w = lp.exp();
            if w == 0.0 {
                0.0
            } else {
                w * (lp - lq)
            }
        })
        .sum();
    Ok(sum.max(0.0))
}

/// `−Σ p_k log q_k`.
pub fn cross_entropy(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    check_arity(p, q)?;
    Ok(-p
        .log_probs
        .iter()
        .zip(&q.log_probs)
        .map(|(&lp, &lq)| {
            let w = lp.exp();
            if w == 0.0 {
                0.0
            } else {
                w * lq
            }
        })
        .sum::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition {
    pub risk: f64,
    pub bias: f64,
    pub variance: f64,
}

impl Decomposition {
    pub fn residual(&self) -> f64 {
        (self.risk - self.bias - self.variance).abs()
    }
}

pub fn decompose_point(pi: &ProbDist, predictions: &[ProbDist]) -> Result<Decomposition> {
    if pi.one_hot_class().is_none() {
        return Err(Error::InvalidArgument(
            "the decomposition identity needs a one-hot label".into(),
        ));
    }
    let center = log_geometric_mean(predictions)?;
    check_arity(pi, &center)?;
    let k = predictions.len() as f64;
    let mut risk = 0.0;
    let mut variance = 0.0;
    for p in predictions {
        risk += cross_entropy(pi, p)?;
        variance += kl(&center, p)?;
    }
    Ok(Decomposition {
        risk: risk / k,
        bias: kl(pi, &center)?,
        variance: variance / k,
    })
}

/// Test-set means of the decomposition for `K` models' logits.
///
/// `logits[j]` holds model `j`'s logits for every test row; `targets` must
/// be one-hot.
pub fn decompose_test_set(targets: &Array2<f64>, logits: &[Array2<f64>]) -> Result<Decomposition> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("no model outputs".into()));
    }
    let n = targets.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    for l in logits {
        if l.dim() != targets.dim() {
            return Err(Error::DimensionMismatch {
                expected: targets.ncols(),
                got: l.ncols(),
                context: "model outputs vs test targets",
            });
        }
    }
    let mut sum = Decomposition {
        risk: 0.0,
        bias: 0.0,
        variance: 0.0,
    };
    for i in 0..n {
        let pi =
            ProbDist::from_probs(targets.row(i).as_slice().ok_or_else(|| {
                Error::InvalidArgument("targets must be in standard layout".into())
            })?)?;
        let preds = logits
            .iter()
            .map(|l| ProbDist::from_logits(l.row(i)))
            .collect::<Result<Vec<_>>>()?;
        let d = decompose_point(&pi, &preds)?;
        sum.risk += d.risk;
        sum.bias += d.bias;
        sum.variance += d.variance;
    }
    let n = n as f64;
    Ok(Decomposition {
        risk: sum.risk / n,
        bias: sum.bias / n,
        variance: sum.variance / n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasVarianceRow {
    pub config_id: String,
    pub width: usize,
    pub k: usize,
    pub risk: f64,
    pub bias_kl: f64,
    pub variance: f64,
    /// `risk − variance`, the subtraction estimator of the bias.
    pub bias_subtraction: f64,
    /// `|risk − bias_kl − variance|`, equal to `|bias_kl − bias_subtraction|`.
    pub identity_residual: f64,
}

impl BiasVarianceRow {
    pub fn from_decomposition(config_id: String, width: usize, k: usize, d: Decomposition) -> Self {
        BiasVarianceRow {
            config_id,
            width,
            k,
            risk: d.risk,
            bias_kl: d.bias,
            variance: d.variance,
            bias_subtraction: d.risk - d.variance,
            identity_residual: d.residual(),
        }
    }
}

pub const BIASVAR_CSV_HEADER: &str =
    "config_id,width,k,risk,bias_kl,variance,bias_subtraction,identity_residual";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BiasVarianceReport {
    pub rows: Vec<BiasVarianceRow>,
}

impl BiasVarianceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(BIASVAR_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.config_id,
                r.width,
                r.k,
                format_float(r.risk),
                format_float(r.bias_kl),
                format_float(r.variance),
                format_float(r.bias_subtraction),
                format_float(r.identity_residual),
            ));
        }
        out
    }
}

/// One ensemble: `k` same-width networks trained on disjoint splits.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasVarianceConfig {
    pub config_id: String,
    pub width: usize,
    pub variant: Variant,
    pub pair_mode: PairMode,
    pub train: TrainConfig,
    pub k: usize,
    pub split_size: usize,
    /// Split `j` initializes from `mix(mix(seed, j), 0)` and trains with
    /// seed `mix(mix(seed, j), 1)`.
    pub seed: u64,
}

/// Trains one model per split and decomposes their predictions on `test`.
///
/// The splits come from `split_rng`, so ensembles of different widths can
/// share them. Split trainings run on the ambient rayon pool; results are
/// assembled in split order.
pub fn estimate_bias_variance(
    cfg: &BiasVarianceConfig,
    full_train: &ClassificationDataset,
    test: &ClassificationDataset,
    split_rng: &mut Rng,
) -> Result<BiasVarianceRow> {
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("need at least one split".into()));
    }
    if !test.is_one_hot() {
        return Err(Error::ModeMismatch(
            "bias-variance test labels must be one-hot".into(),
        ));
    }
    let blocks = split_indices(full_train.len(), cfg.k, cfg.split_size, split_rng)?;
    let eval_set = match cfg.variant {
        Variant::Standard => test.clone(),
        Variant::Concat => test.self_concat(),
    };
    let logits: Vec<Array2<f64>> = blocks
        .par_iter()
        .enumerate()
        .map(|(j, rows)| {
            let split = full_train.select(rows);
            let split_seed = mix(cfg.seed, j as u64);
            let mut train_cfg = cfg.train;
            train_cfg.seed = mix(split_seed, 1);
            let mut init_rng = Rng::new(mix(split_seed, 0));
            let source = match cfg.variant {
                Variant::Standard => TrainSource::Plain(&split),
                Variant::Concat => {
                    TrainSource::Concat(ConcatView::classification(&split, cfg.pair_mode)?)
                }
            };
            let model = init_mlp(
                source.input_dim(),
                cfg.width,
                split.class_count(),
                &mut init_rng,
            )?;
            let (model, _) = train(model, source, &train_cfg, &[])?;
            model.forward(eval_set.features.view())
        })
        .collect::<Result<_>>()?;
    let d = decompose_test_set(&test.targets, &logits)?;
    Ok(BiasVarianceRow::from_decomposition(
        cfg.config_id.clone(),
        cfg.width,
        cfg.k,
        d,
    ))
}
