//! Curve records, CSV emission and grouped summaries.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "experiment_id,variant,axis_name,axis_value,train_loss,train_error,test_loss,test_error,seed,params,param_sample_ratio,status";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Standard,
    Concat,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Concat => "concat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AxisName {
    HiddenUnits,
    Params,
    Samples,
    Epoch,
}

impl AxisName {
    pub fn as_str(self) -> &'static str {
        match self {
            AxisName::HiddenUnits => "hidden_units",
            AxisName::Params => "params",
            AxisName::Samples => "samples",
            AxisName::Epoch => "epoch",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Ok,
    /// Aggregate over seeds.
    Median,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Median => "median",
            Status::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub experiment_id: String,
    pub variant: Variant,
    pub axis_name: AxisName,
    pub axis_value: f64,
    pub train_loss: Option<f64>,
    pub train_error: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_error: Option<f64>,
    pub seed: Option<u64>,
    pub params: Option<usize>,
    pub param_sample_ratio: Option<f64>,
    pub status: Status,
}

impl CurvePoint {
    pub fn new(
        experiment_id: impl Into<String>,
        variant: Variant,
        axis_name: AxisName,
        axis_value: f64,
    ) -> Self {
        CurvePoint {
            experiment_id: experiment_id.into(),
            variant,
            axis_name,
            axis_value,
            train_loss: None,
            train_error: None,
            test_loss: None,
            test_error: None,
            seed: None,
            params: None,
            param_sample_ratio: None,
            status: Status::Ok,
        }
    }

    pub fn failed(mut self) -> Self {
        self.status = Status::Failed;
        self
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::TrainLoss => self.train_loss,
            Metric::TrainError => self.train_error,
            Metric::TestLoss => self.test_loss,
            Metric::TestError => self.test_error,
        }
    }
}

/// Shortest-exact float text with 17 significant digits, e.g.
/// `1.0000000000000000e-2`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn csv_row(p: &CurvePoint) -> String {
    let mut s = String::new();
    write!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        p.experiment_id,
        p.variant.as_str(),
        p.axis_name.as_str(),
        format_float(p.axis_value),
        opt_float(p.train_loss),
        opt_float(p.train_error),
        opt_float(p.test_loss),
        opt_float(p.test_error),
        p.seed.map(|s| s.to_string()).unwrap_or_default(),
        p.params.map(|s| s.to_string()).unwrap_or_default(),
        opt_float(p.param_sample_ratio),
        p.status.as_str(),
    )
    .expect("writing to a String");
    s
}

pub fn to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::with_capacity(64 * (points.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&csv_row(p));
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    TrainLoss,
    TrainError,
    TestLoss,
    TestError,
}

pub const METRICS: [Metric; 4] = [
    Metric::TrainLoss,
    Metric::TrainError,
    Metric::TestLoss,
    Metric::TestError,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupField {
    ExperimentId,
    Variant,
    AxisName,
    AxisValue,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KeyPart {
    Text(String),
    Number(f64),
}

impl KeyPart {
    fn cmp_total(&self, other: &Self) -> Ordering {
        match (self, other) {
            (KeyPart::Text(a), KeyPart::Text(b)) => a.cmp(b),
            (KeyPart::Number(a), KeyPart::Number(b)) => a.total_cmp(b),
            (KeyPart::Text(_), KeyPart::Number(_)) => Ordering::Less,
            (KeyPart::Number(_), KeyPart::Text(_)) => Ordering::Greater,
        }
    }
}

fn key_of(p: &CurvePoint, fields: &[GroupField]) -> Vec<KeyPart> {
    fields
        .iter()
        .map(|f| match f {
            GroupField::ExperimentId => KeyPart::Text(p.experiment_id.clone()),
            GroupField::Variant => KeyPart::Text(p.variant.as_str().to_string()),
            GroupField::AxisName => KeyPart::Text(p.axis_name.as_str().to_string()),
            GroupField::AxisValue => KeyPart::Number(p.axis_value),
        })
        .collect()
}

fn cmp_keys(a: &[KeyPart], b: &[KeyPart]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.cmp_total(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Median with the lower-middle element for even counts.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

pub fn stats(values: &[f64]) -> Option<Stats> {
    let median = lower_median(values)?;
    Some(Stats {
        count: values.len(),
        median,
        mean: values.iter().sum::<f64>() / values.len() as f64,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub key: Vec<KeyPart>,
    /// Rows in the group, failed rows included.
    pub rows: usize,
    pub failed: usize,
    /// Indexed like [`METRICS`]; `None` when no successful row has the metric.
    pub metrics: [Option<Stats>; 4],
    /// First member, used to fill non-key columns of median rows.
    pub exemplar: CurvePoint,
}

impl AggregateRow {
    pub fn stat(&self, m: Metric) -> Option<Stats> {
        self.metrics[METRICS.iter().position(|&x| x == m).expect("known metric")]
    }

    /// A median curve point for this group.
    pub fn median_point(&self) -> CurvePoint {
        let mut p = self.exemplar.clone();
        p.train_loss = self.stat(Metric::TrainLoss).map(|s| s.median);
        p.train_error = self.stat(Metric::TrainError).map(|s| s.median);
        p.test_loss = self.stat(Metric::TestLoss).map(|s| s.median);
        p.test_error = self.stat(Metric::TestError).map(|s| s.median);
        p.seed = None;
        p.status = if self.failed == self.rows {
            Status::Failed
        } else {
            Status::Median
        };
        p
    }
}

/// Groups points by `fields` (stable ascending key order) and aggregates
/// every metric over the successful (`Ok`) rows of each group.
pub fn summarize(points: &[CurvePoint], fields: &[GroupField]) -> Result<Vec<AggregateRow>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("summarize: no points".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    let keys: Vec<Vec<KeyPart>> = points.iter().map(|p| key_of(p, fields)).collect();
    order.sort_by(|&a, &b| cmp_keys(&keys[a], &keys[b]));

    let mut out = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && cmp_keys(&keys[order[start]], &keys[order[end]]).is_eq() {
            end += 1;
        }
        let members: Vec<&CurvePoint> = order[start..end].iter().map(|&i| &points[i]).collect();
        let ok: Vec<&&CurvePoint> = members.iter().filter(|p| p.status == Status::Ok).collect();
        let metrics = METRICS.map(|m| {
            let vals: Vec<f64> = ok.iter().filter_map(|p| p.metric(m)).collect();
            stats(&vals)
        });
        out.push(AggregateRow {
            key: keys[order[start]].clone(),
            rows: members.len(),
            failed: members.len() - ok.len(),
            metrics,
            exemplar: members[0].clone(),
        });
        start = end;
    }
    Ok(out)
}
