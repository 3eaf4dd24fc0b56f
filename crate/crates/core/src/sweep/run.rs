use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{DatasetKind, ExperimentKind, SweepConfig};
use super::record::{
    format_float, summarize, to_csv, AxisName, CurvePoint, GroupField, Status, Variant,
};
use crate::augment::{ConcatView, SelfConcat};
use crate::biasvar::{
    estimate_bias_variance, BiasVarianceConfig, BiasVarianceReport, BiasVarianceRow,
};
use crate::datagen::{
    apply_label_noise, gen_mixture_classification, load_idx, standardize, ClassificationDataset,
    NoiseSpec,
};
use crate::error::{Error, Result};
use crate::linreg::{linreg_sample_sweep, LinregSweepSpec};
use crate::nnet::{init_mlp, param_count, train, TrainSource, TrainTrace};
use crate::rng::{mix, Rng};

// Stream indices under a trial seed.
const DATA_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const ENSEMBLE_STREAM: u64 = 4;
const SPLIT_STREAM: u64 = 5;

pub const TRACE_CSV_HEADER: &str =
    "experiment_id,variant,width,seed,epoch,train_loss,train_error,test_loss,test_error,wall_secs";

const ARCHITECTURE_NOTE: &str =
    "one-hidden-layer fully connected ReLU network; concatenated variant doubles the input width";
const MIXTURE_NOTE: &str = "desk-scale run: synthetic Gaussian mixture stands in for image data";

/// Outcome of one `(variant, width, seed)` cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRecord {
    pub variant: Variant,
    pub width: usize,
    pub seed: u64,
    /// Content hash of the (noisy) training set the cell used.
    pub data_hash: String,
    pub status: &'static str,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellTrace {
    pub experiment_id: String,
    pub variant: Variant,
    pub width: usize,
    pub seed: u64,
    pub trace: TrainTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: ExperimentKind,
    pub config: SweepConfig,
    pub trial_seeds: Vec<u64>,
    /// Git-style blob hash over the canonical config and every input file.
    pub input_hash: String,
    pub inputs: Vec<InputFile>,
    pub notes: Vec<&'static str>,
    pub cells: Vec<CellRecord>,
    pub failed_cells: usize,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub manifest: Manifest,
    /// Per-cell rows (empty for bias-variance runs).
    pub points: Vec<CurvePoint>,
    pub traces: Vec<CellTrace>,
    pub biasvar: Option<BiasVarianceReport>,
}

/// `sha256("blob <len>\0" + bytes)`, hex encoded.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

impl SweepOutput {
    pub fn failed_cells(&self) -> usize {
        self.manifest.failed_cells
    }

    /// Per-variant/axis median rows over successful cells.
    pub fn summary(&self) -> Result<Vec<CurvePoint>> {
        if self.points.is_empty() {
            return Ok(Vec::new());
        }
        let fields = [
            GroupField::ExperimentId,
            GroupField::Variant,
            GroupField::AxisName,
            GroupField::AxisValue,
        ];
        Ok(summarize(&self.points, &fields)?
            .iter()
            .map(|r| r.median_point())
            .collect())
    }

    pub fn traces_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        for t in &self.traces {
            for r in &t.trace.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    t.experiment_id,
                    t.variant.as_str(),
                    t.width,
                    t.seed,
                    r.epoch,
                    format_float(r.train_loss),
                    opt(r.train_error),
                    opt(r.test_loss()),
                    opt(r.test_error()),
                    format_float(r.wall_secs),
                ));
            }
        }
        out
    }

    /// Writes `manifest.json` plus `curve.csv`/`summary.csv`/`traces.csv`
    /// or `biasvar.csv` into `dir`, returning the paths written.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<(&str, String)> = Vec::new();
        if let Some(report) = &self.biasvar {
            files.push(("biasvar.csv", report.to_csv()));
        } else {
            files.push(("curve.csv", to_csv(&self.points)));
            if self.manifest.experiment != ExperimentKind::LinregSample {
                files.push(("summary.csv", to_csv(&self.summary()?)));
            }
            if !self.traces.is_empty() {
                files.push(("traces.csv", self.traces_csv()));
            }
        }
        files.push((
            "manifest.json",
            serde_json::to_string_pretty(&self.manifest)? + "\n",
        ));
        let mut written = Vec::new();
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn input_files(cfg: &SweepConfig) -> Result<Vec<InputFile>> {
    if cfg.experiment == ExperimentKind::LinregSample || cfg.dataset != DatasetKind::Idx {
        return Ok(Vec::new());
    }
    [
        &cfg.train_images,
        &cfg.train_labels,
        &cfg.test_images,
        &cfg.test_labels,
    ]
    .into_iter()
    .flatten()
    .map(|p| {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        let mut h = Sha256::new();
        h.update(&bytes);
        Ok(InputFile {
            path: p.clone(),
            sha256: hex::encode(h.finalize()),
        })
    })
    .collect()
}

fn input_hash(cfg: &SweepConfig, inputs: &[InputFile]) -> String {
    let mut blob = serde_json::to_vec(cfg).expect("config serializes");
    for f in inputs {
        blob.push(b'\n');
        blob.extend_from_slice(f.sha256.as_bytes());
    }
    git_blob_hash(&blob)
}

/// Training and test sets for one trial: base data, then label noise on
/// the training rows only, then optional standardization.
///
/// Mixture data draws `n_train + n_test` rows from one stream and splits
/// them in order. IDX data takes a seeded `n_train`-row subset of the
/// training file and the first `n_test` rows of the test file.
pub fn prepare_data(
    cfg: &SweepConfig,
    trial_seed: u64,
    idx: Option<&(ClassificationDataset, ClassificationDataset)>,
) -> Result<(ClassificationDataset, ClassificationDataset)> {
    let mut rng = Rng::new(mix(trial_seed, DATA_STREAM));
    let (train_set, test_set) = match (cfg.dataset, idx) {
        (DatasetKind::Mixture, _) => {
            let all = gen_mixture_classification(
                cfg.n_train + cfg.n_test,
                cfg.dim,
                cfg.classes,
                cfg.separation,
                &mut rng,
            )?;
            let train_rows: Vec<usize> = (0..cfg.n_train).collect();
            let test_rows: Vec<usize> = (cfg.n_train..cfg.n_train + cfg.n_test).collect();
            (all.select(&train_rows), all.select(&test_rows))
        }
        (DatasetKind::Idx, Some((full_train, full_test))) => {
            if cfg.n_train > full_train.len() {
                return Err(Error::Config(format!(
                    "n_train {} exceeds the {} training images",
                    cfg.n_train,
                    full_train.len()
                )));
            }
            let rows = if cfg.n_train == full_train.len() {
                (0..cfg.n_train).collect()
            } else {
                rng.choose_distinct(full_train.len(), cfg.n_train)
            };
            let test_rows: Vec<usize> = (0..cfg.n_test.min(full_test.len())).collect();
            (full_train.select(&rows), full_test.select(&test_rows))
        }
        (DatasetKind::Idx, None) => return Err(Error::Config("IDX data not loaded".into())),
    };
    let noisy = apply_label_noise(
        &train_set,
        NoiseSpec::new(cfg.label_noise, mix(trial_seed, NOISE_STREAM))?,
    )?;
    Ok(if cfg.standardize {
        standardize(&noisy, &test_set)
    } else {
        (noisy, test_set)
    })
}

fn load_idx_pair(
    cfg: &SweepConfig,
) -> Result<Option<(ClassificationDataset, ClassificationDataset)>> {
    if cfg.dataset != DatasetKind::Idx || cfg.experiment == ExperimentKind::LinregSample {
        return Ok(None);
    }
    let need = |p: &Option<PathBuf>, key: &str| {
        p.clone()
            .ok_or_else(|| Error::Config(format!("dataset idx needs {key}")))
    };
    let (train_set, _) = load_idx(
        need(&cfg.train_images, "train_images")?,
        need(&cfg.train_labels, "train_labels")?,
        None,
    )?;
    let (test_set, _) = load_idx(
        need(&cfg.test_images, "test_images")?,
        need(&cfg.test_labels, "test_labels")?,
        Some(train_set.class_count()),
    )?;
    if train_set.dim() != test_set.dim() {
        return Err(Error::DimensionMismatch {
            expected: train_set.dim(),
            got: test_set.dim(),
            context: "IDX test image size",
        });
    }
    Ok(Some((train_set, test_set)))
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    variant: Variant,
    width: usize,
    trial: usize,
}

struct TrialData {
    seed: u64,
    train: ClassificationDataset,
    test: ClassificationDataset,
    hash: String,
}

fn cells(cfg: &SweepConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &variant in &cfg.variants {
        for &width in &cfg.widths {
            for trial in 0..cfg.num_seeds {
                out.push(Cell {
                    variant,
                    width,
                    trial,
                });
            }
        }
    }
    out
}

fn train_cell(cfg: &SweepConfig, cell: Cell, data: &TrialData) -> Result<(TrainTrace, usize)> {
    let source = match cell.variant {
        Variant::Standard => TrainSource::Plain(&data.train),
        Variant::Concat => {
            TrainSource::Concat(ConcatView::classification(&data.train, cfg.pair_mode())?)
        }
    };
    let test = match cell.variant {
        Variant::Standard => data.test.clone(),
        Variant::Concat => data.test.self_concat(),
    };
    let d_in = source.input_dim();
    let c = data.train.class_count();
    let mut init_rng = Rng::new(mix(mix(data.seed, INIT_STREAM), cell.width as u64));
    let model = init_mlp(d_in, cell.width, c, &mut init_rng)?;
    let train_cfg = cfg.train_config(mix(mix(data.seed, TRAIN_STREAM), cell.width as u64));
    let (_, trace) = train(model, source, &train_cfg, &[&test])?;
    Ok((trace, param_count(d_in, cell.width, c)))
}

fn cell_record(cell: Cell, data: &TrialData, err: Option<&Error>) -> CellRecord {
    CellRecord {
        variant: cell.variant,
        width: cell.width,
        seed: data.seed,
        data_hash: data.hash.clone(),
        status: if err.is_some() {
            Status::Failed.as_str()
        } else {
            Status::Ok.as_str()
        },
        error: err.map(|e| e.to_string()),
    }
}

fn run_networks(
    cfg: &SweepConfig,
    trials: &[TrialData],
) -> (Vec<CurvePoint>, Vec<CellTrace>, Vec<CellRecord>) {
    let id = cfg.id();
    let n = cfg.n_train as f64;
    let results: Vec<(Cell, Result<(TrainTrace, usize)>)> = cells(cfg)
        .into_par_iter()
        .map(|cell| (cell, train_cell(cfg, cell, &trials[cell.trial])))
        .collect();

    let mut points = Vec::new();
    let mut traces = Vec::new();
    let mut records = Vec::new();
    for (cell, result) in results {
        let data = &trials[cell.trial];
        let exp_id = match cfg.experiment {
            ExperimentKind::Epochwise => format!("{id}-w{}", cell.width),
            _ => id.clone(),
        };
        let base = |axis: AxisName, value: f64| {
            let mut p = CurvePoint::new(exp_id.clone(), cell.variant, axis, value);
            p.seed = Some(data.seed);
            p
        };
        match result {
            Ok((trace, params)) => {
                let fill = |mut p: CurvePoint, row: &crate::nnet::TraceRow| {
                    p.train_loss = Some(row.train_loss);
                    p.train_error = row.train_error;
                    p.test_loss = row.test_loss();
                    p.test_error = row.test_error();
                    p.params = Some(params);
                    p.param_sample_ratio = Some(params as f64 / n);
                    p
                };
                match cfg.experiment {
                    ExperimentKind::Epochwise => {
                        for row in &trace.rows {
                            points.push(fill(base(AxisName::Epoch, row.epoch as f64), row));
                        }
                    }
                    _ => {
                        if let Some(row) = trace.last() {
                            points.push(fill(base(AxisName::HiddenUnits, cell.width as f64), row));
                        }
                    }
                }
                records.push(cell_record(cell, data, None));
                traces.push(CellTrace {
                    experiment_id: exp_id,
                    variant: cell.variant,
                    width: cell.width,
                    seed: data.seed,
                    trace,
                });
            }
            Err(e) => {
                let axis = match cfg.experiment {
                    ExperimentKind::Epochwise => (AxisName::Epoch, cfg.epochs as f64),
                    _ => (AxisName::HiddenUnits, cell.width as f64),
                };
                let mut p = base(axis.0, axis.1).failed();
                let d_in = match cell.variant {
                    Variant::Standard => data.train.dim(),
                    Variant::Concat => 2 * data.train.dim(),
                };
                let params = param_count(d_in, cell.width, data.train.class_count());
                p.params = Some(params);
                p.param_sample_ratio = Some(params as f64 / n);
                points.push(p);
                records.push(cell_record(cell, data, Some(&e)));
            }
        }
    }
    (points, traces, records)
}

fn run_biasvar(cfg: &SweepConfig, trials: &[TrialData]) -> (BiasVarianceReport, Vec<CellRecord>) {
    let id = cfg.id();
    let results: Vec<(Cell, Result<BiasVarianceRow>)> = cells(cfg)
        .into_par_iter()
        .map(|cell| {
            let data = &trials[cell.trial];
            let bv = BiasVarianceConfig {
                config_id: format!("{id}-{}-s{}", cell.variant.as_str(), cell.trial),
                width: cell.width,
                variant: cell.variant,
                pair_mode: cfg.pair_mode(),
                train: cfg.train_config(0),
                k: cfg.splits,
                split_size: cfg.split_size,
                seed: mix(mix(data.seed, ENSEMBLE_STREAM), cell.width as u64),
            };
            // Same splits for every width and variant of a trial.
            let mut split_rng = Rng::new(mix(data.seed, SPLIT_STREAM));
            (
                cell,
                estimate_bias_variance(&bv, &data.train, &data.test, &mut split_rng),
            )
        })
        .collect();
    let mut report = BiasVarianceReport::default();
    let mut records = Vec::new();
    for (cell, result) in results {
        let data = &trials[cell.trial];
        match result {
            Ok(row) => {
                report.rows.push(row);
                records.push(cell_record(cell, data, None));
            }
            Err(e) => records.push(cell_record(cell, data, Some(&e))),
        }
    }
    (report, records)
}

/// Runs the configured experiment on a dedicated pool of `threads` workers
/// (0 means one per core). Results are assembled in canonical cell order,
/// so outputs other than wall times do not depend on the thread count.
/// A cell that fails becomes a `failed` row; the sweep carries on.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let inputs = input_files(cfg)?;
    let trial_seeds = cfg.trial_seeds();
    let mut manifest = Manifest {
        tool: "ddlab",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment,
        config: cfg.clone(),
        trial_seeds: trial_seeds.clone(),
        input_hash: input_hash(cfg, &inputs),
        inputs,
        notes: Vec::new(),
        cells: Vec::new(),
        failed_cells: 0,
    };

    pool.install(|| {
        if cfg.experiment == ExperimentKind::LinregSample {
            let spec = LinregSweepSpec {
                experiment_id: cfg.id(),
                d: cfg.dim,
                sigma: cfg.sigma,
                n_grid: cfg.n_grid.clone(),
                seeds: trial_seeds,
                n_test: cfg.n_test,
                memory_budget: cfg.memory_budget_bytes as u128,
            };
            let points = linreg_sample_sweep(&spec, &cfg.variants)?;
            return Ok(SweepOutput {
                manifest,
                points,
                traces: Vec::new(),
                biasvar: None,
            });
        }

        manifest.notes.push(ARCHITECTURE_NOTE);
        if cfg.dataset == DatasetKind::Mixture {
            manifest.notes.push(MIXTURE_NOTE);
        }
        let idx = load_idx_pair(cfg)?;
        let trials: Vec<TrialData> = trial_seeds
            .iter()
            .map(|&seed| {
                let (train, test) = prepare_data(cfg, seed, idx.as_ref())?;
                let hash = train.content_hash();
                Ok(TrialData {
                    seed,
                    train,
                    test,
                    hash,
                })
            })
            .collect::<Result<_>>()?;

        if cfg.experiment == ExperimentKind::Biasvar {
            let (report, records) = run_biasvar(cfg, &trials);
            manifest.failed_cells = records.iter().filter(|r| r.error.is_some()).count();
            manifest.cells = records;
            return Ok(SweepOutput {
                manifest,
                points: Vec::new(),
                traces: Vec::new(),
                biasvar: Some(report),
            });
        }
        let (points, traces, records) = run_networks(cfg, &trials);
        manifest.failed_cells = records.iter().filter(|r| r.error.is_some()).count();
        manifest.cells = records;
        Ok(SweepOutput {
            manifest,
            points,
            traces,
            biasvar: None,
        })
    })
}
