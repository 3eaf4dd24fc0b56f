//! Sweep configuration, runners and tabular output.

mod config;
mod record;
mod run;

pub use config::{DatasetKind, ExperimentKind, SweepConfig};
pub use record::*;
pub use run::{
    git_blob_hash, prepare_data, run_sweep, CellRecord, CellTrace, InputFile, Manifest,
    SweepOutput, TRACE_CSV_HEADER,
};
