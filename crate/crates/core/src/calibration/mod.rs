//! Empirical book profiles from snapshots and the four-parameter fit.

mod fit;
mod ingest;
mod synthetic;

pub use fit::{
    fit, model_density, stability_report, write_table, BookParams, FitConfig, FitResult, StartReport, TableRow,
    Weighting, TABLE_HEADER,
};
pub use ingest::{ingest_snapshots, BinningConfig, EmpiricalBookProfile, Side, SkipCounts, SnapshotRecord};
pub use synthetic::{synthetic_profile, synthetic_snapshots, write_snapshots_csv, SnapshotSpec};
