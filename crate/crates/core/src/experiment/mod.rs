//! Config-hashed experiment runs: data, search, discretization,
//! evaluation, artifacts and reports.

mod config;
mod report;
mod run;

pub use config::{DataConfig, ExperimentConfig, RunConfig, HASH_LEN};
pub use report::{
    mean_std, render, report, summarize, trajectory_csv, MetricReport, MetricRow, ReportOutput, SeedFailure,
    TrajectoryPoint, REPORT_FILE, TRAJECTORY_FILE,
};
pub use run::{
    run_experiment, run_matrix, Experiment, MatrixCell, ModelResult, SeedMetrics, ARCHITECTURE_FILE, CONFIG_FILE,
    DATASET_FILE, HISTORY_FILE, METRICS_FILE, NETWORK_FILE, SUPERNET_FILE, TRACE_FILE,
};
