//! Replicated experiments: method grids over generated or loaded datasets,
//! error summaries, method comparisons, the subsampling and truncation
//! sweeps, and report files.

mod config;
mod report;
mod run;
mod summary;
mod sweeps;

pub use config::{DataSource, EstimatorChoice, ExperimentConfig, Method, SplitProportions};
pub use report::{
    comparisons_csv, emit_report, emit_subsample, emit_truncation, summary_csv, ReportFormat, ResultsBundle,
    SUMMARY_COLUMNS,
};
pub use run::{
    replication_data, replication_seed, run_experiment, run_experiment_on, EstimateEntry, EvalSubset, ExperimentReport,
    NaiveEstimate, RunResult, DATA_STREAM, MODEL_STREAM, SPLIT_STREAM, SUBSAMPLE_STREAM,
};
pub use summary::{
    compare_methods, compare_methods_stratified, mean_and_std_err, summarize, ComparisonRow, ImprovementStats,
    StratifiedStats, SummaryRow, SummaryTable, GOOD_BASELINE_THRESHOLD,
};
pub use sweeps::{
    default_truncation_levels, subsample_rows, subsample_sweep, truncation_sweep, SubsamplePoint, TruncationReport,
    TruncationRow, MIN_SUBSAMPLE_ROWS,
};
