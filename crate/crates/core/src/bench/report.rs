use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{ExperimentReport, RunResult};
use super::summary::{summarize, SummaryTable};
use super::sweeps::{SubsamplePoint, TruncationReport};
use crate::{Error, Result};

/// Which files [`emit_report`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    /// `summary.csv` and `comparisons.csv`.
    Csv,
    /// `results.json`.
    Json,
    #[default]
    Both,
}

pub const SUMMARY_COLUMNS: [&str; 5] = ["method", "estimator", "mean_abs_err", "std_err", "n_runs"];

/// Raw results with the configuration that produced them. Summarizing a
/// reloaded bundle gives back the original summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub config: ExperimentConfig,
    pub results: Vec<RunResult>,
}

impl ResultsBundle {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn summarize(&self) -> SummaryTable {
        summarize(&self.config, &self.results)
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Misuse(format!("csv buffer: {e}")))
}

/// Creates `dir` and writes every file, or writes nothing if any content
/// failed to build. Returns the written paths.
fn write_all(dir: &Path, files: Vec<(&str, Vec<u8>)>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(table: &SummaryTable) -> Result<Vec<u8>> {
    csv_bytes(
        &SUMMARY_COLUMNS,
        table.rows.iter().map(|r| {
            vec![
                r.method.clone(),
                r.estimator.clone(),
                r.mean_abs_err.to_string(),
                r.std_err.to_string(),
                r.n_runs.to_string(),
            ]
        }),
    )
}

pub fn comparisons_csv(table: &SummaryTable) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "method",
            "baseline",
            "estimator",
            "subset",
            "percent_improved",
            "mean_improvement",
            "mean_degradation",
            "n",
            "good_percent_improved",
            "good_mean_improvement",
            "good_mean_degradation",
            "good_n",
            "bad_percent_improved",
            "bad_mean_improvement",
            "bad_mean_degradation",
            "bad_n",
        ],
        table.comparisons.iter().map(|c| {
            let mut row = vec![
                c.method.clone(),
                c.baseline.clone(),
                c.choice.as_str().to_string(),
                c.subset.as_str().to_string(),
            ];
            for s in [c.stats, c.stratified.good_baseline, c.stratified.bad_baseline] {
                row.extend([
                    s.percent_improved.to_string(),
                    s.mean_improvement.to_string(),
                    s.mean_degradation.to_string(),
                    s.n.to_string(),
                ]);
            }
            row
        }),
    )
}

/// Writes the summary CSV, the method comparisons and the raw results of
/// `report` to `out_dir`. Nothing is written for an empty method list or
/// empty results.
pub fn emit_report(report: &ExperimentReport, out_dir: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<PathBuf>> {
    if report.config.methods.is_empty() {
        return Err(Error::Config("cannot report on an empty method list".into()));
    }
    if report.results.is_empty() {
        return Err(Error::Config("cannot report on empty results".into()));
    }
    let mut files = Vec::new();
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        files.push(("summary.csv", summary_csv(&report.summary)?));
        files.push(("comparisons.csv", comparisons_csv(&report.summary)?));
    }
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let bundle = ResultsBundle {
            config: report.config.clone(),
            results: report.results.clone(),
        };
        files.push(("results.json", serde_json::to_vec_pretty(&bundle)?));
    }
    write_all(out_dir.as_ref(), files)
}

/// `subsample_long.csv` (one row per rate, method and estimator) and
/// `subsample.json` with every raw result.
pub fn emit_subsample(points: &[SubsamplePoint], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if points.is_empty() {
        return Err(Error::Config("no subsampling results to report".into()));
    }
    let long = csv_bytes(
        &["rate", "method", "estimator", "mean_abs_err", "std_err", "n_runs"],
        points.iter().flat_map(|p| {
            p.summary.rows.iter().map(move |r| {
                vec![
                    p.rate.to_string(),
                    r.method.clone(),
                    r.estimator.clone(),
                    r.mean_abs_err.to_string(),
                    r.std_err.to_string(),
                    r.n_runs.to_string(),
                ]
            })
        }),
    )?;
    let json = serde_json::to_vec_pretty(points)?;
    write_all(
        out_dir.as_ref(),
        vec![("subsample_long.csv", long), ("subsample.json", json)],
    )
}

fn bound_label(lo: f64, hi: f64) -> String {
    format!("[{lo}, {hi}]")
}

/// `truncation_table.csv` in the wide layout, `truncation_long.csv` with
/// one row per bound, method and estimator, and `truncation.json`.
pub fn emit_truncation(report: &TruncationReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if report.bounds.is_empty() {
        return Err(Error::Config("no truncation results to report".into()));
    }
    let mut header = vec![
        "estimator_group".to_string(),
        "method".to_string(),
        "estimator".to_string(),
    ];
    header.extend(report.bounds.iter().map(|b| bound_label(b.low(), b.high())));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let wide = csv_bytes(
        &header_refs,
        report.table().into_iter().map(|row| {
            let mut cells = vec![
                format!("{}{}", row.choice.as_str(), row.subset.suffix()),
                row.method,
                row.estimator,
            ];
            cells.extend(row.mean_abs_err.into_iter().map(opt));
            cells
        }),
    )?;
    let long = csv_bytes(
        &[
            "trim_low",
            "trim_high",
            "method",
            "estimator",
            "mean_abs_err",
            "std_err",
            "n_runs",
        ],
        report.bounds.iter().zip(&report.summaries).flat_map(|(b, s)| {
            s.rows.iter().map(move |r| {
                vec![
                    b.low().to_string(),
                    b.high().to_string(),
                    r.method.clone(),
                    r.estimator.clone(),
                    r.mean_abs_err.to_string(),
                    r.std_err.to_string(),
                    r.n_runs.to_string(),
                ]
            })
        }),
    )?;
    let json = serde_json::to_vec_pretty(report)?;
    write_all(
        out_dir.as_ref(),
        vec![
            ("truncation_table.csv", wide),
            ("truncation_long.csv", long),
            ("truncation.json", json),
        ],
    )
}
