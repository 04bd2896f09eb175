use serde::{Deserialize, Serialize};

use super::config::{EstimatorChoice, ExperimentConfig, Method};
use super::run::{EvalSubset, RunResult};
use crate::{Error, Result};

/// Mean absolute error of one method and estimator over the replications
/// that were not flagged for poor overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub estimator: String,
    pub choice: EstimatorChoice,
    pub subset: EvalSubset,
    /// Sum over replications in ascending order, divided by `n_runs`.
    pub mean_abs_err: f64,
    /// Sample standard deviation over `sqrt(n_runs)`; 0 for a single run.
    pub std_err: f64,
    pub n_runs: usize,
}

/// Improvement of a method over a baseline across paired datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementStats {
    /// Share of datasets where the method's error is strictly lower, in
    /// percent.
    pub percent_improved: f64,
    /// Mean error reduction over the improved datasets; 0 if none.
    pub mean_improvement: f64,
    /// Mean error increase over the degraded datasets; 0 if none.
    pub mean_degradation: f64,
    pub n: usize,
}

/// Split of the paired datasets by the baseline's own error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifiedStats {
    /// Baseline error below the threshold.
    pub good_baseline: ImprovementStats,
    /// Baseline error at or above the threshold.
    pub bad_baseline: ImprovementStats,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub baseline: String,
    pub choice: EstimatorChoice,
    pub subset: EvalSubset,
    pub stats: ImprovementStats,
    pub stratified: StratifiedStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub comparisons: Vec<ComparisonRow>,
    /// Replications left out because of the overlap flag.
    pub excluded_replications: Vec<usize>,
}

impl SummaryTable {
    pub fn row(&self, method: &str, estimator: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.estimator == estimator)
    }

    pub fn row_for(&self, method: Method, choice: EstimatorChoice, subset: EvalSubset) -> Option<&SummaryRow> {
        let label = method.label();
        self.rows
            .iter()
            .find(|r| r.method == label && r.choice == choice && r.subset == subset)
    }
}

/// Threshold on the baseline's error separating good from bad initial
/// estimates.
pub const GOOD_BASELINE_THRESHOLD: f64 = 1.0;

/// `(mean, standard error)` of `values`, summed in order.
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn check_aligned(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "misaligned replication sets: {} vs {} results",
            a.len(),
            b.len()
        )))
    }
}

/// Compares errors `a` of a method with errors `b` of the baseline on the
/// same datasets. Ties count as neither improved nor degraded.
pub fn compare_methods(a: &[f64], b: &[f64]) -> Result<ImprovementStats> {
    check_aligned(a, b)?;
    let (mut up, mut n_up, mut down, mut n_down) = (0.0, 0usize, 0.0, 0usize);
    for (&ea, &eb) in a.iter().zip(b) {
        if ea < eb {
            up += eb - ea;
            n_up += 1;
        } else if ea > eb {
            down += ea - eb;
            n_down += 1;
        }
    }
    let n = a.len();
    Ok(ImprovementStats {
        percent_improved: if n == 0 { 0.0 } else { 100.0 * n_up as f64 / n as f64 },
        mean_improvement: if n_up == 0 { 0.0 } else { up / n_up as f64 },
        mean_degradation: if n_down == 0 { 0.0 } else { down / n_down as f64 },
        n,
    })
}

/// [`compare_methods`] separately on datasets where the baseline error is
/// below `threshold` and where it is not.
pub fn compare_methods_stratified(a: &[f64], b: &[f64], threshold: f64) -> Result<StratifiedStats> {
    check_aligned(a, b)?;
    let (mut ga, mut gb, mut ba, mut bb) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (&ea, &eb) in a.iter().zip(b) {
        if eb < threshold {
            ga.push(ea);
            gb.push(eb);
        } else {
            ba.push(ea);
            bb.push(eb);
        }
    }
    Ok(StratifiedStats {
        good_baseline: compare_methods(&ga, &gb)?,
        bad_baseline: compare_methods(&ba, &bb)?,
        threshold,
    })
}

fn subsets_present(results: &[RunResult]) -> Vec<EvalSubset> {
    let mut out = Vec::new();
    for s in [EvalSubset::All, EvalSubset::In, EvalSubset::Out] {
        if results.iter().any(|r| r.estimates.iter().any(|e| e.subset == s)) {
            out.push(s);
        }
    }
    out
}

/// Aggregates results that passed the overlap check. Rows follow the
/// method order of `config`, then its estimator order, then subsets.
pub fn summarize(config: &ExperimentConfig, results: &[RunResult]) -> SummaryTable {
    let mut kept: Vec<&RunResult> = results.iter().filter(|r| !r.overlap_flag).collect();
    kept.sort_by_key(|r| r.replication);
    let mut excluded: Vec<usize> = results
        .iter()
        .filter(|r| r.overlap_flag)
        .map(|r| r.replication)
        .collect();
    excluded.sort_unstable();
    excluded.dedup();
    let subsets = subsets_present(results);

    let mut rows = Vec::new();
    for &method in &config.methods {
        for &choice in &config.estimators {
            for &subset in &subsets {
                let mut label = None;
                let errs: Vec<f64> = kept
                    .iter()
                    .filter(|r| r.method == method)
                    .filter_map(|r| r.entry(choice, subset))
                    .filter_map(|e| {
                        label.get_or_insert_with(|| e.estimator.clone());
                        e.abs_error
                    })
                    .collect();
                if errs.is_empty() {
                    continue;
                }
                let (mean, se) = mean_and_std_err(&errs);
                rows.push(SummaryRow {
                    method: method.label(),
                    estimator: label.expect("at least one entry"),
                    choice,
                    subset,
                    mean_abs_err: mean,
                    std_err: se,
                    n_runs: errs.len(),
                });
            }
        }
    }

    let baseline = config.baseline_method();
    let mut comparisons = Vec::new();
    for &method in &config.methods {
        for &choice in &config.estimators {
            for &subset in &subsets {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for r in kept.iter().filter(|r| r.method == method) {
                    let base = kept
                        .iter()
                        .find(|x| x.method == baseline && x.replication == r.replication);
                    if let (Some(ea), Some(eb)) = (
                        r.abs_error(choice, subset),
                        base.and_then(|x| x.abs_error(choice, subset)),
                    ) {
                        a.push(ea);
                        b.push(eb);
                    }
                }
                if a.is_empty() {
                    continue;
                }
                comparisons.push(ComparisonRow {
                    method: method.label(),
                    baseline: baseline.label(),
                    choice,
                    subset,
                    stats: compare_methods(&a, &b).expect("paired"),
                    stratified: compare_methods_stratified(&a, &b, GOOD_BASELINE_THRESHOLD).expect("paired"),
                });
            }
        }
    }
    SummaryTable {
        rows,
        comparisons,
        excluded_replications: excluded,
    }
}
