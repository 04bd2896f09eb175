use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EstimatorChoice, ExperimentConfig};
use super::run::{
    prepare, replication_data, replication_seed, run_replication, EvalSubset, RunResult, SUBSAMPLE_STREAM,
};
use super::summary::{summarize, SummaryRow, SummaryTable};
use crate::estimators::TrimBounds;
use crate::nncore::{derive_seed, SeededRng};
use crate::{Error, Result};

/// Smallest subsample a sweep will train on.
pub const MIN_SUBSAMPLE_ROWS: usize = 50;

/// Results of the full experiment on a subsample of every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePoint {
    pub rate: f64,
    pub n_rows: Vec<usize>,
    pub results: Vec<RunResult>,
    pub summary: SummaryTable,
}

/// Rows kept at `rate`: the first `round(rate * n)` entries of one fixed
/// permutation per replication, sorted. Smaller rates therefore take
/// subsets of larger ones, and rate 1 keeps every row in its original
/// order.
pub fn subsample_rows(n: usize, rate: f64, replication_seed: u64) -> Result<Vec<usize>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Config(format!("subsample rate must lie in (0, 1], got {rate}")));
    }
    let m = (rate * n as f64).round() as usize;
    if m < MIN_SUBSAMPLE_ROWS {
        return Err(Error::Config(format!(
            "rate {rate} keeps {m} of {n} rows; at least {MIN_SUBSAMPLE_ROWS} are needed"
        )));
    }
    let perm = SeededRng::new(derive_seed(replication_seed, SUBSAMPLE_STREAM)).permutation(n);
    let mut rows = perm[..m].to_vec();
    rows.sort_unstable();
    Ok(rows)
}

/// Reruns the experiment at each subsampling rate. At rate 1 the results
/// equal those of `run_experiment` exactly.
pub fn subsample_sweep(config: &ExperimentConfig, rates: &[f64]) -> Result<Vec<SubsamplePoint>> {
    config.validate()?;
    if rates.is_empty() {
        return Err(Error::Config("no subsampling rates given".into()));
    }
    let per_rep: Vec<Result<Vec<(usize, Vec<RunResult>)>>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let full = replication_data(config, r)?;
            let seed = replication_seed(config.seed, r);
            let row_sets = rates
                .iter()
                .map(|&rate| subsample_rows(full.len(), rate, seed))
                .collect::<Result<Vec<_>>>()?;
            row_sets
                .iter()
                .map(|rows| {
                    let prep = prepare(config, r, full.subset(rows))?;
                    let mut out = run_replication(config, r, &prep, &[config.trim]);
                    Ok((rows.len(), out.pop().expect("one bound")))
                })
                .collect()
        })
        .collect();
    let mut points: Vec<SubsamplePoint> = rates
        .iter()
        .map(|&rate| SubsamplePoint {
            rate,
            n_rows: Vec::new(),
            results: Vec::new(),
            summary: summarize(config, &[]),
        })
        .collect();
    for rep in per_rep {
        for (point, (n, results)) in points.iter_mut().zip(rep?) {
            point.n_rows.push(n);
            point.results.extend(results);
        }
    }
    for point in &mut points {
        point.summary = summarize(config, &point.results);
    }
    Ok(points)
}

/// The three truncation levels of the sensitivity table.
pub fn default_truncation_levels() -> Vec<TrimBounds> {
    [(0.01, 0.99), (0.03, 0.97), (0.1, 0.9)]
        .iter()
        .map(|&(lo, hi)| TrimBounds::new(lo, hi).expect("valid levels"))
        .collect()
}

/// Per-bound results of models trained once per replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub bounds: Vec<TrimBounds>,
    /// Parallel to `bounds`.
    pub results: Vec<Vec<RunResult>>,
    /// Parallel to `bounds`.
    pub summaries: Vec<SummaryTable>,
}

/// One row of the wide table: a method under one estimator, with the mean
/// absolute error at each bound (`None` where no replication produced an
/// estimate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub choice: EstimatorChoice,
    pub subset: EvalSubset,
    pub method: String,
    pub estimator: String,
    pub mean_abs_err: Vec<Option<f64>>,
}

impl TruncationReport {
    /// Bounds across, rows grouped by estimator and then listed by method,
    /// the layout of the truncation-sensitivity table.
    pub fn table(&self) -> Vec<TruncationRow> {
        let mut groups: Vec<(EstimatorChoice, EvalSubset)> = Vec::new();
        let mut methods: Vec<String> = Vec::new();
        for r in self.summaries.iter().flat_map(|s| &s.rows) {
            if !groups.contains(&(r.choice, r.subset)) {
                groups.push((r.choice, r.subset));
            }
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
        }
        let mut out = Vec::new();
        for &(choice, subset) in &groups {
            for method in &methods {
                let cells: Vec<Option<&SummaryRow>> = self
                    .summaries
                    .iter()
                    .map(|s| {
                        s.rows
                            .iter()
                            .find(|r| &r.method == method && r.choice == choice && r.subset == subset)
                    })
                    .collect();
                let Some(first) = cells.iter().flatten().next() else {
                    continue;
                };
                out.push(TruncationRow {
                    choice,
                    subset,
                    method: method.clone(),
                    estimator: first.estimator.clone(),
                    mean_abs_err: cells.iter().map(|c| c.map(|r| r.mean_abs_err)).collect(),
                });
            }
        }
        out
    }
}

/// Trains each method once per replication, then re-trims and
/// re-estimates at every bound. An empty retained set is recorded as a
/// failure on the affected result.
pub fn truncation_sweep(config: &ExperimentConfig, bounds: &[TrimBounds]) -> Result<TruncationReport> {
    config.validate()?;
    if bounds.is_empty() {
        return Err(Error::Config("no truncation levels given".into()));
    }
    let per_rep: Vec<Result<Vec<Vec<RunResult>>>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let prep = prepare(config, r, replication_data(config, r)?)?;
            Ok(run_replication(config, r, &prep, bounds))
        })
        .collect();
    let mut results: Vec<Vec<RunResult>> = bounds.iter().map(|_| Vec::new()).collect();
    for rep in per_rep {
        for (slot, res) in results.iter_mut().zip(rep?) {
            slot.extend(res);
        }
    }
    let summaries = results.iter().map(|res| summarize(config, res)).collect();
    Ok(TruncationReport {
        bounds: bounds.to_vec(),
        results,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsamples_are_nested_and_full_rate_is_identity() {
        let full = subsample_rows(500, 1.0, 42).unwrap();
        assert_eq!(full, (0..500).collect::<Vec<_>>());
        let half = subsample_rows(500, 0.5, 42).unwrap();
        let fifth = subsample_rows(500, 0.2, 42).unwrap();
        assert_eq!(half.len(), 250);
        assert!(fifth.iter().all(|i| half.binary_search(i).is_ok()));
    }

    #[test]
    fn tiny_subsample_is_rejected() {
        assert!(matches!(subsample_rows(400, 0.1, 0), Err(Error::Config(_))));
        assert!(subsample_rows(500, 0.1, 0).is_ok());
        assert!(subsample_rows(500, 0.0, 0).is_err());
        assert!(subsample_rows(500, 1.5, 0).is_err());
    }

    #[test]
    fn default_levels() {
        let levels: Vec<(f64, f64)> = default_truncation_levels()
            .iter()
            .map(|b| (b.low(), b.high()))
            .collect();
        assert_eq!(levels, vec![(0.01, 0.99), (0.03, 0.97), (0.1, 0.9)]);
    }
}
