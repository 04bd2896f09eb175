use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, EstimatorChoice, ExperimentConfig, Method};
use super::summary::{summarize, SummaryTable};
use crate::arch::{train, train_on_rows, TrainRows};
use crate::datagen::{load_csv, split, Dataset};
use crate::estimators::{difference_in_means, estimate_all, overlap_flag, EstimatorTag, Predictions, TrimBounds};
use crate::nncore::{derive_seed, SeededRng};
use crate::{Error, Result};

/// Stream ids under a replication seed.
pub const DATA_STREAM: u64 = 0;
pub const SPLIT_STREAM: u64 = 1;
pub const MODEL_STREAM: u64 = 2;
pub const SUBSAMPLE_STREAM: u64 = 3;

/// Seed of replication `r`: `derive_seed(base, r)`. Every random choice in
/// the replication derives from it through the stream ids above, so a
/// replication's numbers do not depend on scheduling or on other
/// replications. All methods of a replication share the model stream and
/// so start from the same weights wherever their shapes agree.
pub fn replication_seed(base: u64, r: usize) -> u64 {
    derive_seed(base, r as u64)
}

/// Rows an estimate is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSubset {
    /// Every row; used when training on all the data.
    All,
    /// Train and validation rows of a three-way split.
    In,
    /// Test rows of a three-way split.
    Out,
}

impl EvalSubset {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSubset::All => "all",
            EvalSubset::In => "in",
            EvalSubset::Out => "out",
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            EvalSubset::All => "",
            EvalSubset::In => "_in",
            EvalSubset::Out => "_out",
        }
    }
}

/// One estimator on one row subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    /// Tag plus subset suffix, e.g. `TREG` or `TMLE_out`.
    pub estimator: String,
    pub choice: EstimatorChoice,
    pub tag: EstimatorTag,
    pub subset: EvalSubset,
    pub psi_hat: f64,
    /// Sample ATE of the subset when `mu0`, `mu1` are known, else the
    /// population ATE.
    pub truth: Option<f64>,
    /// `|psi_hat - truth|`.
    pub abs_error: Option<f64>,
    pub trim: TrimBounds,
    pub n_used: usize,
    pub dropped_low: usize,
    pub dropped_high: usize,
}

/// Difference in means on a subset, untrimmed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveEstimate {
    pub subset: EvalSubset,
    pub psi_hat: f64,
    pub truth: Option<f64>,
    pub abs_error: Option<f64>,
}

/// Everything recorded for one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub replication: usize,
    pub method: Method,
    pub estimates: Vec<EstimateEntry>,
    pub naive: Vec<NaiveEstimate>,
    /// On the rows used for early stopping.
    pub heldout_outcome_mse: Option<f64>,
    pub heldout_treatment_accuracy: Option<f64>,
    /// Replication-level: set on every method's result when the overlap
    /// method's heldout accuracy exceeds 90%.
    pub overlap_flag: bool,
    /// Training or estimation failure, if any. Failed estimates are absent.
    pub failure: Option<String>,
    /// Wall-clock seconds; the one recorded quantity that is not
    /// reproducible.
    pub wall_time_secs: f64,
}

impl RunResult {
    pub fn entry(&self, choice: EstimatorChoice, subset: EvalSubset) -> Option<&EstimateEntry> {
        self.estimates.iter().find(|e| e.choice == choice && e.subset == subset)
    }

    pub fn abs_error(&self, choice: EstimatorChoice, subset: EvalSubset) -> Option<f64> {
        self.entry(choice, subset).and_then(|e| e.abs_error)
    }

    pub fn naive_error(&self, subset: EvalSubset) -> Option<f64> {
        self.naive.iter().find(|n| n.subset == subset).and_then(|n| n.abs_error)
    }

    /// Copy with the wall time zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> RunResult {
        RunResult {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Raw results, in replication-then-method order, and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub results: Vec<RunResult>,
    pub summary: SummaryTable,
}

/// A replication's data and the row sets it is trained and evaluated on.
pub(crate) struct Prepared {
    pub data: Dataset,
    pub seed: u64,
    /// `None`: train on all rows with the trainer's own early-stopping holdout.
    pub train_rows: Option<TrainRows>,
    pub subsets: Vec<(EvalSubset, Vec<usize>)>,
}

/// The dataset of replication `r`: generated from the data stream of its
/// seed, or loaded from the configured CSV files.
pub fn replication_data(config: &ExperimentConfig, r: usize) -> Result<Dataset> {
    let seed = replication_seed(config.seed, r);
    let mut rng = SeededRng::new(derive_seed(seed, DATA_STREAM));
    match &config.data {
        DataSource::Linear(p) => p.generate(&mut rng),
        DataSource::Irrelevant(p) => p.generate(&mut rng),
        DataSource::IhdpLike(p) => p.generate(&mut rng),
        DataSource::Csv { paths, schema } => load_csv(&paths[r % paths.len()], schema),
    }
}

pub(crate) fn prepare(config: &ExperimentConfig, r: usize, data: Dataset) -> Result<Prepared> {
    let seed = replication_seed(config.seed, r);
    let n = data.len();
    if config.split.is_all_data() {
        return Ok(Prepared {
            data,
            seed,
            train_rows: None,
            subsets: vec![(EvalSubset::All, (0..n).collect())],
        });
    }
    let s = split(n, &config.split.with_seed(derive_seed(seed, SPLIT_STREAM)))?;
    let in_rows = s.train_and_validation();
    Ok(Prepared {
        data,
        seed,
        train_rows: Some(TrainRows {
            train: s.train,
            validation: s.validation,
        }),
        subsets: vec![(EvalSubset::In, in_rows), (EvalSubset::Out, s.test)],
    })
}

/// Nuisance estimates of one method on each evaluation subset.
pub(crate) struct MethodFit {
    pub predictions: Vec<Predictions>,
    pub heldout_outcome_mse: Option<f64>,
    pub heldout_treatment_accuracy: Option<f64>,
}

fn oracle_predictions(data: &Dataset) -> Result<Predictions> {
    let (Some(mu0), Some(mu1)) = (&data.mu0, &data.mu1) else {
        return Err(Error::Config("the oracle needs mu0 and mu1 in the data".into()));
    };
    let g = match &data.propensity {
        Some(g) => g.clone(),
        None => vec![data.treated_fraction(); data.len()],
    };
    Ok(Predictions {
        q0: mu0.clone(),
        q1: mu1.clone(),
        g,
        epsilon: None,
    })
}

pub(crate) fn fit_method(config: &ExperimentConfig, method: Method, prep: &Prepared) -> Result<MethodFit> {
    let Some(arch) = method.architecture() else {
        let all = oracle_predictions(&prep.data)?;
        return Ok(MethodFit {
            predictions: prep.subsets.iter().map(|(_, rows)| all.subset(rows)).collect(),
            heldout_outcome_mse: None,
            heldout_treatment_accuracy: None,
        });
    };
    let cfg = config.training_config(method);
    let mut rng = SeededRng::new(derive_seed(prep.seed, MODEL_STREAM));
    let model = match &prep.train_rows {
        None => train(arch, &prep.data, &cfg, &mut rng)?,
        Some(rows) => train_on_rows(arch, &prep.data, rows, &cfg, &mut rng)?,
    };
    let all = model.predict(&prep.data.x)?;
    Ok(MethodFit {
        predictions: prep.subsets.iter().map(|(_, rows)| all.subset(rows)).collect(),
        heldout_outcome_mse: model.trace().heldout_outcome_mse,
        heldout_treatment_accuracy: model.trace().heldout_treatment_accuracy,
    })
}

/// Estimates for every subset at one trim level. Returns the entries and
/// the first failure.
pub(crate) fn estimate_method(
    config: &ExperimentConfig,
    method: Method,
    prep: &Prepared,
    fit: &MethodFit,
    bounds: TrimBounds,
) -> (Vec<EstimateEntry>, Option<String>) {
    let mut entries = Vec::new();
    let mut failure = None;
    let tags: Vec<EstimatorTag> = config.estimators.iter().map(|c| c.tag_for(method)).collect();
    for ((subset, rows), preds) in prep.subsets.iter().zip(&fit.predictions) {
        let sub = prep.data.subset(rows);
        let truth = sub.reference_ate();
        match estimate_all(preds, &sub.t, &sub.y, bounds, &tags) {
            Ok(report) => {
                for (choice, rec) in config.estimators.iter().zip(&report.records) {
                    entries.push(EstimateEntry {
                        estimator: format!("{}{}", rec.estimator_tag, subset.suffix()),
                        choice: *choice,
                        tag: rec.estimator_tag,
                        subset: *subset,
                        psi_hat: rec.psi_hat,
                        truth,
                        abs_error: truth.map(|t| (rec.psi_hat - t).abs()),
                        trim: bounds,
                        n_used: rec.n_used,
                        dropped_low: rec.dropped_low,
                        dropped_high: rec.dropped_high,
                    });
                }
            }
            Err(e) => {
                failure.get_or_insert_with(|| format!("{subset:?}: {e}"));
            }
        }
    }
    (entries, failure)
}

pub(crate) fn naive_estimates(prep: &Prepared) -> Vec<NaiveEstimate> {
    prep.subsets
        .iter()
        .filter_map(|(subset, rows)| {
            let sub = prep.data.subset(rows);
            let psi = difference_in_means(&sub.t, &sub.y).ok()?;
            let truth = sub.reference_ate();
            Some(NaiveEstimate {
                subset: *subset,
                psi_hat: psi,
                truth,
                abs_error: truth.map(|t| (psi - t).abs()),
            })
        })
        .collect()
}

/// Trains every method once and estimates at each of `bounds`. The outer
/// vector follows `bounds`, the inner one `config.methods`.
pub(crate) fn run_replication(
    config: &ExperimentConfig,
    r: usize,
    prep: &Prepared,
    bounds: &[TrimBounds],
) -> Vec<Vec<RunResult>> {
    let naive = naive_estimates(prep);
    let mut per_bound: Vec<Vec<RunResult>> = bounds.iter().map(|_| Vec::new()).collect();
    for &method in &config.methods {
        let start = Instant::now();
        let fit = fit_method(config, method, prep);
        let fit_time = start.elapsed().as_secs_f64();
        for (b, &bound) in bounds.iter().enumerate() {
            let est_start = Instant::now();
            let mut result = RunResult {
                replication: r,
                method,
                estimates: Vec::new(),
                naive: naive.clone(),
                heldout_outcome_mse: None,
                heldout_treatment_accuracy: None,
                overlap_flag: false,
                failure: None,
                wall_time_secs: 0.0,
            };
            match &fit {
                Ok(fit) => {
                    let (entries, failure) = estimate_method(config, method, prep, fit, bound);
                    result.estimates = entries;
                    result.failure = failure;
                    result.heldout_outcome_mse = fit.heldout_outcome_mse;
                    result.heldout_treatment_accuracy = fit.heldout_treatment_accuracy;
                }
                Err(e) => result.failure = Some(e.to_string()),
            }
            result.wall_time_secs = fit_time + est_start.elapsed().as_secs_f64();
            per_bound[b].push(result);
        }
    }
    let flag_method = config.overlap_method();
    for results in &mut per_bound {
        let flag = results
            .iter()
            .find(|res| res.method == flag_method)
            .and_then(|res| res.heldout_treatment_accuracy)
            .is_some_and(overlap_flag);
        for res in results.iter_mut() {
            res.overlap_flag = flag;
        }
    }
    per_bound
}

/// Runs every replication (in parallel on the current rayon pool) and
/// returns results ordered by replication, then by method.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let per_rep: Vec<Result<Vec<RunResult>>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let prep = prepare(config, r, replication_data(config, r)?)?;
            let mut out = run_replication(config, r, &prep, &[config.trim]);
            Ok(out.pop().expect("one bound"))
        })
        .collect();
    let mut results = Vec::new();
    for rep in per_rep {
        results.extend(rep?);
    }
    let summary = summarize(config, &results);
    Ok(ExperimentReport {
        config: config.clone(),
        results,
        summary,
    })
}

/// Like [`run_experiment`] on caller-supplied datasets, one per replication.
pub fn run_experiment_on(config: &ExperimentConfig, datasets: &[Dataset]) -> Result<ExperimentReport> {
    let config = ExperimentConfig {
        replications: datasets.len(),
        ..config.clone()
    };
    config.validate()?;
    let per_rep: Vec<Result<Vec<RunResult>>> = datasets
        .par_iter()
        .enumerate()
        .map(|(r, d)| {
            let prep = prepare(&config, r, d.clone())?;
            let mut out = run_replication(&config, r, &prep, &[config.trim]);
            Ok(out.pop().expect("one bound"))
        })
        .collect();
    let mut results = Vec::new();
    for rep in per_rep {
        results.extend(rep?);
    }
    let summary = summarize(&config, &results);
    Ok(ExperimentReport {
        config,
        results,
        summary,
    })
}
