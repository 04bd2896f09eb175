//! Dragonnet keeps only what predicts treatment, so it fits outcomes a
//! little worse than TARNET but estimates the effect better, and more so
//! as outcome-only covariates are added.

use dragonnet::arch::TrainConfig;
use dragonnet::bench::{run_experiment, DataSource, EstimatorChoice, EvalSubset, ExperimentConfig, Method};
use dragonnet::datagen::IrrelevantDgp;

fn main() -> dragonnet::Result<()> {
    let methods: Vec<Method> = vec!["tarnet".parse()?, "dragonnet".parse()?];
    for p in [0, 10, 20] {
        let cfg = ExperimentConfig {
            data: DataSource::Irrelevant(IrrelevantDgp {
                p_outcome_only: p,
                ..IrrelevantDgp::default()
            }),
            methods: methods.clone(),
            estimators: vec![EstimatorChoice::Plugin],
            replications: 4,
            training: TrainConfig {
                epochs: 100,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&cfg)?;
        for m in &methods {
            let rows: Vec<_> = report.results.iter().filter(|r| r.method == *m).collect();
            let mse = rows.iter().filter_map(|r| r.heldout_outcome_mse).sum::<f64>() / rows.len() as f64;
            let err = report
                .summary
                .row_for(*m, EstimatorChoice::Plugin, EvalSubset::All)
                .map(|r| r.mean_abs_err);
            println!(
                "p_outcome_only {p:>2}  {m:<10} heldout mse {mse:.3}  mean |psi_Q - psi| {:.4}",
                err.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
