//! Fit Dragonnet with targeted regularization on a confounded linear
//! problem and compare its estimates with the naive difference in means.
//!
//! cargo run --release --example quickstart

use dragonnet::arch::{train_dragonnet, TrainConfig};
use dragonnet::datagen::LinearDgp;
use dragonnet::estimators::{difference_in_means, estimate_all, EstimatorTag, TrimBounds};
use dragonnet::nncore::SeededRng;

fn main() -> dragonnet::Result<()> {
    let dgp = LinearDgp::default();
    let data = dgp.generate(&mut SeededRng::new(1))?;
    println!(
        "{} rows, {} covariates, {:.1}% treated",
        data.len(),
        data.n_covariates(),
        100.0 * data.treated_fraction()
    );

    let cfg = TrainConfig::default();
    let model = train_dragonnet(&data, &cfg, &mut SeededRng::new(2))?;
    let trace = model.trace();
    println!(
        "trained {} epochs (best {}), heldout treatment accuracy {:.3}",
        trace.epochs_run,
        trace.best_epoch,
        trace.heldout_treatment_accuracy.unwrap_or(f64::NAN)
    );

    let preds = model.predict(&data.x)?;
    let tags = [
        EstimatorTag::Q,
        EstimatorTag::Treg,
        EstimatorTag::Aiptw,
        EstimatorTag::Tmle,
    ];
    let report = estimate_all(&preds, &data.t, &data.y, TrimBounds::default(), &tags)?;
    println!("true ATE {}", dgp.tau);
    println!("naive    {:.4}", difference_in_means(&data.t, &data.y)?);
    for rec in &report.records {
        println!(
            "{:<8} {:.4}  (kept {} rows)",
            rec.estimator_tag, rec.psi_hat, rec.n_used
        );
    }
    println!("fitted epsilon {:.5}", model.epsilon_hat());
    Ok(())
}
