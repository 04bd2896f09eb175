//! Subsampling and truncation sweeps on a small configuration. Outputs go
//! to `target/sweeps/`.

use dragonnet::arch::{NetworkShape, TrainConfig};
use dragonnet::bench::{
    default_truncation_levels, emit_subsample, emit_truncation, subsample_sweep, truncation_sweep, ExperimentConfig,
};
use dragonnet::datagen::IhdpLikeDgp;

fn main() -> dragonnet::Result<()> {
    let cfg = ExperimentConfig {
        data: dragonnet::bench::DataSource::IhdpLike(IhdpLikeDgp::default()),
        replications: 3,
        training: TrainConfig {
            epochs: 40,
            shape: NetworkShape {
                shared_width: 64,
                representation_width: 64,
                head_width: 32,
                ..NetworkShape::default()
            },
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };

    let points = subsample_sweep(&cfg, &[0.25, 0.5, 1.0])?;
    for p in &points {
        for row in &p.summary.rows {
            println!(
                "rate {:<5} {:<16} {:<6} {:.4}",
                p.rate, row.method, row.estimator, row.mean_abs_err
            );
        }
    }
    emit_subsample(&points, "target/sweeps")?;

    let trunc = truncation_sweep(&cfg, &default_truncation_levels())?;
    let header: Vec<String> = trunc
        .bounds
        .iter()
        .map(|b| format!("[{}, {}]", b.low(), b.high()))
        .collect();
    println!("{:<16} {:<6} {}", "method", "est", header.join("  "));
    for row in trunc.table() {
        let cells: Vec<String> = row
            .mean_abs_err
            .iter()
            .map(|v| v.map_or("-".into(), |x| format!("{x:<12.4}")))
            .collect();
        println!("{:<16} {:<6} {}", row.method, row.estimator, cells.join(""));
    }
    for path in emit_truncation(&trunc, "target/sweeps")? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
