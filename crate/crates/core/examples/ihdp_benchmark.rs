//! The four-method comparison on the IHDP-like generator, written to
//! `target/ihdp_benchmark/`. Pass a replication count as the first
//! argument (the full comparison uses 50 or more).

use dragonnet::bench::{emit_report, run_experiment, ExperimentConfig, ReportFormat};

fn main() -> dragonnet::Result<()> {
    let replications = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = ExperimentConfig {
        replications,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    for row in &report.summary.rows {
        println!(
            "{:<16} {:<6} {:.4} ± {:.4} over {}",
            row.method, row.estimator, row.mean_abs_err, row.std_err, row.n_runs
        );
    }
    for c in &report.summary.comparisons {
        println!(
            "{:<16} vs {}: {:.0}% improved, mean gain {:.4}, mean loss {:.4}",
            c.method, c.baseline, c.stats.percent_improved, c.stats.mean_improvement, c.stats.mean_degradation
        );
    }
    for path in emit_report(&report, "target/ihdp_benchmark", ReportFormat::Both)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
