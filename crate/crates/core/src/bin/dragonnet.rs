use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dragonnet::arch::{train, Architecture, FittedModel};
use dragonnet::bench::{
    default_truncation_levels, emit_report, emit_subsample, emit_truncation, replication_data, run_experiment,
    subsample_sweep, truncation_sweep, ExperimentConfig, Method, ReportFormat, SummaryTable,
};
use dragonnet::datagen::{load_csv, write_csv, CsvSchema, Dataset};
use dragonnet::estimators::{estimate_all, EstimatorTag, TrimBounds};
use dragonnet::nncore::SeededRng;
use dragonnet::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dragonnet",
    version,
    about = "Treatment-effect estimation and replication benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one CSV per replication from the configured data source.
    Generate(Common),
    /// Fit one model and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train on this CSV instead of replication 0 of the data source.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Apply the estimators to a checkpoint and a dataset.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the full method grid.
    Bench(Common),
    /// Rerun the grid on nested subsamples.
    SweepSubsample {
        #[command(flatten)]
        common: Common,
        /// Comma-separated rates in (0, 1].
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 0.75, 1.0])]
        rates: Vec<f64>,
    },
    /// Re-estimate at several truncation levels.
    SweepTrim {
        #[command(flatten)]
        common: Common,
        /// Extra levels as `lo,hi`; the three defaults are used if none.
        #[arg(long = "level", value_parser = parse_bounds)]
        levels: Vec<TrimBounds>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Restrict the grid to one architecture.
    #[arg(long)]
    arch: Option<Architecture>,
    /// With `--arch`: use targeted regularization.
    #[arg(long)]
    treg: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Propensity trim bounds as `lo,hi`.
    #[arg(long, value_parser = parse_bounds)]
    trim: Option<TrimBounds>,
    #[arg(long)]
    replications: Option<usize>,
}

fn parse_bounds(s: &str) -> std::result::Result<TrimBounds, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    TrimBounds::new(lo, hi).map_err(|e| e.to_string())
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
        if let Some(beta) = self.beta {
            cfg.beta = beta;
        }
        if let Some(trim) = self.trim {
            cfg.trim = trim;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        match self.arch {
            Some(arch) => {
                cfg.methods = vec![Method::model(arch, self.treg)?];
                cfg.baseline = None;
                cfg.overlap_method = None;
            }
            None if self.treg => return Err(Error::Config("--treg needs --arch".into())),
            None => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The single model method selected by `--arch`, else Dragonnet with
    /// targeted regularization.
    fn model_method(&self) -> Result<(Architecture, bool)> {
        match self.arch {
            Some(arch) => Method::model(arch, self.treg).map(|_| (arch, self.treg)),
            None => Ok((Architecture::Dragonnet, true)),
        }
    }
}

fn print_summary(table: &SummaryTable) {
    println!(
        "{:<16} {:<10} {:>12} {:>10} {:>6}",
        "method", "estimator", "mean_abs_err", "std_err", "n"
    );
    for r in &table.rows {
        println!(
            "{:<16} {:<10} {:>12.4} {:>10.4} {:>6}",
            r.method, r.estimator, r.mean_abs_err, r.std_err, r.n_runs
        );
    }
    if !table.excluded_replications.is_empty() {
        println!("excluded for poor overlap: {:?}", table.excluded_replications);
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn load_data(path: &Path) -> Result<Dataset> {
    load_csv(path, &CsvSchema::default())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.experiment()?;
            std::fs::create_dir_all(&common.out_dir).map_err(|e| Error::io(&common.out_dir, e))?;
            for r in 0..cfg.replications {
                let path = common.out_dir.join(format!("data_{r:03}.csv"));
                write_csv(&replication_data(&cfg, r)?, &path)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Train { common, data } => {
            let cfg = common.experiment()?;
            let (arch, treg) = common.model_method()?;
            let dataset = match data {
                Some(path) => load_data(&path)?,
                None => replication_data(&cfg, 0)?,
            };
            let method = Method::model(arch, treg)?;
            let mut rng = SeededRng::new(cfg.seed);
            let model = train(arch, &dataset, &cfg.training_config(method), &mut rng)?;
            std::fs::create_dir_all(&common.out_dir).map_err(|e| Error::io(&common.out_dir, e))?;
            let path = common.out_dir.join("model.json");
            model.save(&path)?;
            let trace = model.trace();
            println!(
                "{method}: {} epochs (best {}), heldout outcome mse {:?}, heldout treatment accuracy {:?}",
                trace.epochs_run, trace.best_epoch, trace.heldout_outcome_mse, trace.heldout_treatment_accuracy
            );
            println!("wrote {}", path.display());
        }
        Command::Estimate { common, model, data } => {
            let cfg = common.experiment()?;
            let model = FittedModel::load(&model)?;
            let dataset = load_data(&data)?;
            let preds = model.predict(&dataset.x)?;
            let mut tags = vec![EstimatorTag::Q, EstimatorTag::Aiptw, EstimatorTag::Tmle];
            if model.metadata().treg {
                tags.push(EstimatorTag::Treg);
            }
            let report = estimate_all(&preds, &dataset.t, &dataset.y, cfg.trim, &tags)?;
            for rec in &report.records {
                println!("{:<6} {:>12.6} (n_used {})", rec.estimator_tag, rec.psi_hat, rec.n_used);
            }
            std::fs::create_dir_all(&common.out_dir).map_err(|e| Error::io(&common.out_dir, e))?;
            let path = common.out_dir.join("estimates.json");
            let json = serde_json::to_vec_pretty(&report.records)?;
            std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            println!("wrote {}", path.display());
        }
        Command::Bench(common) => {
            let cfg = common.experiment()?;
            let report = run_experiment(&cfg)?;
            print_summary(&report.summary);
            print_written(&emit_report(&report, &common.out_dir, ReportFormat::Both)?);
        }
        Command::SweepSubsample { common, rates } => {
            let cfg = common.experiment()?;
            let points = subsample_sweep(&cfg, &rates)?;
            for p in &points {
                println!("rate {}", p.rate);
                print_summary(&p.summary);
            }
            print_written(&emit_subsample(&points, &common.out_dir)?);
        }
        Command::SweepTrim { common, levels } => {
            let cfg = common.experiment()?;
            let levels = if levels.is_empty() {
                default_truncation_levels()
            } else {
                levels
            };
            let report = truncation_sweep(&cfg, &levels)?;
            for row in report.table() {
                let cells: Vec<String> = row
                    .mean_abs_err
                    .iter()
                    .map(|v| v.map_or("-".to_string(), |x| format!("{x:.4}")))
                    .collect();
                println!("{:<16} {:<10} {}", row.method, row.estimator, cells.join("  "));
            }
            print_written(&emit_truncation(&report, &common.out_dir)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
