use std::path::PathBuf;
use std::process::ExitCode;

use bnnal_core::active::Acquisition;
use bnnal_core::metrics::EceBins;
use bnnal_core::runner::{run_experiment_with, ConfigLayer, DatasetSource, ExperimentConfig, PRESETS};
use bnnal_core::{Error, EstimatorKind, RoundRecord, TrainMode};
use clap::Parser;

/// Run one active-learning experiment and write its results directory.
///
/// Settings resolve in layers: preset, then --config file, then flags.
/// With no preset and no file, defaults are: estimator bnn, acquisition
/// varratio, mode ct (30 epochs; rfs uses 100), T = 25 passes, M = 5
/// ensemble members, AUE S = 25, seed 0, out runs/latest.
#[derive(Debug, Parser)]
#[command(name = "bnnal", version, about, long_about)]
struct Cli {
    /// TOML file with any of the flag settings (snake_case keys).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Named settings bundle.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,

    /// mnist, fmnist, or synthetic.
    #[arg(long)]
    dataset: Option<DatasetSource>,

    /// Directory holding train-images-idx3-ubyte and train-labels-idx1-ubyte
    /// (t10k-* files, if present, become the test set).
    #[arg(long, env = "BNNAL_DATA_DIR")]
    data_dir: Option<PathBuf>,

    /// Keep only the first N training images.
    #[arg(long)]
    limit: Option<usize>,

    /// bnn, ensemble, or mcd.
    #[arg(long)]
    estimator: Option<EstimatorKind>,

    /// entropy, varratio, random, aue-entropy, or aue-varratio.
    #[arg(long)]
    acquisition: Option<Acquisition>,

    /// ct (continue from the previous round) or rfs (retrain from scratch).
    #[arg(long)]
    mode: Option<TrainMode>,

    /// Labels drawn at random before the first round.
    #[arg(long)]
    seed_size: Option<usize>,

    /// Labels acquired per round.
    #[arg(long)]
    k: Option<usize>,

    /// Acquisition rounds after seed training.
    #[arg(long)]
    rounds: Option<usize>,

    /// Stochastic passes T used for scoring (ensembles: must equal M).
    #[arg(long)]
    passes: Option<usize>,

    /// Ensemble members M.
    #[arg(long)]
    ensemble_size: Option<usize>,

    /// Samples S drawn from the propagated output moments.
    #[arg(long)]
    aue_samples: Option<usize>,

    /// Training epochs per round (overrides the per-mode default).
    #[arg(long)]
    epochs: Option<usize>,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,

    /// Fit a temperature on the validation split and report calibrated ECE.
    #[arg(long)]
    calibrate: bool,

    /// Print nothing but errors.
    #[arg(long, short)]
    quiet: bool,
}

impl Cli {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            preset: self.preset.clone(),
            dataset: self.dataset,
            data_dir: self.data_dir.clone(),
            limit: self.limit,
            out: self.out.clone(),
            jobs: self.jobs,
            estimator: self.estimator,
            acquisition: self.acquisition,
            mode: self.mode,
            seed_size: self.seed_size,
            k: self.k,
            rounds: self.rounds,
            passes: self.passes,
            aue_samples: self.aue_samples,
            ensemble_size: self.ensemble_size,
            epochs: self.epochs,
            seed: self.seed,
            calibrate: self.calibrate.then_some(true),
            ..ConfigLayer::default()
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 2,
        Error::Data(_) => 3,
        _ => 4,
    }
}

fn print_reliability(title: &str, bins: &EceBins) {
    let m = bins.count.len();
    println!("{title}");
    println!("  {:>13}  {:>6}  {:>8}  {:>10}", "bin", "count", "accuracy", "confidence");
    for (b, ((n, acc), conf)) in bins.count.iter().zip(&bins.accuracy).zip(&bins.confidence).enumerate() {
        let range = format!("({:.2}, {:.2}]", b as f64 / m as f64, (b + 1) as f64 / m as f64);
        println!("  {range:>13}  {n:>6}  {acc:>8.4}  {conf:>10.4}");
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let file = cli.config.as_deref().map(ConfigLayer::from_file).transpose()?;
    let cfg = ExperimentConfig::resolve(file.as_ref(), &cli.layer())?;
    let quiet = cli.quiet;
    let mut progress = |r: &RoundRecord| {
        if !quiet {
            eprintln!(
                "round {:>3}  labels {:>6}  acc {:.4}  f1 {:.4}  ece {:.4}{}  {:.1}s",
                r.round,
                r.labels,
                r.accuracy,
                r.f1_macro,
                r.ece,
                r.ece_calibrated.map(|c| format!(" (calibrated {c:.4})")).unwrap_or_default(),
                r.seconds
            );
        }
        Ok(())
    };
    let outcome = run_experiment_with(&cfg, &mut progress)?;
    if !quiet {
        if let Some(last) = outcome.records.last() {
            print_reliability("reliability (final round, test set)", &last.reliability);
            if let (Some(bins), Some(tau)) = (&last.reliability_calibrated, last.temperature) {
                print_reliability(&format!("reliability after temperature scaling (tau = {tau:.4})"), bins);
            }
        }
        println!("results written to {}", outcome.out_dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
