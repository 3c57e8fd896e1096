//! Experiment orchestration: load data, split, run the loop, persist results.
//!
//! A run directory holds `config.toml` (the resolved settings),
//! `results.csv` (one row per round, flushed as rounds finish),
//! `train_logs/round_RRR_member_M.csv`, `summary.json`, and the final
//! `model_M.bin` checkpoints.

pub mod config;
pub mod results;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{preset, ConfigLayer, DatasetSource, ExperimentConfig, SyntheticConfig, PRESETS};
pub use results::{format_row, parse_results, write_results, without_seconds, ResultRow, ResultsWriter, RESULTS_HEADER};

use crate::active::{purpose, run_active_learning, stream_id, PoolState, RoundRecord};
use crate::data::{gen_synthetic_classification, load_idx_dataset, split, split_with_test_range, Dataset, Targets};
use crate::error::{Error, Result};
use crate::nn::checkpoint;
use crate::numerics::{RngStream, Tensor};

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

fn as_data_error(e: Error) -> Error {
    match e {
        Error::Data(_) => e,
        other => Error::Data(other.to_string()),
    }
}

fn concat(name: &str, a: &Dataset, b: &Dataset) -> Result<Dataset> {
    if a.dim() != b.dim() {
        return Err(Error::Data(format!("train images have {} pixels, test images {}", a.dim(), b.dim())));
    }
    let (Targets::Classes { labels: la, .. }, Targets::Classes { labels: lb, .. }) = (&a.targets, &b.targets) else {
        return Err(Error::Data("IDX datasets carry class labels".into()));
    };
    let mut x = a.features.data().to_vec();
    x.extend_from_slice(b.features.data());
    let labels: Vec<usize> = la.iter().chain(lb).copied().collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1).max(10);
    Dataset::new(name, Tensor::matrix(a.len() + b.len(), a.dim(), x)?, Targets::Classes { labels, classes })
}

/// The dataset plus, when a separate test file exists, where its rows start.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, Option<usize>)> {
    match cfg.dataset {
        DatasetSource::Synthetic => {
            let s = &cfg.synthetic;
            let mut stream = RngStream::derive(cfg.active.master_seed, stream_id(purpose::DATA, 0, 0));
            let ds = gen_synthetic_classification(s.n, s.classes, s.dim, s.separation, &mut stream)?;
            Ok((ds, None))
        }
        DatasetSource::Mnist | DatasetSource::Fmnist => {
            let dir = cfg
                .data_dir
                .as_deref()
                .ok_or_else(|| Error::Config("IDX datasets need a data directory".into()))?;
            if !dir.is_dir() {
                return Err(Error::Data(format!("data directory {} does not exist", dir.display())));
            }
            let name = if cfg.dataset == DatasetSource::Mnist { "mnist" } else { "fmnist" };
            let mut train =
                load_idx_dataset(name, dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS), Some(10)).map_err(as_data_error)?;
            if let Some(limit) = cfg.limit {
                train = train.subset(&(0..limit.min(train.len())).collect::<Vec<_>>());
            }
            let (ti, tl) = (dir.join(TEST_IMAGES), dir.join(TEST_LABELS));
            if ti.is_file() && tl.is_file() {
                let test = load_idx_dataset(name, ti, tl, Some(10)).map_err(as_data_error)?;
                let n_train = train.len();
                Ok((concat(name, &train, &test)?, Some(n_train)))
            } else {
                Ok((train, None))
            }
        }
    }
}

pub fn make_pool(cfg: &ExperimentConfig, ds: &Dataset, test_start: Option<usize>) -> Result<PoolState> {
    let mut stream = RngStream::derive(cfg.active.master_seed, stream_id(purpose::SPLIT, 0, 0));
    match test_start {
        Some(n_train) => split_with_test_range(n_train, ds.len(), cfg.split, &mut stream),
        None => split(ds.len(), cfg.split, &mut stream),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub dataset: String,
    pub dataset_size: usize,
    pub pool: usize,
    pub validation: usize,
    pub test: usize,
    pub rounds: Vec<RoundRecord>,
    pub final_accuracy: Option<f64>,
    pub final_f1_macro: Option<f64>,
    pub final_ece: Option<f64>,
    pub final_ece_calibrated: Option<f64>,
    pub completed: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub records: Vec<RoundRecord>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// [`run_experiment_with`] without an observer.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_experiment_with(cfg, &mut |_| Ok(()))
}

/// Validate, then run one experiment end to end. `observer` sees each round
/// after it has been written; an error from it stops the run.
pub fn run_experiment_with(cfg: &ExperimentConfig, observer: &mut (dyn FnMut(&RoundRecord) -> Result<()> + Send)) -> Result<RunOutcome> {
    cfg.validate()?;
    let pool_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
    let (ds, test_start) = load_dataset(cfg)?;
    let pool = make_pool(cfg, &ds, test_start).map_err(as_data_error)?;

    let out = cfg.out.clone();
    let logs = out.join("train_logs");
    std::fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let mut writer = ResultsWriter::create(out.join("results.csv"))?;

    let mut summary = Summary {
        config: cfg.clone(),
        dataset: ds.name.clone(),
        dataset_size: ds.len(),
        pool: pool.unlabeled().len(),
        validation: pool.val().len(),
        test: pool.test().len(),
        rounds: Vec::new(),
        final_accuracy: None,
        final_f1_macro: None,
        final_ece: None,
        final_ece_calibrated: None,
        completed: false,
    };
    let summary_path = out.join("summary.json");
    let mut sink = |r: &RoundRecord| -> Result<()> {
        writer.append(r)?;
        for (m, log) in r.train_logs.iter().enumerate() {
            let mut text = String::from(crate::train::TrainHistory::CSV_HEADER);
            text.push('\n');
            for e in log {
                text.push_str(&format!("{},{:.11e},{:.11e},{}\n", e.epoch, e.train_loss, e.val_loss, e.is_best));
            }
            write_text(&logs.join(format!("round_{:03}_member_{m}.csv", r.round)), &text)?;
        }
        observer(r)
    };
    let result = pool_threads.install(|| run_active_learning(&cfg.active, &ds, pool, &mut sink));
    let run = match result {
        Ok(run) => run,
        Err(e) => {
            let _ = write_text(&summary_path, &serde_json::to_string_pretty(&summary).unwrap_or_default());
            return Err(e);
        }
    };
    for (m, net) in run.estimator.networks().iter().enumerate() {
        checkpoint::save(net, out.join(format!("model_{m}.bin")))?;
    }
    let last = run.records.last();
    summary.final_accuracy = last.map(|r| r.accuracy);
    summary.final_f1_macro = last.map(|r| r.f1_macro);
    summary.final_ece = last.map(|r| r.ece);
    summary.final_ece_calibrated = last.and_then(|r| r.ece_calibrated);
    summary.rounds = run.records.clone();
    summary.completed = true;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Data(e.to_string()))?;
    write_text(&summary_path, &json)?;
    Ok(RunOutcome {
        out_dir: out,
        records: run.records,
    })
}
