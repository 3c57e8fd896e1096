//! The round loop: seed training, then score, acquire, retrain, evaluate.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::acquisition::{acquire, draw_seed, random_acquire, Acquisition};
use crate::active::PoolState;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{ece_bins_from_probs, ece_from_probs, EceBins, macro_precision_f1, precision_f1_per_class, top1_accuracy, ClassScores};
use crate::nn::{Family, Network, NetworkSpec};
use crate::numerics::{softmax_rows, RngStream};
use crate::train::{apply_temperature, fit_temperature, train_model, EpochRecord, TrainConfig, TrainMode};
use crate::uncertainty::{aue_predict, entropy_score, mc_predict, variation_ratio_score, Estimator, EstimatorKind};

/// Stream purposes. Every random draw in a run comes from
/// `derive(master_seed, stream_id(purpose, round, index))`.
pub mod purpose {
    pub const SPLIT: u64 = 1;
    pub const SEED: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const SCORE: u64 = 5;
    pub const RANDOM: u64 = 6;
    pub const DATA: u64 = 7;
}

/// `purpose` in the top byte, `round` in bits 24..56, `index` in the low 24 bits.
pub fn stream_id(purpose: u64, round: usize, index: usize) -> u64 {
    debug_assert!(round < 1 << 32 && index < 1 << 24);
    (purpose << 56) | ((round as u64) << 24) | index as u64
}

/// Stream id for the initialization of ensemble member `member` at `round`.
pub fn round_init_id(round: usize, member: usize) -> u64 {
    stream_id(purpose::INIT, round, member)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ALConfig {
    pub seed_size: usize,
    pub k: usize,
    pub rounds: usize,
    /// `T`: stochastic passes per score (ensembles: `T == M`).
    pub passes: usize,
    /// `S`: Gaussian draws of the output layer for AUE acquisition.
    pub aue_samples: usize,
    pub acquisition: Acquisition,
    pub estimator: EstimatorKind,
    pub ensemble_size: usize,
    pub dropout_rate: f64,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub master_seed: u64,
    pub stratified_seed: bool,
    pub calibrate: bool,
    pub ece_bins: usize,
}

impl Default for ALConfig {
    fn default() -> Self {
        Self {
            seed_size: 100,
            k: 100,
            rounds: 9,
            passes: 25,
            aue_samples: 25,
            acquisition: Acquisition::VarRatio,
            estimator: EstimatorKind::Bnn,
            ensemble_size: 5,
            dropout_rate: 0.5,
            hidden: vec![300, 100],
            train: TrainConfig::default(),
            master_seed: 0,
            stratified_seed: false,
            calibrate: false,
            ece_bins: crate::metrics::DEFAULT_ECE_BINS,
        }
    }
}

impl ALConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seed_size == 0 {
            return Err(Error::Config("seed_size must be at least 1".into()));
        }
        if self.rounds > 0 && self.k == 0 {
            return Err(Error::Config("k must be at least 1 when rounds > 0".into()));
        }
        if self.passes == 0 || self.aue_samples == 0 {
            return Err(Error::Config("passes and aue_samples must be at least 1".into()));
        }
        if self.ece_bins == 0 {
            return Err(Error::Config("ece_bins must be at least 1".into()));
        }
        if self.estimator == EstimatorKind::Ensemble {
            if self.ensemble_size == 0 {
                return Err(Error::Config("ensemble_size must be at least 1".into()));
            }
            if self.passes != self.ensemble_size {
                return Err(Error::Config(format!(
                    "an ensemble scores with one pass per member: passes ({}) must equal ensemble_size ({})",
                    self.passes, self.ensemble_size
                )));
            }
        }
        if self.estimator == EstimatorKind::Mcd && !(self.dropout_rate > 0.0 && self.dropout_rate < 1.0) {
            return Err(Error::Config(format!("MC dropout needs a rate in (0, 1), got {}", self.dropout_rate)));
        }
        if self.acquisition.uses_aue() && self.estimator != EstimatorKind::Bnn {
            return Err(Error::Config(format!(
                "{} acquisition needs the bnn estimator, not {}",
                self.acquisition.as_str(),
                self.estimator.as_str()
            )));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Labels needed from the pool over the whole run.
    pub fn total_labels(&self) -> usize {
        self.seed_size + self.rounds * self.k
    }

    pub fn members(&self) -> usize {
        if self.estimator == EstimatorKind::Ensemble {
            self.ensemble_size
        } else {
            1
        }
    }

    pub fn network_spec(&self, input: usize, output: usize) -> Result<NetworkSpec> {
        let (family, rate) = match self.estimator {
            EstimatorKind::Bnn => (Family::Bayesian, 0.0),
            EstimatorKind::Ensemble => (Family::Plain, 0.0),
            EstimatorKind::Mcd => (Family::Dropout, self.dropout_rate),
        };
        NetworkSpec::mlp(family, input, &self.hidden, output, rate)
    }

    pub fn fresh_network(&self, spec: &NetworkSpec, round: usize, member: usize) -> Network {
        Network::new(spec.clone(), &mut RngStream::derive(self.master_seed, round_init_id(round, member)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub labels: usize,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub f1_macro: f64,
    pub per_class: Vec<ClassScores>,
    pub ece: f64,
    pub ece_calibrated: Option<f64>,
    /// Test-set reliability table, raw and after temperature scaling.
    pub reliability: EceBins,
    pub reliability_calibrated: Option<EceBins>,
    pub temperature: Option<f64>,
    pub acquisition: Acquisition,
    pub estimator: EstimatorKind,
    pub mode: TrainMode,
    pub seconds: f64,
    /// Dataset indices labeled this round (the seed for round 0).
    pub acquired: Vec<usize>,
    /// Per member: parameter hash before training.
    pub start_hashes: Vec<String>,
    /// Per member: hash of the best-validation snapshot.
    pub best_hashes: Vec<String>,
    /// Per member: hash of the parameters evaluated and carried forward.
    pub eval_hashes: Vec<String>,
    #[serde(skip)]
    pub train_logs: Vec<Vec<EpochRecord>>,
}

#[derive(Clone, Debug)]
pub struct ActiveLearningRun {
    pub records: Vec<RoundRecord>,
    pub pool: PoolState,
    pub estimator: Estimator,
}

fn assemble(kind: EstimatorKind, mut nets: Vec<Network>) -> Estimator {
    match kind {
        EstimatorKind::Bnn => Estimator::Bnn(nets.remove(0)),
        EstimatorKind::Mcd => Estimator::Mcd(nets.remove(0)),
        EstimatorKind::Ensemble => Estimator::Ensemble(nets),
    }
}

fn score_pool(cfg: &ALConfig, est: &Estimator, ds: &Dataset, pool: &PoolState, round: usize) -> Result<Vec<usize>> {
    let candidates = pool.unlabeled();
    let k = cfg.k.min(candidates.len());
    let seed = cfg.master_seed;
    if cfg.acquisition == Acquisition::Random {
        let mut s = RngStream::derive(seed, stream_id(purpose::RANDOM, round, 0));
        return random_acquire(candidates, k, &mut s);
    }
    let x = ds.features.select_rows(candidates);
    let stream = RngStream::derive(seed, stream_id(purpose::SCORE, round, 0));
    let samples = match (cfg.acquisition, est) {
        (Acquisition::AueEntropy | Acquisition::AueVarRatio, Estimator::Bnn(net)) => {
            aue_predict(net, &x, cfg.aue_samples, &stream)?
        }
        (Acquisition::AueEntropy | Acquisition::AueVarRatio, _) => {
            return Err(Error::Config("moment-propagation acquisition needs a bnn estimator".into()))
        }
        _ => mc_predict(est, &x, cfg.passes, &stream)?,
    };
    let scores = match cfg.acquisition {
        Acquisition::Entropy | Acquisition::AueEntropy => entropy_score(&samples),
        _ => variation_ratio_score(&samples),
    };
    acquire(&scores, candidates, k)
}

struct Evaluation {
    accuracy: f64,
    precision_macro: f64,
    f1_macro: f64,
    per_class: Vec<ClassScores>,
    ece: f64,
    ece_calibrated: Option<f64>,
    reliability: EceBins,
    reliability_calibrated: Option<EceBins>,
    temperature: Option<f64>,
}

fn evaluate(cfg: &ALConfig, est: &Estimator, test: &Dataset, val: &Dataset) -> Result<Evaluation> {
    let labels = test.labels().expect("classification checked on entry");
    let logits = est.predict_logits(&test.features)?;
    let probs = softmax_rows(&logits);
    let accuracy = top1_accuracy(&probs, labels)?;
    let per_class = precision_f1_per_class(&probs, labels)?;
    let (precision_macro, f1_macro) = macro_precision_f1(&per_class);
    let ece = ece_from_probs(&probs, labels, cfg.ece_bins)?;
    let reliability = ece_bins_from_probs(&probs, labels, cfg.ece_bins)?;
    let (ece_calibrated, reliability_calibrated, temperature) = if cfg.calibrate && !val.is_empty() {
        let tau = fit_temperature(&est.predict_logits(&val.features)?, val.labels().expect("classification"))?;
        let cal = softmax_rows(&apply_temperature(&logits, tau));
        (
            Some(ece_from_probs(&cal, labels, cfg.ece_bins)?),
            Some(ece_bins_from_probs(&cal, labels, cfg.ece_bins)?),
            Some(tau),
        )
    } else {
        (None, None, None)
    };
    Ok(Evaluation {
        accuracy,
        precision_macro,
        f1_macro,
        per_class,
        ece,
        ece_calibrated,
        reliability,
        reliability_calibrated,
        temperature,
    })
}

struct Trained {
    net: Network,
    best_hash: String,
    log: Vec<EpochRecord>,
}

/// Run the loop on `pool` (fresh from a split: nothing labeled yet).
///
/// Round 0 trains on the seed sample; each of the `cfg.rounds` later rounds
/// scores the whole unlabeled pool with the model from the previous round,
/// labels the top `k`, and retrains. CT continues from the previous best
/// snapshot and restores the best snapshot after training; RFS starts from a
/// fresh initialization drawn from `round_init_id(round, member)` and keeps
/// the last epoch's parameters. `sink` sees every record as soon as it exists.
pub fn run_active_learning(
    cfg: &ALConfig,
    ds: &Dataset,
    mut pool: PoolState,
    sink: &mut dyn FnMut(&RoundRecord) -> Result<()>,
) -> Result<ActiveLearningRun> {
    cfg.validate()?;
    let classes = ds
        .num_classes()
        .ok_or_else(|| Error::Config("the acquisition loop needs a classification dataset".into()))?;
    if pool.len() != ds.len() {
        return Err(Error::InvalidArgument(format!(
            "pool covers {} items, dataset has {}",
            pool.len(),
            ds.len()
        )));
    }
    if !pool.labeled().is_empty() {
        return Err(Error::InvalidArgument("pool already has labeled items".into()));
    }
    if cfg.total_labels() > pool.unlabeled().len() {
        return Err(Error::Config(format!(
            "seed_size + rounds·k = {} exceeds the pool of {}",
            cfg.total_labels(),
            pool.unlabeled().len()
        )));
    }
    if pool.test().is_empty() {
        return Err(Error::Config("the test split is empty".into()));
    }
    let spec = cfg.network_spec(ds.dim(), classes)?;
    let val = ds.subset(pool.val());
    let test = ds.subset(pool.test());
    let master = cfg.master_seed;
    let members = cfg.members();

    let mut seed_stream = RngStream::derive(master, stream_id(purpose::SEED, 0, 0));
    let strata = cfg.stratified_seed.then(|| ds.labels()).flatten();
    let seed = draw_seed(&mut pool, cfg.seed_size, &mut seed_stream, strata).map_err(|e| e.in_round(0, "seed draw"))?;

    let mut nets: Vec<Network> = (0..members).map(|m| cfg.fresh_network(&spec, 0, m)).collect();
    let mut records = Vec::with_capacity(cfg.rounds + 1);
    let mut acquired = seed;
    let mut estimator = assemble(cfg.estimator, nets.clone());

    for round in 0..=cfg.rounds {
        let started = Instant::now();
        if round > 0 {
            acquired = score_pool(cfg, &estimator, ds, &pool, round).map_err(|e| e.in_round(round, "acquisition"))?;
            pool.label(&acquired).map_err(|e| e.in_round(round, "acquisition"))?;
            if cfg.train.mode == TrainMode::Rfs {
                nets = (0..members).map(|m| cfg.fresh_network(&spec, round, m)).collect();
            }
        }
        pool.check_invariants().map_err(|e| e.in_round(round, "bookkeeping"))?;

        let labeled = ds.subset(pool.labeled());
        let start_hashes: Vec<String> = nets.iter().map(Network::parameter_hash).collect();
        let trained = nets
            .into_par_iter()
            .enumerate()
            .map(|(m, mut net)| {
                let mut s = RngStream::derive(master, stream_id(purpose::TRAIN, round, m));
                let h = train_model(&mut net, &labeled, Some(&val), &cfg.train, &mut s)?;
                let best_hash = h.best.parameter_hash();
                if cfg.train.mode == TrainMode::Ct {
                    net = h.best;
                }
                Ok(Trained {
                    net,
                    best_hash,
                    log: h.epochs,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_round(round, "training"))?;

        let mut best_hashes = Vec::with_capacity(members);
        let mut train_logs = Vec::with_capacity(members);
        nets = Vec::with_capacity(members);
        for t in trained {
            best_hashes.push(t.best_hash);
            train_logs.push(t.log);
            nets.push(t.net);
        }
        estimator = assemble(cfg.estimator, nets.clone());
        let ev = evaluate(cfg, &estimator, &test, &val).map_err(|e| e.in_round(round, "evaluation"))?;
        let record = RoundRecord {
            round,
            labels: pool.labeled().len(),
            accuracy: ev.accuracy,
            precision_macro: ev.precision_macro,
            f1_macro: ev.f1_macro,
            per_class: ev.per_class,
            ece: ev.ece,
            ece_calibrated: ev.ece_calibrated,
            reliability: ev.reliability,
            reliability_calibrated: ev.reliability_calibrated,
            temperature: ev.temperature,
            acquisition: cfg.acquisition,
            estimator: cfg.estimator,
            mode: cfg.train.mode,
            seconds: started.elapsed().as_secs_f64(),
            acquired: std::mem::take(&mut acquired),
            start_hashes,
            best_hashes,
            eval_hashes: nets.iter().map(Network::parameter_hash).collect(),
            train_logs,
        };
        sink(&record).map_err(|e| e.in_round(round, "reporting"))?;
        records.push(record);
    }
    Ok(ActiveLearningRun {
        records,
        pool,
        estimator,
    })
}
