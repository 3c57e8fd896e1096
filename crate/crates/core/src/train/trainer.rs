//! Mini-batch training with early stopping and best-snapshot tracking.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::numerics::RngStream;
use crate::train::adam::{adam_step, OptimizerState, DEFAULT_LEARNING_RATE};
use crate::train::loss::{data_loss, objective_and_gradients};

/// Continual training or retraining from scratch between rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Ct,
    Rfs,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Ct => "ct",
            TrainMode::Rfs => "rfs",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ct" => Ok(TrainMode::Ct),
            "rfs" => Ok(TrainMode::Rfs),
            _ => Err(Error::Config(format!("unknown training mode '{s}' (expected ct or rfs)"))),
        }
    }
}

/// How the KL term is weighted against the data term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlScaleMode {
    /// `1 / N_r` with `N_r` the size of the labeled set being trained on.
    #[default]
    PerRoundSize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub early_stop_patience: usize,
    pub kl_scale_mode: KlScaleMode,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: DEFAULT_LEARNING_RATE,
            early_stop_patience: 20,
            kl_scale_mode: KlScaleMode::PerRoundSize,
            mode: TrainMode::Ct,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::Config("early_stop_patience must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Patience counter over a monitored loss (lower is better).
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    /// Record one epoch's loss; returns whether it is a new best.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub is_best: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Parameters at the best epoch.
    pub best: Network,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,is_best";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.11e},{:.11e},{}", e.epoch, e.train_loss, e.val_loss, e.is_best);
        }
        out
    }
}

/// Minimize the data loss (plus `KL / N_r` for variational nets) with Adam.
///
/// Validation loss uses the deterministic forward pass. Without validation
/// data the epoch's mean training objective is monitored instead. `net` is
/// left holding the last epoch's parameters; the best ones are in the history.
pub fn train_model(
    net: &mut Network,
    labeled: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    stream: &mut RngStream,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty labeled set".into()));
    }
    let val = val.filter(|v| !v.is_empty());
    let n = labeled.len();
    let kl_weight = net.is_bayesian().then(|| match cfg.kl_scale_mode {
        KlScaleMode::PerRoundSize => 1.0 / n as f64,
    });
    let stochastic = net.is_bayesian() || net.has_dropout();
    let mut opt = OptimizerState::new(net.parameters().iter().map(|p| p.len()));
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        best: net.clone(),
        stopped_early: false,
    };

    for epoch in 1..=cfg.epochs {
        stream.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = labeled.subset(chunk);
            let noise = stochastic.then(|| net.draw_noise(chunk.len(), true, stream));
            let (loss, grads) =
                objective_and_gradients(net, &batch.features, &batch.targets, noise.as_ref(), kl_weight)?;
            if !loss.is_finite() {
                return Err(Error::InvalidArgument(format!("training loss diverged at epoch {epoch}")));
            }
            total += loss * chunk.len() as f64;
            adam_step(&mut net.parameters_mut(), &grads, &mut opt, cfg.learning_rate)?;
        }
        let train_loss = total / n as f64;
        let val_loss = match val {
            Some(v) => data_loss(&net.mean_forward(&v.features)?, &v.targets)?,
            None => train_loss,
        };
        let is_best = stopper.observe(val_loss);
        if is_best {
            history.best_epoch = epoch;
            history.best_val_loss = val_loss;
            history.best = net.clone();
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            is_best,
        });
        if stopper.should_stop() {
            history.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    Ok(history)
}
