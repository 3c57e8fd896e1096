//! Experiment configuration: presets, TOML files, and flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::{Acquisition, ALConfig};
use crate::data::SplitFractions;
use crate::error::{Error, Result};
use crate::train::{TrainConfig, TrainMode};
use crate::uncertainty::EstimatorKind;

pub const PRESETS: [&str; 3] = ["mnist-lenetd2", "fmnist-lenetd2", "tiny"];

/// Where the data comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    /// IDX files in the data directory.
    Mnist,
    Fmnist,
    /// Gaussian blobs generated from the master seed.
    Synthetic,
}

impl std::str::FromStr for DatasetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetSource::Mnist),
            "fmnist" | "fashion-mnist" => Ok(DatasetSource::Fmnist),
            "synthetic" => Ok(DatasetSource::Synthetic),
            _ => Err(Error::Config(format!("unknown dataset '{s}' (expected mnist, fmnist, or synthetic)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 800,
            classes: 4,
            dim: 8,
            separation: 3.0,
        }
    }
}

/// One layer of settings; every field optional. Layers are merged
/// preset → file → flags, later layers winning.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub preset: Option<String>,
    pub dataset: Option<DatasetSource>,
    pub data_dir: Option<PathBuf>,
    /// Use only the first `limit` training images.
    pub limit: Option<usize>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub estimator: Option<EstimatorKind>,
    pub acquisition: Option<Acquisition>,
    pub mode: Option<TrainMode>,
    pub seed_size: Option<usize>,
    pub k: Option<usize>,
    pub rounds: Option<usize>,
    pub passes: Option<usize>,
    pub aue_samples: Option<usize>,
    pub ensemble_size: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    /// Epoch budgets used when `epochs` is unset, by training mode.
    pub epochs_ct: Option<usize>,
    pub epochs_rfs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub calibrate: Option<bool>,
    pub stratified_seed: Option<bool>,
    pub ece_bins: Option<usize>,
    pub split: Option<SplitFractions>,
    pub synthetic: Option<SyntheticConfig>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Copy every field set in `other` over `self`.
    pub fn merge(&mut self, other: &ConfigLayer) {
        overlay!(
            self, other, preset, dataset, data_dir, limit, out, jobs, estimator, acquisition, mode, seed_size, k,
            rounds, passes, aue_samples, ensemble_size, dropout_rate, hidden, epochs, epochs_ct, epochs_rfs,
            batch_size, learning_rate, patience, seed, calibrate, stratified_seed, ece_bins, split, synthetic,
        );
    }
}

/// Settings a named preset contributes.
pub fn preset(name: &str) -> Result<ConfigLayer> {
    let lenet = |dataset| ConfigLayer {
        preset: Some(name.to_string()),
        dataset: Some(dataset),
        seed_size: Some(1000),
        k: Some(100),
        rounds: Some(40),
        hidden: Some(vec![300, 100]),
        epochs_ct: Some(30),
        epochs_rfs: Some(100),
        split: Some(SplitFractions {
            train: 0.8,
            val: 0.05,
            test: 0.15,
        }),
        ..ConfigLayer::default()
    };
    match name {
        "mnist-lenetd2" => Ok(lenet(DatasetSource::Mnist)),
        "fmnist-lenetd2" => Ok(lenet(DatasetSource::Fmnist)),
        "tiny" => Ok(ConfigLayer {
            preset: Some(name.to_string()),
            dataset: Some(DatasetSource::Synthetic),
            synthetic: Some(SyntheticConfig::default()),
            split: Some(SplitFractions {
                train: 0.75,
                val: 0.05,
                test: 0.2,
            }),
            seed_size: Some(60),
            k: Some(30),
            rounds: Some(4),
            hidden: Some(vec![32]),
            epochs_ct: Some(30),
            epochs_rfs: Some(50),
            ..ConfigLayer::default()
        }),
        _ => Err(Error::Config(format!("unknown preset '{name}' (available: {})", PRESETS.join(", ")))),
    }
}

/// Fully resolved, validated settings for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub dataset: DatasetSource,
    pub data_dir: Option<PathBuf>,
    pub limit: Option<usize>,
    pub out: PathBuf,
    /// Worker threads; 0 lets the thread pool decide.
    pub jobs: usize,
    pub split: SplitFractions,
    pub synthetic: SyntheticConfig,
    pub active: ALConfig,
}

impl ExperimentConfig {
    /// Resolve `file` then `flags` on top of the preset either of them names.
    pub fn resolve(file: Option<&ConfigLayer>, flags: &ConfigLayer) -> Result<Self> {
        let mut user = ConfigLayer::default();
        if let Some(f) = file {
            user.merge(f);
        }
        user.merge(flags);
        let mut layer = match &user.preset {
            Some(name) => preset(name)?,
            None => ConfigLayer::default(),
        };
        layer.merge(&user);
        Self::from_layer(&layer)
    }

    pub fn from_layer(l: &ConfigLayer) -> Result<Self> {
        let base = ALConfig::default();
        let dataset = l
            .dataset
            .ok_or_else(|| Error::Config("no dataset given (set `dataset` or choose a preset)".into()))?;
        let mode = l.mode.unwrap_or(TrainMode::Ct);
        let epochs = l.epochs.unwrap_or_else(|| match mode {
            TrainMode::Ct => l.epochs_ct.unwrap_or(30),
            TrainMode::Rfs => l.epochs_rfs.unwrap_or(100),
        });
        let tdef = TrainConfig::default();
        let train = TrainConfig {
            epochs,
            batch_size: l.batch_size.unwrap_or(tdef.batch_size),
            learning_rate: l.learning_rate.unwrap_or(tdef.learning_rate),
            early_stop_patience: l.patience.unwrap_or(tdef.early_stop_patience),
            kl_scale_mode: tdef.kl_scale_mode,
            mode,
        };
        let estimator = l.estimator.unwrap_or(base.estimator);
        let ensemble_size = l.ensemble_size.unwrap_or(base.ensemble_size);
        // an ensemble scores one pass per member unless told otherwise
        let default_passes = if estimator == EstimatorKind::Ensemble { ensemble_size } else { base.passes };
        let passes = l.passes.unwrap_or(default_passes);
        let active = ALConfig {
            seed_size: l.seed_size.unwrap_or(base.seed_size),
            k: l.k.unwrap_or(base.k),
            rounds: l.rounds.unwrap_or(base.rounds),
            passes,
            aue_samples: l.aue_samples.unwrap_or(base.aue_samples),
            acquisition: l.acquisition.unwrap_or(base.acquisition),
            estimator,
            ensemble_size,
            dropout_rate: l.dropout_rate.unwrap_or(base.dropout_rate),
            hidden: l.hidden.clone().unwrap_or(base.hidden),
            train,
            master_seed: l.seed.unwrap_or(base.master_seed),
            stratified_seed: l.stratified_seed.unwrap_or(base.stratified_seed),
            calibrate: l.calibrate.unwrap_or(base.calibrate),
            ece_bins: l.ece_bins.unwrap_or(base.ece_bins),
        };
        let cfg = Self {
            preset: l.preset.clone(),
            dataset,
            data_dir: l.data_dir.clone(),
            limit: l.limit,
            out: l.out.clone().unwrap_or_else(|| PathBuf::from("runs/latest")),
            jobs: l.jobs.unwrap_or(0),
            split: l.split.unwrap_or(SplitFractions {
                train: 0.8,
                val: 0.05,
                test: 0.15,
            }),
            synthetic: l.synthetic.clone().unwrap_or_default(),
            active,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.active.validate()?;
        self.split.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.dataset != DatasetSource::Synthetic && self.data_dir.is_none() {
            return Err(Error::Config("IDX datasets need a data directory".into()));
        }
        if self.limit == Some(0) {
            return Err(Error::Config("limit must be positive".into()));
        }
        let s = &self.synthetic;
        if self.dataset == DatasetSource::Synthetic && (s.classes < 2 || s.dim == 0 || s.n < s.classes || !(s.separation > 0.0)) {
            return Err(Error::Config(format!("invalid synthetic settings {s:?}")));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
