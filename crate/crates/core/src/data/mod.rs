//! Datasets: IDX image files, numeric tables, synthetic generators, splitting.

pub mod idx;
pub mod split;
pub mod synthetic;
pub mod table;

pub use idx::{load_idx_dataset, load_idx_images, load_idx_labels, write_idx_images, write_idx_labels};
pub use split::{split, split_with_test_range, SplitFractions};
pub use synthetic::{gen_synthetic_classification, gen_synthetic_regression, SyntheticRegression};
pub use table::{load_regression_table, parse_regression_table, Standardization};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, classes: usize },
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Classes { labels, classes } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Targets::Values(v) => Targets::Values(indices.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `N × d`, finite.
    pub features: Tensor,
    pub targets: Targets,
    /// Feature standardization applied at load time, if any.
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Tensor, targets: Targets) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::Data(format!("features must be N × d, got shape {:?}", features.shape())));
        }
        if features.rows() != targets.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} targets",
                features.rows(),
                targets.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Data("non-finite feature value".into()));
        }
        match &targets {
            Targets::Classes { labels, classes } => {
                if let Some(bad) = labels.iter().find(|&&l| l >= *classes) {
                    return Err(Error::Data(format!("label {bad} outside [0, {classes})")));
                }
            }
            Targets::Values(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Data("non-finite regression target".into()));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            features,
            targets,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn kind(&self) -> TaskKind {
        match self.targets {
            Targets::Classes { .. } => TaskKind::Classification,
            Targets::Values(_) => TaskKind::Regression,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.targets {
            Targets::Classes { classes, .. } => Some(classes),
            Targets::Values(_) => None,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }

    /// Network output width: class count, or 1 for regression.
    pub fn output_dim(&self) -> usize {
        self.num_classes().unwrap_or(1)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(indices),
            targets: self.targets.select(indices),
            standardization: self.standardization.clone(),
        }
    }
}
