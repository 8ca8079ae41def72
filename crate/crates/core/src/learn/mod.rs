//! Runtime regressors: ridge, forest, gradient-boosted trees, feedforward
//! network and a recurrent model over node sequences, plus grid search and
//! self-contained model documents.

mod document;
mod forest;
mod gbdt;
mod grid;
mod linear;
mod lstm;
mod mlp;
mod optim;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::featurize::{Dataset, FeatureError, NormScheme, NormStats, SequenceSet};

pub use document::{ModelDocument, Prediction, SplitInfo, MODEL_FORMAT_VERSION};
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use gbdt::{fit_gbdt, fit_gbdt_with, GbdtModel, GbdtParams};
pub use grid::{grid_search, write_cv_table, CvRow, GridResult, GridSearchSpec};
pub use linear::{fit_linear, LinearModel, FALLBACK_LAMBDA};
pub use lstm::{fit_lstm, LstmModel, LstmParams, SequenceInput};
pub use mlp::{fit_mlp, MlpModel, MlpParams};
pub use optim::{clip_global_norm, Adam};
pub use tree::{fit_tree, RegressionTree, TreeNode, TreeParams};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("training set is empty")]
    Empty,
    #[error("feature width is zero")]
    ZeroWidth,
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fold {fold} of {k} has no rows; reduce the fold count")]
    EmptyFold { fold: usize, k: usize },
    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: ModelKind, found: ModelKind },
    #[error("unsupported model format version {0}")]
    Version(u64),
    #[error("model document: {0}")]
    Document(String),
    #[error("{0}")]
    ModeMismatch(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub(crate) fn check_width(expected: usize, got: usize) -> Result<(), LearnError> {
    if expected == got {
        Ok(())
    } else {
        Err(LearnError::WidthMismatch { expected, got })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Forest,
    Gbdt,
    Mlp,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Linear,
        ModelKind::Forest,
        ModelKind::Gbdt,
        ModelKind::Mlp,
        ModelKind::Lstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Forest => "forest",
            ModelKind::Gbdt => "gbdt",
            ModelKind::Mlp => "mlp",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn is_sequence(self) -> bool {
        self == ModelKind::Lstm
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LearnError::Config(format!("unknown model kind {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub lambda: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { lambda: 0.0 }
    }
}

/// Fully resolved hyperparameters of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TrainConfig {
    Linear(LinearParams),
    Forest(ForestParams),
    Gbdt(GbdtParams),
    Mlp(MlpParams),
    Lstm(LstmParams),
}

impl TrainConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Linear => TrainConfig::Linear(LinearParams::default()),
            ModelKind::Forest => TrainConfig::Forest(ForestParams::default()),
            ModelKind::Gbdt => TrainConfig::Gbdt(GbdtParams::default()),
            ModelKind::Mlp => TrainConfig::Mlp(MlpParams::default()),
            ModelKind::Lstm => TrainConfig::Lstm(LstmParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TrainConfig::Linear(_) => ModelKind::Linear,
            TrainConfig::Forest(_) => ModelKind::Forest,
            TrainConfig::Gbdt(_) => ModelKind::Gbdt,
            TrainConfig::Mlp(_) => ModelKind::Mlp,
            TrainConfig::Lstm(_) => ModelKind::Lstm,
        }
    }
}

/// A trained model of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearModel),
    Forest(ForestModel),
    Gbdt(GbdtModel),
    Mlp(MlpModel),
    Lstm(LstmModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Linear(_) => ModelKind::Linear,
            FittedModel::Forest(_) => ModelKind::Forest,
            FittedModel::Gbdt(_) => ModelKind::Gbdt,
            FittedModel::Mlp(_) => ModelKind::Mlp,
            FittedModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    /// Input width per row (tabular) or per node (sequence).
    pub fn input_width(&self) -> Option<usize> {
        match self {
            FittedModel::Linear(m) => Some(m.weights.len()),
            FittedModel::Forest(m) => m.trees.first().map(|t| t.n_features),
            FittedModel::Gbdt(m) => Some(m.n_features),
            FittedModel::Mlp(m) => m.sizes.first().copied(),
            FittedModel::Lstm(m) => Some(m.input_width),
        }
    }

    /// Prediction on an already normalized tabular row.
    pub fn predict_row(&self, x: &[f64]) -> Result<f64, LearnError> {
        match self {
            FittedModel::Linear(m) => m.predict(x),
            FittedModel::Forest(m) => m.predict(x),
            FittedModel::Gbdt(m) => m.predict(x),
            FittedModel::Mlp(m) => m.predict(x),
            FittedModel::Lstm(_) => Err(LearnError::Config("sequence model needs a node sequence".into())),
        }
    }

    /// Prediction on an already normalized sequence.
    pub fn predict_sequence(&self, input: &SequenceInput) -> Result<f64, LearnError> {
        match self {
            FittedModel::Lstm(m) => m.predict(input),
            _ => Err(LearnError::Config(format!("{} model takes a feature row", self.kind()))),
        }
    }
}

/// Normalization statistics learned alongside a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizers {
    /// Query vectors for tabular models, node vectors for sequence models.
    pub features: NormStats,
    pub semantic: Option<NormStats>,
}

/// Everything a training run can draw from.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub dataset: &'a Dataset,
    /// Node sequences aligned with `dataset.rows`; needed by sequence models.
    pub sequences: Option<&'a SequenceSet>,
    pub normalization: NormScheme,
}

impl TrainingData<'_> {
    fn sequences_for(&self, kind: ModelKind) -> Result<&SequenceSet, LearnError> {
        let seq = self
            .sequences
            .ok_or_else(|| LearnError::Config(format!("{kind} model needs the node-sequence file")))?;
        if seq.records.len() != self.dataset.len()
            || seq
                .records
                .iter()
                .zip(&self.dataset.rows)
                .any(|(s, r)| s.query_id != r.query_id)
        {
            return Err(LearnError::Config(
                "node sequences are not aligned with the dataset".into(),
            ));
        }
        Ok(seq)
    }

    fn tabular(&self, idx: &[usize], stats: &NormStats) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x = idx
            .iter()
            .map(|&i| stats.apply_row(&self.dataset.rows[i].features))
            .collect();
        let y = idx.iter().map(|&i| self.dataset.rows[i].target_log).collect();
        (x, y)
    }

    fn sequence_inputs(&self, seq: &SequenceSet, idx: &[usize], norm: &Normalizers) -> (Vec<SequenceInput>, Vec<f64>) {
        let inputs = idx
            .iter()
            .map(|&i| {
                let r = &seq.records[i];
                SequenceInput {
                    nodes: norm.features.apply(&r.nodes),
                    semantic: match &norm.semantic {
                        Some(s) => s.apply_row(&r.semantic),
                        None => r.semantic.clone(),
                    },
                }
            })
            .collect();
        let y = idx.iter().map(|&i| self.dataset.rows[i].target_log).collect();
        (inputs, y)
    }

    /// Fits normalization on the rows in `idx` only.
    pub fn fit_normalizers(&self, kind: ModelKind, idx: &[usize]) -> Result<Normalizers, LearnError> {
        if kind.is_sequence() {
            let seq = self.sequences_for(kind)?;
            let nodes: Vec<Vec<f64>> = idx.iter().flat_map(|&i| seq.records[i].nodes.iter().cloned()).collect();
            let semantic: Vec<Vec<f64>> = idx.iter().map(|&i| seq.records[i].semantic.clone()).collect();
            Ok(Normalizers {
                features: NormStats::fit(&nodes, self.normalization),
                semantic: Some(NormStats::fit(&semantic, self.normalization)),
            })
        } else {
            let x: Vec<Vec<f64>> = idx.iter().map(|&i| self.dataset.rows[i].features.clone()).collect();
            Ok(Normalizers {
                features: NormStats::fit(&x, self.normalization),
                semantic: None,
            })
        }
    }

    /// Fits normalization and a model on the rows in `idx`.
    pub fn fit(&self, config: &TrainConfig, idx: &[usize]) -> Result<(FittedModel, Normalizers), LearnError> {
        if idx.is_empty() {
            return Err(LearnError::Empty);
        }
        let kind = config.kind();
        let norm = self.fit_normalizers(kind, idx)?;
        let model = if kind.is_sequence() {
            let seq = self.sequences_for(kind)?;
            let (inputs, y) = self.sequence_inputs(seq, idx, &norm);
            match config {
                TrainConfig::Lstm(p) => FittedModel::Lstm(fit_lstm(&inputs, &y, p)?),
                _ => unreachable!("sequence kinds are handled above"),
            }
        } else {
            let (x, y) = self.tabular(idx, &norm.features);
            match config {
                TrainConfig::Linear(p) => FittedModel::Linear(fit_linear(&x, &y, p.lambda)?),
                TrainConfig::Forest(p) => FittedModel::Forest(fit_forest(&x, &y, p)?),
                TrainConfig::Gbdt(p) => FittedModel::Gbdt(fit_gbdt(&x, &y, p)?),
                TrainConfig::Mlp(p) => FittedModel::Mlp(fit_mlp(&x, &y, p)?),
                TrainConfig::Lstm(_) => unreachable!("sequence kinds are handled above"),
            }
        };
        Ok((model, norm))
    }

    /// Transformed-space predictions for the rows in `idx`.
    pub fn predict(&self, model: &FittedModel, norm: &Normalizers, idx: &[usize]) -> Result<Vec<f64>, LearnError> {
        if model.kind().is_sequence() {
            let seq = self.sequences_for(model.kind())?;
            let (inputs, _) = self.sequence_inputs(seq, idx, norm);
            inputs.iter().map(|s| model.predict_sequence(s)).collect()
        } else {
            let (x, _) = self.tabular(idx, &norm.features);
            x.iter().map(|r| model.predict_row(r)).collect()
        }
    }

    /// Mean squared error in transformed space on the rows in `idx`.
    pub fn score(&self, model: &FittedModel, norm: &Normalizers, idx: &[usize]) -> Result<f64, LearnError> {
        let pred = self.predict(model, norm, idx)?;
        Ok(idx
            .iter()
            .zip(&pred)
            .map(|(&i, p)| (self.dataset.rows[i].target_log - p).powi(2))
            .sum::<f64>()
            / idx.len() as f64)
    }
}
