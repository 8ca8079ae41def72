//! Versioned, self-contained model files.
//!
//! A document is a JSON object with these fields:
//!
//! - `format_version`: currently 1.
//! - `kind`: `linear`, `forest`, `gbdt`, `mlp` or `lstm`; must match `model`.
//! - `columns`: input column names (query vector, or node vector for `lstm`).
//! - `feature_config`: how plans are featurized; needed by [`ModelDocument::predict_plan`].
//! - `tfidf`: the fitted TF-IDF vocabulary, if the semantic block is TF-IDF.
//! - `embedding_dim`: set when the semantic block came from external embeddings.
//! - `normalization`, `semantic_normalization`: statistics fit on training rows.
//! - `target_transform`: `log1p`; predictions are in that space.
//! - `train_config`, `split`: provenance of the fit.
//! - `model`: the parameters, tagged by kind.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::featurize::{
    aggregate_query_vector, inverse_target, node_sequence_vectors, EmbeddingTable, FeatureConfig, FeatureMode,
    NormStats, SemanticSource, TfidfModel, TARGET_TRANSFORM_ID,
};
use crate::plan_ingest::PlanTree;

use super::{FittedModel, LearnError, ModelKind, Normalizers, SequenceInput, TrainConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

fn default_transform() -> String {
    TARGET_TRANSFORM_ID.to_string()
}

/// The train/test split a model was fit under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub seed: u64,
    pub test_fraction: f64,
    pub train_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub kind: ModelKind,
    pub columns: Vec<String>,
    #[serde(default)]
    pub feature_config: Option<FeatureConfig>,
    #[serde(default)]
    pub tfidf: Option<TfidfModel>,
    #[serde(default)]
    pub embedding_dim: Option<usize>,
    #[serde(default)]
    pub normalization: Option<NormStats>,
    #[serde(default)]
    pub semantic_normalization: Option<NormStats>,
    #[serde(default = "default_transform")]
    pub target_transform: String,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub split: Option<SplitInfo>,
    pub model: FittedModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub predicted_ms: f64,
    pub predicted_log: f64,
}

impl ModelDocument {
    pub fn new(model: FittedModel, columns: Vec<String>, normalizers: Normalizers) -> Self {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            kind: model.kind(),
            columns,
            feature_config: None,
            tfidf: None,
            embedding_dim: None,
            normalization: Some(normalizers.features),
            semantic_normalization: normalizers.semantic,
            target_transform: default_transform(),
            train_config: None,
            split: None,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let value: Value = serde_json::from_str(text).map_err(|e| LearnError::Document(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| LearnError::Document("missing format_version".into()))?;
        if version != u64::from(MODEL_FORMAT_VERSION) {
            return Err(LearnError::Version(version));
        }
        let doc: ModelDocument = serde_json::from_value(value).map_err(|e| LearnError::Document(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    fn validate(&self) -> Result<(), LearnError> {
        if self.kind != self.model.kind() {
            return Err(LearnError::KindMismatch {
                expected: self.kind,
                found: self.model.kind(),
            });
        }
        if self.target_transform != TARGET_TRANSFORM_ID {
            return Err(LearnError::Document(format!(
                "unsupported target transform {}",
                self.target_transform
            )));
        }
        if let Some(w) = self.model.input_width() {
            if w != self.columns.len() {
                return Err(LearnError::Document(format!(
                    "model expects {w} inputs but lists {} columns",
                    self.columns.len()
                )));
            }
        }
        if let Some(n) = &self.normalization {
            if n.width() != self.columns.len() {
                return Err(LearnError::Document("normalization width differs from columns".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, self.to_json()).map_err(|e| LearnError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// Loads a document and insists on a model kind.
    pub fn load_as(path: &Path, kind: ModelKind) -> Result<Self, LearnError> {
        let doc = Self::load(path)?;
        if doc.kind != kind {
            return Err(LearnError::KindMismatch {
                expected: kind,
                found: doc.kind,
            });
        }
        Ok(doc)
    }

    pub fn normalizers(&self) -> Normalizers {
        Normalizers {
            features: self.normalization.clone().unwrap_or_else(|| NormStats {
                scheme: crate::featurize::NormScheme::None,
                offset: vec![0.0; self.columns.len()],
                scale: vec![1.0; self.columns.len()],
            }),
            semantic: self.semantic_normalization.clone(),
        }
    }

    /// Transformed-space prediction from a raw query vector.
    pub fn predict_vector(&self, raw: &[f64]) -> Result<f64, LearnError> {
        super::check_width(self.columns.len(), raw.len())?;
        let x = match &self.normalization {
            Some(n) => n.apply_row(raw),
            None => raw.to_vec(),
        };
        self.model.predict_row(&x)
    }

    /// Transformed-space prediction from raw node vectors and semantic vector.
    pub fn predict_nodes(&self, nodes: &[Vec<f64>], semantic: &[f64]) -> Result<f64, LearnError> {
        for n in nodes {
            super::check_width(self.columns.len(), n.len())?;
        }
        let input = SequenceInput {
            nodes: match &self.normalization {
                Some(n) => n.apply(nodes),
                None => nodes.to_vec(),
            },
            semantic: match &self.semantic_normalization {
                Some(s) => {
                    super::check_width(s.width(), semantic.len())?;
                    s.apply_row(semantic)
                }
                None => semantic.to_vec(),
            },
        };
        self.model.predict_sequence(&input)
    }

    /// Featurizes one plan with the stored configuration and predicts its runtime.
    pub fn predict_plan(&self, tree: &PlanTree, embeddings: Option<&EmbeddingTable>) -> Result<Prediction, LearnError> {
        let config = self
            .feature_config
            .as_ref()
            .ok_or_else(|| LearnError::Document("document has no feature_config; cannot featurize plans".into()))?;
        if config.mode == FeatureMode::Full && !tree.root.all_analyzed() {
            return Err(LearnError::ModeMismatch(
                "model was trained in full mode and needs an EXPLAIN ANALYZE plan; \
                 this plan has no actual metrics (use an estimate-only model for plain EXPLAIN)"
                    .into(),
            ));
        }
        let semantic = match (self.embedding_dim, &self.tfidf, embeddings) {
            (Some(_), _, Some(e)) => SemanticSource::External(e),
            (Some(_), _, None) => {
                return Err(LearnError::Config(
                    "model uses external embeddings; supply an embedding file".into(),
                ))
            }
            (None, Some(t), _) => SemanticSource::Tfidf(t),
            (None, None, _) => SemanticSource::None,
        };
        let log = if self.kind.is_sequence() {
            let nodes = node_sequence_vectors(tree, config)?;
            self.predict_nodes(&nodes, &semantic.vector(tree)?)?
        } else {
            self.predict_vector(&aggregate_query_vector(tree, config, &semantic)?)?
        };
        Ok(Prediction {
            predicted_ms: inverse_target(log),
            predicted_log: log,
        })
    }
}
