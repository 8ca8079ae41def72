//! Feature engineering over parsed plans.
//!
//! Three feature families are produced per query:
//!
//! - scalar aggregates (sum, mean and max over nodes) of per-node metrics,
//! - structural statistics of the tree shape and operator mix,
//! - a semantic vector for the SQL text (TF-IDF or imported embeddings).
//!
//! Every column carries a [`Provenance`] tag. In [`FeatureMode::EstimateOnly`]
//! no column may be derived from an "Actual *" field; [`FeatureSchema::assert_no_actual`]
//! checks that.

mod corpus;
mod csvio;
mod embeddings;
mod node;
mod normalize;
mod tfidf;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::plan_ingest::{assign_level_numbers, flatten_preorder, PlanNode, PlanTree};

pub use corpus::{featurize_corpus, load_plan_corpus, FeaturizedCorpus, LoadedCorpus, SkippedPlan};
pub use csvio::{
    provenance_of, read_dataset_csv, read_node_csv, write_dataset_csv, write_node_csv, DATASET_PREFIX, DATASET_SUFFIX,
    NODE_CSV_HEADER,
};
pub use embeddings::EmbeddingTable;
pub use node::{
    node_features, node_rows, node_type_index, node_type_slot_name, structural_summary, NodeFeatureRow,
    StructuralSummary, NODE_TYPE_CATALOG, NODE_TYPE_SLOTS,
};
pub use normalize::{normalize_fit_apply, NormScheme, NormStats};
pub use tfidf::{tokenize, TfidfModel, TFIDF_FORMAT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("node {0} has no actual metrics; full mode needs an EXPLAIN ANALYZE plan")]
    MissingActuals(String),
    #[error("TF-IDF corpus is empty")]
    EmptyCorpus,
    #[error("no external embedding for query {0}")]
    MissingEmbedding(String),
    #[error("embedding file {path} line {line}: {message}")]
    Embedding { path: String, line: usize, message: String },
    #[error("feature column {0} is derived from actual execution metrics")]
    Leakage(String),
    #[error("schema mismatch in column {column}: {message}")]
    Schema { column: String, message: String },
    #[error("non-finite value in feature {column} for query {query_id}")]
    NonFinite { column: String, query_id: String },
    #[error("negative runtime {0} ms")]
    NegativeRuntime(f64),
    #[error("{0}")]
    Format(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Only planner estimates; usable before a query runs.
    EstimateOnly,
    /// Estimates plus actual execution metrics.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeTypeEncoding {
    OneHot,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub enabled: bool,
    pub max_vocab: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    pub node_type_encoding: NodeTypeEncoding,
    pub normalization: NormScheme,
    pub tfidf: TfidfConfig,
    pub external_embeddings: Option<PathBuf>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            mode: FeatureMode::Full,
            node_type_encoding: NodeTypeEncoding::OneHot,
            normalization: NormScheme::Zscore,
            tfidf: TfidfConfig {
                enabled: true,
                max_vocab: 256,
            },
            external_embeddings: None,
        }
    }
}

/// What a feature column is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Estimate,
    Actual,
    Structural,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<Column>,
}

impl FeatureSchema {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    fn push(&mut self, name: impl Into<String>, provenance: Provenance) {
        self.columns.push(Column {
            name: name.into(),
            provenance,
        });
    }

    /// Fails on the first column whose provenance is [`Provenance::Actual`].
    pub fn assert_no_actual(&self) -> Result<(), FeatureError> {
        match self.columns.iter().find(|c| c.provenance == Provenance::Actual) {
            Some(c) => Err(FeatureError::Leakage(c.name.clone())),
            None => Ok(()),
        }
    }
}

/// Per-node numeric metrics that feed both the aggregates and the node sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarColumn {
    StartupCost,
    TotalCost,
    PlanRows,
    PlanWidth,
    ActualStartupMs,
    ActualTotalMs,
    ActualRows,
    Loops,
    InputCardinality,
    OutputCardinality,
    BaseCardinality,
    CardinalityError,
    CostPerRow,
    TimePerLoop,
}

const ESTIMATE_COLUMNS: [ScalarColumn; 4] = [
    ScalarColumn::StartupCost,
    ScalarColumn::TotalCost,
    ScalarColumn::PlanRows,
    ScalarColumn::PlanWidth,
];

const FULL_COLUMNS: [ScalarColumn; 14] = [
    ScalarColumn::StartupCost,
    ScalarColumn::TotalCost,
    ScalarColumn::PlanRows,
    ScalarColumn::PlanWidth,
    ScalarColumn::ActualStartupMs,
    ScalarColumn::ActualTotalMs,
    ScalarColumn::ActualRows,
    ScalarColumn::Loops,
    ScalarColumn::InputCardinality,
    ScalarColumn::OutputCardinality,
    ScalarColumn::BaseCardinality,
    ScalarColumn::CardinalityError,
    ScalarColumn::CostPerRow,
    ScalarColumn::TimePerLoop,
];

impl ScalarColumn {
    pub fn for_mode(mode: FeatureMode) -> &'static [ScalarColumn] {
        match mode {
            FeatureMode::EstimateOnly => &ESTIMATE_COLUMNS,
            FeatureMode::Full => &FULL_COLUMNS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarColumn::StartupCost => "startup_cost",
            ScalarColumn::TotalCost => "total_cost",
            ScalarColumn::PlanRows => "plan_rows",
            ScalarColumn::PlanWidth => "plan_width",
            ScalarColumn::ActualStartupMs => "actual_startup_ms",
            ScalarColumn::ActualTotalMs => "actual_total_ms",
            ScalarColumn::ActualRows => "actual_rows",
            ScalarColumn::Loops => "loops",
            ScalarColumn::InputCardinality => "input_cardinality",
            ScalarColumn::OutputCardinality => "output_cardinality",
            ScalarColumn::BaseCardinality => "base_cardinality",
            ScalarColumn::CardinalityError => "cardinality_error",
            ScalarColumn::CostPerRow => "cost_per_row",
            ScalarColumn::TimePerLoop => "time_per_loop",
        }
    }

    pub fn provenance(self) -> Provenance {
        match self {
            ScalarColumn::StartupCost | ScalarColumn::TotalCost | ScalarColumn::PlanRows | ScalarColumn::PlanWidth => {
                Provenance::Estimate
            }
            _ => Provenance::Actual,
        }
    }

    fn value(self, node: &PlanNode, row: Option<&NodeFeatureRow>) -> Result<f64, FeatureError> {
        let actual = || row.ok_or_else(|| FeatureError::MissingActuals(node.node_type.clone()));
        Ok(match self {
            ScalarColumn::StartupCost => node.startup_cost,
            ScalarColumn::TotalCost => node.total_cost,
            ScalarColumn::PlanRows => node.plan_rows,
            ScalarColumn::PlanWidth => node.plan_width,
            ScalarColumn::ActualStartupMs => actual()?.st,
            ScalarColumn::ActualTotalMs => actual()?.tt,
            ScalarColumn::ActualRows => actual()?.actual_rows,
            ScalarColumn::Loops => actual()?.loops,
            ScalarColumn::InputCardinality => actual()?.ic,
            ScalarColumn::OutputCardinality => actual()?.oc,
            ScalarColumn::BaseCardinality => actual()?.bc,
            ScalarColumn::CardinalityError => actual()?.cardinality_error,
            ScalarColumn::CostPerRow => actual()?.cost_per_row,
            ScalarColumn::TimePerLoop => actual()?.time_per_loop,
        })
    }
}

/// Where the semantic block of a query vector comes from.
#[derive(Debug, Clone, Copy)]
pub enum SemanticSource<'a> {
    None,
    Tfidf(&'a TfidfModel),
    External(&'a EmbeddingTable),
}

impl SemanticSource<'_> {
    pub fn width(&self) -> usize {
        match self {
            SemanticSource::None => 0,
            SemanticSource::Tfidf(m) => m.width(),
            SemanticSource::External(t) => t.dim,
        }
    }

    fn column_names(&self) -> Vec<String> {
        match self {
            SemanticSource::None => Vec::new(),
            SemanticSource::Tfidf(m) => m.vocabulary.iter().map(|t| format!("tfidf_{t}")).collect(),
            SemanticSource::External(t) => (0..t.dim).map(|i| format!("embed_{i}")).collect(),
        }
    }

    /// Semantic vector for a tree; external embeddings are keyed by query id.
    pub fn vector(&self, tree: &PlanTree) -> Result<Vec<f64>, FeatureError> {
        match self {
            SemanticSource::None => Ok(Vec::new()),
            SemanticSource::Tfidf(m) => Ok(m.transform(&tree.query_text)),
            SemanticSource::External(t) => t
                .get(&tree.query_id)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| FeatureError::MissingEmbedding(tree.query_id.clone())),
        }
    }
}

/// Column layout of the query-level vector. Width depends only on the config
/// and the semantic source.
pub fn query_schema(config: &FeatureConfig, semantic: &SemanticSource<'_>) -> FeatureSchema {
    let mut schema = FeatureSchema::default();
    for col in ScalarColumn::for_mode(config.mode) {
        for agg in ["sum", "mean", "max"] {
            schema.push(format!("{agg}_{}", col.name()), col.provenance());
        }
    }
    for name in ["node_count", "max_depth", "mean_depth", "parallel_aware_count"] {
        schema.push(name, Provenance::Structural);
    }
    match config.node_type_encoding {
        NodeTypeEncoding::OneHot => {
            for slot in 0..NODE_TYPE_SLOTS {
                schema.push(format!("count_{}", node_type_slot_name(slot)), Provenance::Structural);
            }
        }
        NodeTypeEncoding::Label => schema.push("root_node_type_label", Provenance::Structural),
    }
    for name in semantic.column_names() {
        schema.push(name, Provenance::Semantic);
    }
    schema
}

fn rows_if_needed(tree: &PlanTree, mode: FeatureMode) -> Result<Option<Vec<NodeFeatureRow>>, FeatureError> {
    match mode {
        FeatureMode::EstimateOnly => Ok(None),
        FeatureMode::Full => node_rows(tree).map(Some),
    }
}

/// Fixed-order concatenation of scalar aggregates, structural statistics and
/// the semantic vector, laid out as [`query_schema`] describes.
pub fn aggregate_query_vector(
    tree: &PlanTree,
    config: &FeatureConfig,
    semantic: &SemanticSource<'_>,
) -> Result<Vec<f64>, FeatureError> {
    let nodes = flatten_preorder(tree);
    let rows = rows_if_needed(tree, config.mode)?;
    let mut out = Vec::new();
    for col in ScalarColumn::for_mode(config.mode) {
        let values = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| col.value(n, rows.as_ref().map(|r| &r[i])))
            .collect::<Result<Vec<f64>, _>>()?;
        let sum: f64 = values.iter().sum();
        out.push(sum);
        out.push(sum / values.len() as f64);
        out.push(values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    let s = structural_summary(tree);
    out.extend([
        s.node_count as f64,
        f64::from(s.max_depth),
        s.mean_depth,
        s.parallel_aware_count as f64,
    ]);
    match config.node_type_encoding {
        NodeTypeEncoding::OneHot => out.extend(s.type_counts.iter().map(|c| *c as f64)),
        NodeTypeEncoding::Label => out.push(s.root_type as f64),
    }
    out.extend(semantic.vector(tree)?);
    Ok(out)
}

/// Column layout of one node vector in a sequence.
pub fn sequence_schema(config: &FeatureConfig) -> FeatureSchema {
    let mut schema = FeatureSchema::default();
    for col in ScalarColumn::for_mode(config.mode) {
        schema.push(col.name(), col.provenance());
    }
    match config.node_type_encoding {
        NodeTypeEncoding::OneHot => {
            for slot in 0..NODE_TYPE_SLOTS {
                schema.push(format!("is_{}", node_type_slot_name(slot)), Provenance::Structural);
            }
        }
        NodeTypeEncoding::Label => schema.push("node_type_label", Provenance::Structural),
    }
    schema.push("depth", Provenance::Structural);
    schema.push("subtree_size", Provenance::Structural);
    schema
}

/// Pre-order node vectors without a semantic block.
pub fn node_sequence_vectors(tree: &PlanTree, config: &FeatureConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    let rows = rows_if_needed(tree, config.mode)?;
    assign_level_numbers(tree)
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut v = Vec::new();
            for col in ScalarColumn::for_mode(config.mode) {
                v.push(col.value(e.node, rows.as_ref().map(|r| &r[i]))?);
            }
            let ty = node_type_index(&e.node.node_type);
            match config.node_type_encoding {
                NodeTypeEncoding::OneHot => {
                    v.extend((0..NODE_TYPE_SLOTS).map(|slot| if slot == ty { 1.0 } else { 0.0 }))
                }
                NodeTypeEncoding::Label => v.push(ty as f64),
            }
            v.push(f64::from(e.level.depth));
            v.push(e.node.node_count() as f64);
            Ok(v)
        })
        .collect()
}

pub const TARGET_TRANSFORM_ID: &str = "log1p";

/// `ln(1 + ms)`.
pub fn transform_target(execution_time_ms: f64) -> Result<f64, FeatureError> {
    if execution_time_ms < 0.0 || execution_time_ms.is_nan() {
        return Err(FeatureError::NegativeRuntime(execution_time_ms));
    }
    Ok(execution_time_ms.ln_1p())
}

pub fn inverse_target(transformed: f64) -> f64 {
    transformed.exp_m1()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub query_id: String,
    pub template_id: Option<u32>,
    pub features: Vec<f64>,
    pub target_ms: f64,
    pub target_log: f64,
}

/// Query-level feature matrix with raw and transformed targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target_log).collect()
    }

    pub fn template_ids(&self) -> Vec<Option<u32>> {
        self.rows.iter().map(|r| r.template_id).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Rejects NaN/inf features and duplicate column names.
    pub fn validate(&self) -> Result<(), FeatureError> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.schema.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(FeatureError::Schema {
                    column: c.name.clone(),
                    message: "duplicate column name".into(),
                });
            }
        }
        for r in &self.rows {
            if r.features.len() != self.schema.width() {
                return Err(FeatureError::Schema {
                    column: format!("<row {}>", r.query_id),
                    message: format!("width {} != {}", r.features.len(), self.schema.width()),
                });
            }
            if let Some(j) = r.features.iter().position(|v| !v.is_finite()) {
                return Err(FeatureError::NonFinite {
                    column: self.schema.columns[j].name.clone(),
                    query_id: r.query_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Node sequences per query, the input of the recurrent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub query_id: String,
    pub template_id: Option<u32>,
    pub nodes: Vec<Vec<f64>>,
    pub semantic: Vec<f64>,
    pub target_ms: f64,
    pub target_log: f64,
}

pub const SEQUENCE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSet {
    pub format_version: u32,
    pub node_schema: FeatureSchema,
    pub semantic_width: usize,
    pub records: Vec<SequenceRecord>,
}

/// File names inside a featurize output directory.
pub mod files {
    pub const NODES: &str = "nodes.csv";
    pub const DATASET: &str = "dataset.csv";
    pub const SEQUENCES: &str = "sequences.json";
    pub const TFIDF: &str = "tfidf.json";
    pub const NORMALIZATION: &str = "normalization.json";
    pub const STATE: &str = "featurizer.json";
    pub const SKIPPED: &str = "skipped.tsv";
}

pub const FEATURIZER_FORMAT_VERSION: u32 = 1;

/// Everything needed to featurize new plans exactly like a stored dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerState {
    pub format_version: u32,
    pub config: FeatureConfig,
    pub schema: FeatureSchema,
    pub sequence_schema: FeatureSchema,
    pub tfidf: Option<TfidfModel>,
    pub embedding_dim: Option<usize>,
    pub plans_featurized: usize,
    pub plans_skipped: usize,
}

fn read_text(path: &std::path::Path) -> Result<String, FeatureError> {
    std::fs::read_to_string(path).map_err(|e| FeatureError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

impl FeaturizerState {
    pub fn load(dir: &std::path::Path) -> Result<Self, FeatureError> {
        let path = dir.join(files::STATE);
        let state: FeaturizerState = serde_json::from_str(&read_text(&path)?)
            .map_err(|e| FeatureError::Format(format!("{}: {e}", path.display())))?;
        if state.format_version != FEATURIZER_FORMAT_VERSION {
            return Err(FeatureError::Format(format!(
                "{}: unsupported format version {}",
                path.display(),
                state.format_version
            )));
        }
        Ok(state)
    }
}

/// Reads the node-sequence sidecar of a featurize output directory.
pub fn read_sequences(path: &std::path::Path) -> Result<SequenceSet, FeatureError> {
    let set: SequenceSet = serde_json::from_str(&read_text(path)?)
        .map_err(|e| FeatureError::Format(format!("{}: {e}", path.display())))?;
    if set.format_version != SEQUENCE_FORMAT_VERSION {
        return Err(FeatureError::Format(format!(
            "{}: unsupported format version {}",
            path.display(),
            set.format_version
        )));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan_ingest::parse_plan_document;

    fn fixture() -> PlanTree {
        parse_plan_document(include_str!("../../tests/fixtures/tpch_q_limit.json")).unwrap()
    }

    fn estimate_cfg() -> FeatureConfig {
        FeatureConfig {
            mode: FeatureMode::EstimateOnly,
            tfidf: TfidfConfig {
                enabled: false,
                max_vocab: 0,
            },
            ..FeatureConfig::default()
        }
    }

    #[test]
    fn estimate_only_total_cost_sum() {
        let cfg = estimate_cfg();
        let schema = query_schema(&cfg, &SemanticSource::None);
        let v = aggregate_query_vector(&fixture(), &cfg, &SemanticSource::None).unwrap();
        assert_eq!(v.len(), schema.width());
        let j = schema.names().iter().position(|n| n == "sum_total_cost").unwrap();
        assert!((v[j] - 1304613.67).abs() < 1e-6);
        assert!(schema.assert_no_actual().is_ok());
    }

    #[test]
    fn semantic_block_separates_identical_plans() {
        let cfg = FeatureConfig {
            mode: FeatureMode::EstimateOnly,
            ..FeatureConfig::default()
        };
        let a = fixture().with_query_text("select a from lineitem");
        let b = fixture().with_query_text("select b from orders");
        let tfidf = TfidfModel::fit(&[&a.query_text, &b.query_text], 64).unwrap();
        let src = SemanticSource::Tfidf(&tfidf);
        let va = aggregate_query_vector(&a, &cfg, &src).unwrap();
        let vb = aggregate_query_vector(&b, &cfg, &src).unwrap();
        let k = va.len() - tfidf.width();
        assert_eq!(va[..k], vb[..k]);
        assert_ne!(va[k..], vb[k..]);
    }

    #[test]
    fn empty_semantic_block() {
        let cfg = estimate_cfg();
        assert_eq!(SemanticSource::None.width(), 0);
        let schema = query_schema(&cfg, &SemanticSource::None);
        assert!(schema.columns.iter().all(|c| c.provenance != Provenance::Semantic));
    }

    #[test]
    fn full_mode_has_actual_columns() {
        let schema = query_schema(&FeatureConfig::default(), &SemanticSource::None);
        assert!(matches!(schema.assert_no_actual(), Err(FeatureError::Leakage(_))));
    }

    #[test]
    fn label_encoding_width() {
        let cfg = FeatureConfig {
            node_type_encoding: NodeTypeEncoding::Label,
            ..estimate_cfg()
        };
        let v = aggregate_query_vector(&fixture(), &cfg, &SemanticSource::None).unwrap();
        assert_eq!(v.len(), query_schema(&cfg, &SemanticSource::None).width());
        assert_eq!(*v.last().unwrap(), node_type_index("Limit") as f64);
        let seq = node_sequence_vectors(&fixture(), &cfg).unwrap();
        assert!(seq.iter().all(|n| n.len() == sequence_schema(&cfg).width()));
    }

    #[test]
    fn sequences_follow_preorder() {
        let cfg = FeatureConfig::default();
        let seq = node_sequence_vectors(&fixture(), &cfg).unwrap();
        assert_eq!(seq.len(), 6);
        let schema = sequence_schema(&cfg);
        let depth = schema.names().iter().position(|n| n == "depth").unwrap();
        let depths: Vec<f64> = seq.iter().map(|v| v[depth]).collect();
        assert_eq!(depths, vec![1.0, 2.0, 3.0, 4.0, 4.0, 5.0]);
        let size = depth + 1;
        assert_eq!(seq[0][size], 6.0);
    }

    #[test]
    fn full_mode_rejects_plain_plans() {
        let plain = r#"[{"Plan": {"Node Type": "Seq Scan", "Startup Cost": 0, "Total Cost": 1,
            "Plan Rows": 1, "Plan Width": 4}}]"#;
        let tree = crate::plan_ingest::parse_plan_document_lenient(plain).unwrap();
        assert!(matches!(
            aggregate_query_vector(&tree, &FeatureConfig::default(), &SemanticSource::None),
            Err(FeatureError::MissingActuals(_))
        ));
        assert!(aggregate_query_vector(&tree, &estimate_cfg(), &SemanticSource::None).is_ok());
    }

    #[test]
    fn target_transform() {
        assert_eq!(transform_target(0.0).unwrap(), 0.0);
        assert!((transform_target(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((transform_target(949.711).unwrap() - 950.711f64.ln()).abs() < 1e-15);
        assert!((transform_target(949.711).unwrap() - 6.857210).abs() < 1e-6);
        assert!(transform_target(-1.0).is_err());
        let y = transform_target(123.4).unwrap();
        assert!((inverse_target(y) - 123.4).abs() < 1e-10);
    }
}
