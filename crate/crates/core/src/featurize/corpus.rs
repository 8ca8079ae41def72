//! Loading collected plans and turning a whole corpus into a dataset.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::collector::{load_manifest, read_query_text, Status};
use crate::plan_ingest::{parse_plan_document_lenient, PlanTree};

use super::{
    aggregate_query_vector, node_rows, node_sequence_vectors, query_schema, sequence_schema, transform_target, Dataset,
    DatasetRow, EmbeddingTable, FeatureConfig, FeatureError, FeatureMode, NodeFeatureRow, SemanticSource,
    SequenceRecord, SequenceSet, TfidfModel, SEQUENCE_FORMAT_VERSION,
};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SkippedPlan {
    pub source: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub trees: Vec<PlanTree>,
    pub skipped: Vec<SkippedPlan>,
}

fn io(path: &Path, e: impl ToString) -> FeatureError {
    FeatureError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Loads plans from a collector output directory (with `manifest.tsv`) or
/// from a directory of bare `*.json` plan documents.
///
/// Unparseable plans and failed statements are reported in `skipped`.
pub fn load_plan_corpus(dir: &Path) -> Result<LoadedCorpus, FeatureError> {
    let manifest = dir.join("manifest.tsv");
    let mut trees = Vec::new();
    let mut skipped = Vec::new();
    if manifest.exists() {
        let records = load_manifest(&manifest).map_err(|e| io(&manifest, e))?;
        for rec in records {
            let source = rec.query_id.clone();
            let plan_path = match (&rec.status, &rec.plan_path) {
                (Status::Ok, Some(p)) => dir.join(p),
                (status, _) => {
                    skipped.push(SkippedPlan {
                        source,
                        reason: format!("status {status:?}"),
                    });
                    continue;
                }
            };
            let text = std::fs::read_to_string(&plan_path).map_err(|e| io(&plan_path, e))?;
            match parse_plan_document_lenient(&text) {
                Ok(tree) => {
                    let sql = read_query_text(dir, &rec).map_err(|e| io(dir, e))?;
                    let mut tree = tree.with_query_text(sql).with_template_id(Some(rec.template_id));
                    tree.query_id = rec.query_id.clone();
                    trees.push(tree);
                }
                Err(e) => skipped.push(SkippedPlan {
                    source,
                    reason: e.to_string(),
                }),
            }
        }
    } else {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
            match parse_plan_document_lenient(&text) {
                Ok(mut tree) => {
                    if tree.query_text.is_empty() {
                        if let Some(stem) = path.file_stem() {
                            tree.query_id = stem.to_string_lossy().into_owned();
                        }
                    }
                    trees.push(tree);
                }
                Err(e) => skipped.push(SkippedPlan {
                    source: path.display().to_string(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    Ok(LoadedCorpus { trees, skipped })
}

/// Everything `featurize` produces for one corpus.
#[derive(Debug, Clone)]
pub struct FeaturizedCorpus {
    pub dataset: Dataset,
    pub node_rows: Vec<NodeFeatureRow>,
    pub sequences: SequenceSet,
    pub tfidf: Option<TfidfModel>,
    pub embedding_dim: Option<usize>,
    pub skipped: Vec<SkippedPlan>,
}

/// Builds the query-level dataset, node rows and node sequences.
///
/// Plans without a runtime, or without actual metrics in full mode, are
/// skipped. TF-IDF is fit on the SQL texts of the kept plans unless
/// `embeddings` is given.
pub fn featurize_corpus(
    corpus: &LoadedCorpus,
    config: &FeatureConfig,
    embeddings: Option<&EmbeddingTable>,
) -> Result<FeaturizedCorpus, FeatureError> {
    let mut skipped = corpus.skipped.clone();
    let mut kept = Vec::new();
    for tree in &corpus.trees {
        let reason = if tree.execution_time_ms.is_none() {
            Some("plan has no Execution Time")
        } else if config.mode == FeatureMode::Full && !tree.is_analyzed() {
            Some("full mode needs actual metrics on every node")
        } else {
            None
        };
        match reason {
            Some(r) => skipped.push(SkippedPlan {
                source: tree.query_id.clone(),
                reason: r.into(),
            }),
            None => kept.push(tree),
        }
    }

    let tfidf = match (embeddings, config.tfidf.enabled) {
        (None, true) if !kept.is_empty() => {
            let texts: Vec<&str> = kept.iter().map(|t| t.query_text.as_str()).collect();
            Some(TfidfModel::fit(&texts, config.tfidf.max_vocab)?)
        }
        _ => None,
    };
    let semantic = match (embeddings, &tfidf) {
        (Some(e), _) => SemanticSource::External(e),
        (None, Some(m)) => SemanticSource::Tfidf(m),
        (None, None) => SemanticSource::None,
    };

    let schema = query_schema(config, &semantic);
    if config.mode == FeatureMode::EstimateOnly {
        schema.assert_no_actual()?;
    }

    type PerTree = (DatasetRow, SequenceRecord, Vec<NodeFeatureRow>);
    let per_tree: Vec<PerTree> = kept
        .par_iter()
        .map(|tree| -> Result<PerTree, FeatureError> {
            let ms = tree.execution_time_ms.unwrap_or_default();
            let target_log = transform_target(ms)?;
            let row = DatasetRow {
                query_id: tree.query_id.clone(),
                template_id: tree.template_id,
                features: aggregate_query_vector(tree, config, &semantic)?,
                target_ms: ms,
                target_log,
            };
            let seq = SequenceRecord {
                query_id: tree.query_id.clone(),
                template_id: tree.template_id,
                nodes: node_sequence_vectors(tree, config)?,
                semantic: semantic.vector(tree)?,
                target_ms: ms,
                target_log,
            };
            let nodes = if tree.is_analyzed() {
                node_rows(tree)?
            } else {
                Vec::new()
            };
            Ok((row, seq, nodes))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(per_tree.len());
    let mut records = Vec::with_capacity(per_tree.len());
    let mut all_nodes = Vec::new();
    for (row, seq, nodes) in per_tree {
        rows.push(row);
        records.push(seq);
        all_nodes.extend(nodes);
    }
    let dataset = Dataset { schema, rows };
    dataset.validate()?;
    Ok(FeaturizedCorpus {
        dataset,
        node_rows: all_nodes,
        sequences: SequenceSet {
            format_version: SEQUENCE_FORMAT_VERSION,
            node_schema: sequence_schema(config),
            semantic_width: semantic.width(),
            records,
        },
        tfidf,
        embedding_dim: embeddings.map(|e| e.dim),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = include_str!("../../tests/fixtures/tpch_q_limit.json");

    #[test]
    fn bare_directory_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.json"), FIXTURE).unwrap();
        std::fs::write(dir.path().join("b.json"), "not json").unwrap();
        let plain = r#"[{"Plan": {"Node Type": "Result", "Startup Cost": 0, "Total Cost": 0.01,
            "Plan Rows": 1, "Plan Width": 4}}]"#;
        std::fs::write(dir.path().join("c.json"), plain).unwrap();
        let corpus = load_plan_corpus(dir.path()).unwrap();
        assert_eq!(corpus.trees.len(), 2);
        assert_eq!(corpus.skipped.len(), 1);

        let out = featurize_corpus(&corpus, &FeatureConfig::default(), None).unwrap();
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.node_rows.len(), 6);
        assert_eq!(out.skipped.len(), 2);
        assert_eq!(out.sequences.records[0].nodes.len(), 6);
    }

    #[test]
    fn missing_embedding_names_query() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.json"), FIXTURE).unwrap();
        let corpus = load_plan_corpus(dir.path()).unwrap();
        let table = EmbeddingTable::parse("someone_else\t1,2\n", "mem").unwrap();
        match featurize_corpus(&corpus, &FeatureConfig::default(), Some(&table)) {
            Err(FeatureError::MissingEmbedding(id)) => assert_eq!(id, corpus.trees[0].query_id),
            other => panic!("{other:?}"),
        }
    }
}
