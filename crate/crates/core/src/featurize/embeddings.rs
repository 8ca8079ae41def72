use std::collections::HashMap;
use std::path::Path;

use super::FeatureError;

/// Externally computed query embeddings, one `query_id<TAB>v1,v2,...` record per line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path).map_err(|e| FeatureError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, FeatureError> {
        let mut table = EmbeddingTable::default();
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| FeatureError::Embedding {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            if line.trim().is_empty() {
                continue;
            }
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| err("expected query_id<TAB>values".into()))?;
            let v = values
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| err(e.to_string()))?;
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(err(format!("non-finite component {bad}")));
            }
            if table.vectors.is_empty() {
                table.dim = v.len();
            } else if v.len() != table.dim {
                return Err(err(format!("dimension {} != {}", v.len(), table.dim)));
            }
            if table.vectors.insert(id.trim().to_string(), v).is_some() {
                return Err(err(format!("duplicate query id {}", id.trim())));
            }
        }
        Ok(table)
    }

    pub fn get(&self, query_id: &str) -> Option<&[f64]> {
        self.vectors.get(query_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}
