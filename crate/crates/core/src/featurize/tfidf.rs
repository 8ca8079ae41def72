//! TF-IDF over SQL text.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::FeatureError;

pub const TFIDF_FORMAT_VERSION: u32 = 1;

/// Lowercases, splits on anything that is not alphanumeric or `_`, and drops
/// tokens made only of digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty() && !t.chars().all(|c| c.is_ascii_digit()))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub format_version: u32,
    /// Sorted lexicographically; defines column order.
    pub vocabulary: Vec<String>,
    pub document_frequency: Vec<usize>,
    pub corpus_size: usize,
    pub idf: Vec<f64>,
}

impl TfidfModel {
    pub fn fit<S: AsRef<str>>(corpus: &[S], max_vocab: usize) -> Result<Self, FeatureError> {
        if corpus.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            let terms: BTreeSet<String> = tokenize(doc.as_ref()).into_iter().collect();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        // Highest document frequency first, ties lexicographic.
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_vocab);
        ranked.sort_by(|a, b| a.0.cmp(&b.0));

        let n = corpus.len();
        let idf = ranked
            .iter()
            .map(|(_, d)| ((1.0 + n as f64) / (1.0 + *d as f64)).ln() + 1.0)
            .collect();
        let (vocabulary, document_frequency) = ranked.into_iter().unzip();
        Ok(TfidfModel {
            format_version: TFIDF_FORMAT_VERSION,
            vocabulary,
            document_frequency,
            corpus_size: n,
            idf,
        })
    }

    pub fn width(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.idf[i])
    }

    fn index_of(&self, term: &str) -> Option<usize> {
        self.vocabulary.binary_search_by(|v| v.as_str().cmp(term)).ok()
    }

    /// L2-normalized raw-count × idf vector; out-of-vocabulary terms are ignored.
    pub fn transform(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.vocabulary.len()];
        for token in tokenize(text) {
            if let Some(i) = self.index_of(&token) {
                v[i] += 1.0;
            }
        }
        for (x, idf) in v.iter_mut().zip(&self.idf) {
            *x *= idf;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tfidf model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        let model: TfidfModel = serde_json::from_str(text).map_err(|e| FeatureError::Format(e.to_string()))?;
        if model.format_version != TFIDF_FORMAT_VERSION {
            return Err(FeatureError::Format(format!(
                "unsupported TF-IDF format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("SELECT l_qty, 0.06 FROM t1 WHERE x>=10"),
            vec!["select", "l_qty", "from", "t1", "where", "x"]
        );
    }

    #[test]
    fn two_document_corpus() {
        let m = TfidfModel::fit(&["SELECT a FROM t", "SELECT b FROM t"], 100).unwrap();
        assert_eq!(m.vocabulary, vec!["a", "b", "from", "select", "t"]);
        assert_eq!(m.document_frequency, vec![1, 1, 2, 2, 2]);
        assert!((m.idf_of("a").unwrap() - 1.405465108108164).abs() < 1e-12);
        assert_eq!(m.idf_of("select").unwrap(), 1.0);
    }

    #[test]
    fn single_document_idf_is_one() {
        let m = TfidfModel::fit(&["select x from y"], 10).unwrap();
        assert!(m.idf.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn vocabulary_cap_breaks_ties_lexicographically() {
        let m = TfidfModel::fit(&["SELECT a FROM t", "SELECT b FROM t"], 2).unwrap();
        assert_eq!(m.vocabulary, vec!["from", "select"]);
    }

    #[test]
    fn transform_cases() {
        let m = TfidfModel::fit(&["select a from t", "select b from t"], 100).unwrap();
        assert_eq!(m.transform("nothing here"), vec![0.0; 5]);

        let one = TfidfModel::fit(&["word"], 1).unwrap();
        assert_eq!(one.transform("word"), vec![1.0]);

        let pair = TfidfModel::fit(&["x y"], 10).unwrap();
        let v = pair.transform("x x x y y y y");
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            TfidfModel::fit::<&str>(&[], 10),
            Err(FeatureError::EmptyCorpus)
        ));
    }

    #[test]
    fn json_round_trip() {
        let m = TfidfModel::fit(&["select a from t", "select b"], 100).unwrap();
        assert_eq!(TfidfModel::from_json(&m.to_json()).unwrap(), m);
    }
}
