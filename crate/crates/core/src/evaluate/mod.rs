//! Accuracy metrics, template-stratified splits and model comparison reports.

mod render;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::featurize::{inverse_target, Dataset, SequenceSet};
use crate::learn::{LearnError, ModelDocument};

pub use render::{render_report, scatter_svg, write_comparison_csv, ReportDocument, COMPARISON_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {actual} actual values vs {predicted} predictions")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("no rows to score")]
    Empty,
    #[error("undefined R²: all actual values are equal")]
    UndefinedR2,
    #[error("R² needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("accuracy undefined: every actual value is <= 0")]
    AllExcluded,
    #[error("test fraction must be in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("model {model}: {message}")]
    Model { model: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Learn(#[from] LearnError),
}

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<(), EvalError> {
    if y.len() != yhat.len() {
        return Err(EvalError::LengthMismatch {
            actual: y.len(),
            predicted: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64, EvalError> {
    check_lengths(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, p)| (a - p) * (a - p)).sum::<f64>() / y.len() as f64)
}

/// Coefficient of determination; an error when the actuals have no variance.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64, EvalError> {
    check_lengths(y, yhat)?;
    if y.len() < 2 {
        return Err(EvalError::TooFewRows(y.len()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::UndefinedR2);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Percentage of rows with `|y − ŷ|/y <= tau` among rows with `y > 0`, and
/// the number of excluded rows.
pub fn acc_within_counts(y: &[f64], yhat: &[f64], tau: f64) -> Result<(f64, usize), EvalError> {
    check_lengths(y, yhat)?;
    let mut used = 0usize;
    let mut hits = 0usize;
    for (a, p) in y.iter().zip(yhat) {
        if *a > 0.0 {
            used += 1;
            if (a - p).abs() / a <= tau {
                hits += 1;
            }
        }
    }
    if used == 0 {
        return Err(EvalError::AllExcluded);
    }
    Ok((100.0 * hits as f64 / used as f64, y.len() - used))
}

pub fn acc_within(y: &[f64], yhat: &[f64], tau: f64) -> Result<f64, EvalError> {
    acc_within_counts(y, yhat, tau).map(|(p, _)| p)
}

/// Test-set definition shared by every model in one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Templates too small to split.
    pub warnings: Vec<String>,
}

/// Row positions grouped by template, each group shuffled by one seeded
/// generator in ascending template order.
fn shuffled_groups(template_ids: &[Option<u32>], seed: u64) -> Vec<(Option<u32>, Vec<usize>)> {
    let mut groups: BTreeMap<Option<u32>, Vec<usize>> = BTreeMap::new();
    for (i, t) in template_ids.iter().enumerate() {
        groups.entry(*t).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups
        .into_iter()
        .map(|(t, mut rows)| {
            rows.shuffle(&mut rng);
            (t, rows)
        })
        .collect()
}

/// Per template, `⌈fraction·m⌉` shuffled rows go to test (at most m − 1);
/// templates with a single row go to train with a warning.
pub fn stratified_split(template_ids: &[Option<u32>], spec: &SplitSpec) -> Result<Split, EvalError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(EvalError::InvalidFraction(spec.test_fraction));
    }
    if template_ids.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for (t, rows) in shuffled_groups(template_ids, spec.seed) {
        let m = rows.len();
        if m < 2 {
            let name = t.map_or_else(|| "without id".to_string(), |t| t.to_string());
            warnings.push(format!("template {name} has {m} row; kept in train"));
            train.extend(rows);
            continue;
        }
        let n_test = ((spec.test_fraction * m as f64 - 1e-9).ceil() as usize).clamp(1, m - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test, warnings })
}

/// `k` folds; within each template shuffled rows are dealt round-robin,
/// continuing the rotation across templates.
pub fn stratified_folds(template_ids: &[Option<u32>], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let k = k.max(1);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (_, rows) in shuffled_groups(template_ids, seed) {
        for r in rows {
            folds[next % k].push(r);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub r2: f64,
    pub acc10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateMetrics {
    pub template_id: Option<u32>,
    pub n: usize,
    pub mse: f64,
    /// Absent when the template's actuals are all equal or it has one row.
    pub r2: Option<f64>,
    pub acc10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub query_id: String,
    pub template_id: Option<u32>,
    pub actual_log: f64,
    pub predicted_log: f64,
    pub actual_ms: f64,
    pub predicted_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub n_test: usize,
    /// Metrics on `ln(1 + ms)`.
    pub transformed: MetricSet,
    /// Metrics after inverting the transform on both sides.
    pub raw: MetricSet,
    /// Rows left out of acc10 because the actual value is <= 0.
    pub acc_excluded: usize,
    pub acc_excluded_raw: usize,
    /// Transformed-space metrics per template.
    pub per_template: Vec<TemplateMetrics>,
    pub pairs: Vec<PredictionPair>,
}

/// Scores transformed-space predictions against the matching actual rows.
pub fn evaluate_predictions(
    model: &str,
    rows: &[(String, Option<u32>, f64)],
    predicted_log: &[f64],
) -> Result<EvalReport, EvalError> {
    let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
    check_lengths(&y, predicted_log)?;
    let ctx = |e: EvalError| EvalError::Model {
        model: model.to_string(),
        message: e.to_string(),
    };
    let y_raw: Vec<f64> = y.iter().map(|v| inverse_target(*v)).collect();
    let p_raw: Vec<f64> = predicted_log.iter().map(|v| inverse_target(*v)).collect();
    let (acc, excl) = acc_within_counts(&y, predicted_log, 0.1).map_err(ctx)?;
    let (acc_raw, excl_raw) = acc_within_counts(&y_raw, &p_raw, 0.1).map_err(ctx)?;
    let transformed = MetricSet {
        mse: mse(&y, predicted_log)?,
        r2: r2(&y, predicted_log).map_err(ctx)?,
        acc10: acc,
    };
    let raw = MetricSet {
        mse: mse(&y_raw, &p_raw)?,
        r2: r2(&y_raw, &p_raw).map_err(ctx)?,
        acc10: acc_raw,
    };

    let mut groups: BTreeMap<Option<u32>, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(r.1).or_default().push(i);
    }
    let per_template = groups
        .into_iter()
        .map(|(t, idx)| {
            let gy: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let gp: Vec<f64> = idx.iter().map(|&i| predicted_log[i]).collect();
            TemplateMetrics {
                template_id: t,
                n: idx.len(),
                mse: mse(&gy, &gp).unwrap_or(f64::NAN),
                r2: r2(&gy, &gp).ok(),
                acc10: acc_within(&gy, &gp, 0.1).ok(),
            }
        })
        .collect();

    let pairs = rows
        .iter()
        .enumerate()
        .map(|(i, r)| PredictionPair {
            query_id: r.0.clone(),
            template_id: r.1,
            actual_log: y[i],
            predicted_log: predicted_log[i],
            actual_ms: y_raw[i],
            predicted_ms: p_raw[i],
        })
        .collect();

    Ok(EvalReport {
        model: model.to_string(),
        n_test: rows.len(),
        transformed,
        raw,
        acc_excluded: excl,
        acc_excluded_raw: excl_raw,
        per_template,
        pairs,
    })
}

/// Predicts the rows in `test_idx` with a stored model and scores them.
///
/// Tabular models need the dataset's columns to equal the model's; sequence
/// models read `sequences`.
pub fn evaluate_model(
    name: &str,
    doc: &ModelDocument,
    dataset: &Dataset,
    sequences: Option<&SequenceSet>,
    test_idx: &[usize],
) -> Result<EvalReport, EvalError> {
    let fail = |message: String| EvalError::Model {
        model: name.to_string(),
        message,
    };
    let predicted: Vec<f64> = if doc.kind.is_sequence() {
        let seq = sequences.ok_or_else(|| fail("sequence model needs the node-sequence file".into()))?;
        if seq.node_schema.names() != doc.columns {
            return Err(fail(format!(
                "node vector width {} does not match the model's expected width {}",
                seq.node_schema.width(),
                doc.columns.len()
            )));
        }
        test_idx
            .iter()
            .map(|&i| {
                let qid = &dataset.rows[i].query_id;
                let rec = seq
                    .records
                    .iter()
                    .find(|r| &r.query_id == qid)
                    .ok_or_else(|| fail(format!("no node sequence for query {qid}")))?;
                doc.predict_nodes(&rec.nodes, &rec.semantic).map_err(EvalError::from)
            })
            .collect::<Result<_, _>>()?
    } else {
        if dataset.schema.names() != doc.columns {
            return Err(fail(format!(
                "dataset has {} feature columns but the model expects width {}{}",
                dataset.schema.width(),
                doc.columns.len(),
                first_column_difference(&dataset.schema.names(), &doc.columns)
            )));
        }
        test_idx
            .iter()
            .map(|&i| doc.predict_vector(&dataset.rows[i].features).map_err(EvalError::from))
            .collect::<Result<_, _>>()?
    };
    let rows: Vec<(String, Option<u32>, f64)> = test_idx
        .iter()
        .map(|&i| {
            let r = &dataset.rows[i];
            (r.query_id.clone(), r.template_id, r.target_log)
        })
        .collect();
    evaluate_predictions(name, &rows, &predicted)
}

fn first_column_difference(have: &[String], want: &[String]) -> String {
    match want.iter().zip(have).position(|(a, b)| a != b) {
        Some(i) => format!(
            " (column {} is {} in the dataset, {} in the model)",
            i + 1,
            have[i],
            want[i]
        ),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mse(&[0.0, 4.0], &[2.0, 2.0]).unwrap(), 4.0);
        assert!(matches!(mse(&[1.0], &[]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(mse(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), 1.0);
        let y = [1.0, 2.0, 6.0];
        let m = y.iter().sum::<f64>() / 3.0;
        assert_eq!(r2(&y, &[m; 3]).unwrap(), 0.0);
        assert_eq!(r2(&[0.0, 2.0], &[2.0, 0.0]).unwrap(), -3.0);
        assert!(matches!(r2(&[5.0, 5.0], &[1.0, 2.0]), Err(EvalError::UndefinedR2)));
    }

    #[test]
    fn acc_examples() {
        assert_eq!(acc_within(&[100.0], &[110.0], 0.1).unwrap(), 100.0);
        assert_eq!(acc_within(&[100.0], &[111.0], 0.1).unwrap(), 0.0);
        assert_eq!(acc_within(&[100.0, 100.0], &[105.0, 150.0], 0.1).unwrap(), 50.0);
        assert_eq!(
            acc_within_counts(&[0.0, 100.0], &[1.0, 100.0], 0.1).unwrap(),
            (100.0, 1)
        );
        assert!(matches!(
            acc_within(&[0.0, -1.0], &[0.0, 0.0], 0.1),
            Err(EvalError::AllExcluded)
        ));
    }

    #[test]
    fn split_rules() {
        let ids: Vec<Option<u32>> = (0..22).flat_map(|t| std::iter::repeat_n(Some(t), 50)).collect();
        let s = stratified_split(&ids, &SplitSpec::default()).unwrap();
        assert_eq!(s.test.len(), 220);
        for t in 0..22 {
            assert_eq!(s.test.iter().filter(|&&i| ids[i] == Some(t)).count(), 10);
        }
        assert_eq!(s, stratified_split(&ids, &SplitSpec::default()).unwrap());

        let pairs: Vec<Option<u32>> = (0..5).flat_map(|t| [Some(t), Some(t)]).collect();
        let half = stratified_split(
            &pairs,
            &SplitSpec {
                test_fraction: 0.5,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!((half.train.len(), half.test.len()), (5, 5));

        let lonely = stratified_split(&[Some(1), Some(2), Some(2)], &SplitSpec::default()).unwrap();
        assert_eq!(lonely.warnings.len(), 1);
        assert!(lonely.train.contains(&0));
        assert!(stratified_split(&[], &SplitSpec::default()).is_err());
        assert!(matches!(
            stratified_split(
                &[Some(1)],
                &SplitSpec {
                    test_fraction: 1.0,
                    seed: 0
                }
            ),
            Err(EvalError::InvalidFraction(_))
        ));
    }

    #[test]
    fn folds_partition_rows() {
        let ids: Vec<Option<u32>> = (0..23).map(|i| Some(i % 3)).collect();
        let folds = stratified_folds(&ids, 4, 7);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() >= 5));
    }

    #[test]
    fn oracle_and_hand_built_reports() {
        let rows: Vec<(String, Option<u32>, f64)> = vec![
            ("a".into(), Some(1), 1.0),
            ("b".into(), Some(1), 2.0),
            ("c".into(), Some(2), 3.0),
        ];
        let oracle = evaluate_predictions("oracle", &rows, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            oracle.transformed,
            MetricSet {
                mse: 0.0,
                r2: 1.0,
                acc10: 100.0
            }
        );
        assert_eq!(oracle.raw.acc10, 100.0);

        let mean = evaluate_predictions("mean", &rows, &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(mean.transformed.r2, 0.0);

        // residuals 0.1, -0.5, 0.4 give mse 0.42/3 and r2 1 - 0.42/2; only the first is within 10%
        let hand = evaluate_predictions("hand", &rows, &[0.9, 2.5, 2.6]).unwrap();
        assert!((hand.transformed.mse - 0.14).abs() < 1e-12);
        assert!((hand.transformed.r2 - 0.79).abs() < 1e-12);
        assert!((hand.transformed.acc10 - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(hand.per_template.len(), 2);
        assert_eq!(hand.pairs.len(), 3);
    }
}
