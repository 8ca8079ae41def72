use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::evaluate::stratified_folds;

use super::{FittedModel, LearnError, ModelKind, Normalizers, TrainConfig, TrainingData};

fn default_folds() -> usize {
    5
}

/// Candidate lists per hyperparameter. Candidates are enumerated as the
/// Cartesian product over parameter names in lexicographic order, the last
/// name varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSpec {
    pub model: ModelKind,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, Vec<Value>>,
}

impl GridSearchSpec {
    /// Conventional starting grid per model kind.
    pub fn default_for(model: ModelKind, seed: u64) -> Self {
        let grid: &[(&str, &[f64])] = match model {
            ModelKind::Gbdt => &[
                ("n_rounds", &[100.0, 300.0]),
                ("max_depth", &[3.0, 5.0]),
                ("learning_rate", &[0.1, 0.3]),
                ("lambda", &[1.0]),
            ],
            ModelKind::Forest => &[("n_trees", &[100.0]), ("feature_fraction", &[0.7])],
            ModelKind::Linear => &[("lambda", &[0.0, 0.1, 1.0])],
            ModelKind::Mlp | ModelKind::Lstm => &[],
        };
        let params = grid
            .iter()
            .map(|(k, vs)| {
                let values = vs
                    .iter()
                    .map(|v| {
                        if v.fract() == 0.0 && !matches!(*k, "learning_rate" | "lambda" | "feature_fraction") {
                            Value::from(*v as u64)
                        } else {
                            Value::from(*v)
                        }
                    })
                    .collect();
                (k.to_string(), values)
            })
            .collect();
        GridSearchSpec {
            model,
            folds: default_folds(),
            seed,
            params,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        serde_json::from_str(text).map_err(|e| LearnError::Config(format!("grid file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn candidates(&self) -> Result<Vec<TrainConfig>, LearnError> {
        if self.folds < 2 {
            return Err(LearnError::Config(format!(
                "fold count must be >= 2, got {}",
                self.folds
            )));
        }
        let Value::Object(mut base) =
            serde_json::to_value(TrainConfig::default_for(self.model)).expect("config serializes")
        else {
            unreachable!("configs serialize as objects")
        };
        if base.contains_key("seed") {
            base.insert("seed".into(), Value::from(self.seed));
        }
        for (name, values) in &self.params {
            if name == "model" || !base.contains_key(name) {
                return Err(LearnError::Config(format!(
                    "{} has no hyperparameter {name}",
                    self.model
                )));
            }
            if values.is_empty() {
                return Err(LearnError::Config(format!("candidate list for {name} is empty")));
            }
        }
        let names: Vec<&String> = self.params.keys().collect();
        let total: usize = self.params.values().map(Vec::len).product();
        let mut out = Vec::with_capacity(total);
        for mut code in 0..total {
            let mut obj = base.clone();
            for name in names.iter().rev() {
                let values = &self.params[*name];
                obj.insert((*name).clone(), values[code % values.len()].clone());
                code /= values.len();
            }
            let cfg: TrainConfig = serde_json::from_value(Value::Object(obj))
                .map_err(|e| LearnError::Config(format!("grid candidate: {e}")))?;
            out.push(cfg);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub candidate: usize,
    pub config: TrainConfig,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: TrainConfig,
    pub best_index: usize,
    pub table: Vec<CvRow>,
    /// Winner refit on every training row.
    pub model: FittedModel,
    pub normalizers: Normalizers,
}

/// Exhaustive search scored by mean validation MSE over template-stratified
/// folds of `train_idx`; ties go to the earlier candidate.
pub fn grid_search(
    spec: &GridSearchSpec,
    data: &TrainingData<'_>,
    train_idx: &[usize],
) -> Result<GridResult, LearnError> {
    let candidates = spec.candidates()?;
    let k = spec.folds;
    let templates: Vec<Option<u32>> = train_idx.iter().map(|&i| data.dataset.rows[i].template_id).collect();
    let folds: Vec<Vec<usize>> = stratified_folds(&templates, k, spec.seed)
        .into_iter()
        .map(|f| f.into_iter().map(|p| train_idx[p]).collect())
        .collect();
    if let Some(fold) = folds.iter().position(Vec::is_empty) {
        return Err(LearnError::EmptyFold { fold, k });
    }

    let table = candidates
        .par_iter()
        .enumerate()
        .map(|(candidate, config)| -> Result<CvRow, LearnError> {
            let mut fold_mse = Vec::with_capacity(k);
            for (f, val) in folds.iter().enumerate() {
                let train: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != f)
                    .flat_map(|(_, rows)| rows.iter().copied())
                    .collect();
                let (model, norm) = data.fit(config, &train)?;
                fold_mse.push(data.score(&model, &norm, val)?);
            }
            let mean_mse = fold_mse.iter().sum::<f64>() / k as f64;
            Ok(CvRow {
                candidate,
                config: config.clone(),
                fold_mse,
                mean_mse,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut best_index = 0;
    for row in &table {
        let score = |r: &CvRow| if r.mean_mse.is_nan() { f64::INFINITY } else { r.mean_mse };
        if score(row) < score(&table[best_index]) {
            best_index = row.candidate;
        }
    }
    let best = table[best_index].config.clone();
    let (model, normalizers) = data.fit(&best, train_idx)?;
    Ok(GridResult {
        best,
        best_index,
        table,
        model,
        normalizers,
    })
}

/// CV table as CSV: candidate, params (JSON), one column per fold, mean_mse.
pub fn write_cv_table(path: &Path, table: &[CvRow]) -> Result<(), LearnError> {
    let io = |e: csv::Error| LearnError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let k = table.first().map_or(0, |r| r.fold_mse.len());
    let mut header = vec!["candidate".to_string(), "params".to_string()];
    header.extend((1..=k).map(|f| format!("fold_{f}")));
    header.push("mean_mse".into());
    w.write_record(&header).map_err(io)?;
    for row in table {
        let mut rec = vec![
            row.candidate.to_string(),
            serde_json::to_string(&row.config).expect("config serializes"),
        ];
        rec.extend(row.fold_mse.iter().map(|m| m.to_string()));
        rec.push(row.mean_mse.to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| LearnError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
