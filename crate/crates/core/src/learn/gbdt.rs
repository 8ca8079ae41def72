use serde::{Deserialize, Serialize};

use super::tree::{grow, Objective, RegressionTree, TreeParams};
use super::{check_width, LearnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_rounds: 100,
            max_depth: 3,
            min_samples_leaf: 1,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub max_depth: usize,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
}

impl GbdtModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        check_width(self.n_features, x.len())?;
        Ok(self.eval(x))
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }
}

/// Squared-loss boosting; `on_round` sees the training predictions after each round.
pub fn fit_gbdt_with(
    x: &[Vec<f64>],
    y: &[f64],
    params: &GbdtParams,
    mut on_round: impl FnMut(usize, &[f64]),
) -> Result<GbdtModel, LearnError> {
    if x.is_empty() {
        return Err(LearnError::Empty);
    }
    if !(0.0..=1.0).contains(&params.learning_rate) {
        return Err(LearnError::Config(format!(
            "learning_rate must be in [0, 1], got {}",
            params.learning_rate
        )));
    }
    if params.lambda < 0.0 || params.gamma < 0.0 {
        return Err(LearnError::Config("lambda and gamma must be >= 0".into()));
    }
    let n = x.len();
    let d = x[0].len();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let rows: Vec<usize> = (0..n).collect();
    let features: Vec<usize> = (0..d).collect();
    let hess = vec![1.0; n];
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let objective = Objective::Newton {
        lambda: params.lambda,
        gamma: params.gamma,
    };
    let mut trees = Vec::with_capacity(params.n_rounds);
    for round in 0..params.n_rounds {
        let grad: Vec<f64> = pred.iter().zip(y).map(|(p, t)| p - t).collect();
        let tree = grow(x, &grad, &hess, &rows, &features, tree_params, objective)?;
        for (p, r) in pred.iter_mut().zip(x) {
            *p += params.learning_rate * tree.eval(r);
        }
        trees.push(tree);
        on_round(round, &pred);
    }
    Ok(GbdtModel {
        base_score,
        learning_rate: params.learning_rate,
        lambda: params.lambda,
        gamma: params.gamma,
        max_depth: params.max_depth,
        n_features: d,
        trees,
    })
}

pub fn fit_gbdt(x: &[Vec<f64>], y: &[f64], params: &GbdtParams) -> Result<GbdtModel, LearnError> {
    fit_gbdt_with(x, y, params, |_, _| {})
}
