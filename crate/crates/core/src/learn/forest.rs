use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Objective, RegressionTree, TreeParams};
use super::{check_width, LearnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of feature columns each tree may split on.
    pub feature_fraction: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 10,
            min_samples_leaf: 2,
            feature_fraction: 0.7,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub feature_fraction: f64,
    /// Seed used for tree `i` is `seeds[i]`.
    pub seeds: Vec<u64>,
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        let first = self.trees.first().ok_or(LearnError::Empty)?;
        check_width(first.n_features, x.len())?;
        Ok(self.trees.iter().map(|t| t.eval(x)).sum::<f64>() / self.trees.len() as f64)
    }
}

pub fn fit_forest(x: &[Vec<f64>], y: &[f64], params: &ForestParams) -> Result<ForestModel, LearnError> {
    if x.is_empty() {
        return Err(LearnError::Empty);
    }
    if params.n_trees == 0 {
        return Err(LearnError::Config("forest needs at least one tree".into()));
    }
    if !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
        return Err(LearnError::Config(format!(
            "feature_fraction must be in (0, 1], got {}",
            params.feature_fraction
        )));
    }
    let n = x.len();
    let d = x[0].len();
    if d == 0 {
        return Err(LearnError::ZeroWidth);
    }
    let k = ((params.feature_fraction * d as f64).ceil() as usize).clamp(1, d);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let seeds: Vec<u64> = (0..params.n_trees as u64)
        .map(|i| params.seed.wrapping_add(i))
        .collect();
    let trees = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut features = sample(&mut rng, d, k).into_vec();
            features.sort_unstable();
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(x, y, &[], &rows, &features, tree_params, Objective::Variance)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForestModel {
        trees,
        feature_fraction: params.feature_fraction,
        seeds,
    })
}
