use serde::{Deserialize, Serialize};

use super::{check_width, LearnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Root at index 0.
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_features: usize,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        check_width(self.n_features, x.len())?;
        Ok(self.eval(x))
    }

    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_leaf: 1,
        }
    }
}

/// How split quality and leaf values are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Leaf = mean target, gain = reduction in squared error.
    Variance,
    /// Second-order boosting on gradient pairs: leaf = −G/(H+λ),
    /// gain = ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ.
    Newton { lambda: f64, gamma: f64 },
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    g: &'a [f64],
    h: &'a [f64],
    features: &'a [usize],
    params: TreeParams,
    objective: Objective,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&i| self.g[i]).sum();
        match self.objective {
            Objective::Variance if self.constant(rows) => self.g[rows[0]],
            Objective::Variance => g / rows.len() as f64,
            Objective::Newton { lambda, .. } => {
                let h: f64 = rows.iter().map(|&i| self.h[i]).sum();
                -g / (h + lambda)
            }
        }
    }

    fn constant(&self, rows: &[usize]) -> bool {
        rows.iter().all(|&i| self.g[i] == self.g[rows[0]])
    }

    fn best_split(&self, rows: &[usize]) -> Option<BestSplit> {
        let n = rows.len();
        let msl = self.params.min_samples_leaf.max(1);
        if n < 2 * msl || (self.objective == Objective::Variance && self.constant(rows)) {
            return None;
        }
        let mean = rows.iter().map(|&i| self.g[i]).sum::<f64>() / n as f64;
        let g_total: f64 = rows.iter().map(|&i| self.g[i]).sum();
        let h_total: f64 = match self.objective {
            Objective::Variance => n as f64,
            Objective::Newton { .. } => rows.iter().map(|&i| self.h[i]).sum(),
        };
        let mut best: Option<BestSplit> = None;
        let mut sorted = rows.to_vec();
        for &f in self.features {
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 1..n {
                let prev = sorted[k - 1];
                match self.objective {
                    Objective::Variance => gl += self.g[prev] - mean,
                    Objective::Newton { .. } => {
                        gl += self.g[prev];
                        hl += self.h[prev];
                    }
                }
                if k < msl || n - k < msl {
                    continue;
                }
                let (a, b) = (self.x[prev][f], self.x[sorted[k]][f]);
                if a == b {
                    continue;
                }
                let gain = match self.objective {
                    // Centered sums make the parent term vanish exactly.
                    Objective::Variance => gl * gl * (1.0 / k as f64 + 1.0 / (n - k) as f64),
                    Objective::Newton { lambda, gamma } => {
                        let gr = g_total - gl;
                        let hr = h_total - hl;
                        0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
                            - g_total * g_total / (h_total + lambda))
                            - gamma
                    }
                };
                if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: self.leaf_value(rows),
        });
        if depth >= self.params.max_depth {
            return id;
        }
        let Some(split) = self.best_split(rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Grows one tree over `rows` (repeats allowed) using only `features`.
///
/// For [`Objective::Variance`] `g` holds the targets and `h` is ignored.
pub(crate) fn grow(
    x: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    features: &[usize],
    params: TreeParams,
    objective: Objective,
) -> Result<RegressionTree, LearnError> {
    if rows.is_empty() {
        return Err(LearnError::Empty);
    }
    let n_features = x[rows[0]].len();
    let mut b = Builder {
        x,
        g,
        h,
        features,
        params,
        objective,
        nodes: Vec::new(),
    };
    b.build(rows, 0);
    Ok(RegressionTree {
        nodes: b.nodes,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        n_features,
    })
}

/// Variance-reduction regression tree over all rows and features.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> Result<RegressionTree, LearnError> {
    if x.is_empty() {
        return Err(LearnError::Empty);
    }
    let rows: Vec<usize> = (0..x.len()).collect();
    let features: Vec<usize> = (0..x[0].len()).collect();
    grow(x, y, &[], &rows, &features, params, Objective::Variance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn stump_splits_at_midpoint() {
        let t = fit_tree(
            &column(&[1.0, 2.0, 3.0, 4.0]),
            &[0.0, 0.0, 1.0, 1.0],
            TreeParams {
                max_depth: 1,
                min_samples_leaf: 1,
            },
        )
        .unwrap();
        match &t.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!((*feature, *threshold), (0, 2.5));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(t.eval(&[1.5]), 0.0);
        assert_eq!(t.eval(&[3.5]), 1.0);
    }

    #[test]
    fn constant_targets_single_leaf() {
        let t = fit_tree(&column(&[1.0, 2.0, 3.0]), &[0.7; 3], TreeParams::default()).unwrap();
        assert_eq!(t.nodes, vec![TreeNode::Leaf { value: 0.7 }]);
    }

    #[test]
    fn depth_zero_is_mean() {
        let t = fit_tree(
            &column(&[1.0, 2.0, 3.0]),
            &[1.0, 2.0, 6.0],
            TreeParams {
                max_depth: 0,
                min_samples_leaf: 1,
            },
        )
        .unwrap();
        assert_eq!(t.nodes, vec![TreeNode::Leaf { value: 3.0 }]);
    }

    #[test]
    fn ties_prefer_lower_feature() {
        let x = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let t = fit_tree(&x, &[0.0, 1.0], TreeParams::default()).unwrap();
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn min_samples_leaf_blocks_split() {
        let t = fit_tree(
            &column(&[1.0, 2.0, 3.0]),
            &[0.0, 0.0, 5.0],
            TreeParams {
                max_depth: 4,
                min_samples_leaf: 2,
            },
        )
        .unwrap();
        assert_eq!(t.leaf_count(), 1);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            fit_tree(&[], &[], TreeParams::default()),
            Err(LearnError::Empty)
        ));
    }
}
