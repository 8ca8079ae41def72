use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_width, LearnError};

/// Ridge used when the unregularized normal equations are singular.
pub const FALLBACK_LAMBDA: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(default)]
    pub ridge_lambda: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        check_width(self.weights.len(), x.len())?;
        Ok(self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }
}

/// Cholesky solve of `A z = r`, rejecting factorizations with vanishing pivots.
fn solve_spd(a: DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    let max_diag = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-13 * max_diag {
        return None;
    }
    let z = chol.solve(r);
    z.iter().all(|v| v.is_finite()).then_some(z)
}

/// Minimizes `Σ(y − Xw − b)² + λ‖w‖²`; the bias is not penalized.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearModel, LearnError> {
    if x.is_empty() {
        return Err(LearnError::Empty);
    }
    let d = x[0].len();
    if d == 0 {
        return Err(LearnError::ZeroWidth);
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(LearnError::Config(format!("ridge lambda must be >= 0, got {lambda}")));
    }
    let n = x.len();
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[i][j] } else { 1.0 });
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * DVector::from_column_slice(y);
    let with_ridge = |lam: f64| {
        let mut a = gram.clone();
        for j in 0..d {
            a[(j, j)] += lam;
        }
        a
    };
    let (z, used) = match solve_spd(with_ridge(lambda), &rhs) {
        Some(z) => (z, lambda),
        None => {
            let lam = lambda.max(FALLBACK_LAMBDA);
            let z = solve_spd(with_ridge(lam), &rhs)
                .or_else(|| with_ridge(lam).lu().solve(&rhs))
                .ok_or_else(|| LearnError::Config("normal equations are singular".into()))?;
            log::debug!("ridge fallback to lambda={lam}");
            (z, lam)
        }
    };
    Ok(LinearModel {
        weights: z.iter().take(d).copied().collect(),
        bias: z[d],
        ridge_lambda: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let m = fit_linear(&[vec![1.0], vec![2.0], vec![3.0]], &[2.0, 4.0, 6.0], 0.0).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-9);
        assert!(m.bias.abs() < 1e-9);
        assert_eq!(m.ridge_lambda, 0.0);
    }

    #[test]
    fn constant_targets() {
        let x = vec![vec![1.0, 5.0], vec![2.0, -1.0], vec![3.0, 0.5]];
        let m = fit_linear(&x, &[4.0; 3], 0.0).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.bias - 4.0).abs() < 1e-9);
    }

    #[test]
    fn duplicated_column_falls_back() {
        let x = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![4.0, 4.0]];
        let y = [3.0, 5.0, 9.0];
        let m = fit_linear(&x, &y, 0.0).unwrap();
        assert_eq!(m.ridge_lambda, FALLBACK_LAMBDA);
        for (row, t) in x.iter().zip(y) {
            assert!((m.predict(row).unwrap() - t).abs() < 1e-6);
        }
    }

    #[test]
    fn predict_known_model() {
        let m = LinearModel {
            weights: vec![2.0],
            bias: 1.0,
            ridge_lambda: 0.0,
        };
        assert_eq!(m.predict(&[3.0]).unwrap(), 7.0);
        assert!(matches!(
            m.predict(&[1.0, 2.0]),
            Err(LearnError::WidthMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn zero_width_rejected() {
        assert!(matches!(fit_linear(&[vec![]], &[1.0], 0.0), Err(LearnError::ZeroWidth)));
    }
}
