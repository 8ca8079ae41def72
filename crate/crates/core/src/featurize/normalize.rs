use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScheme {
    Zscore,
    Minmax,
    None,
}

/// Per-column affine statistics: `x' = (x - offset) / scale`, with `scale == 0`
/// mapping the whole column to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub scheme: NormScheme,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormStats {
    pub fn fit(matrix: &[Vec<f64>], scheme: NormScheme) -> Self {
        let width = matrix.first().map_or(0, Vec::len);
        let n = matrix.len() as f64;
        let mut offset = vec![0.0; width];
        let mut scale = vec![1.0; width];
        if matrix.is_empty() {
            return NormStats { scheme, offset, scale };
        }
        for j in 0..width {
            let col = matrix.iter().map(|r| r[j]);
            match scheme {
                NormScheme::Zscore => {
                    let mean = col.clone().sum::<f64>() / n;
                    let var = col.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    offset[j] = mean;
                    // rounding noise on constant columns is not spread
                    scale[j] = if sd <= 1e-12 * mean.abs().max(1.0) { 0.0 } else { sd };
                }
                NormScheme::Minmax => {
                    let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
                    offset[j] = lo;
                    scale[j] = hi - lo;
                }
                NormScheme::None => {}
            }
        }
        NormStats { scheme, offset, scale }
    }

    pub fn width(&self) -> usize {
        self.offset.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(x, (o, s))| if *s == 0.0 { 0.0 } else { (x - o) / s })
            .collect()
    }

    pub fn apply(&self, matrix: &[Vec<f64>]) -> Vec<Vec<f64>> {
        matrix.iter().map(|r| self.apply_row(r)).collect()
    }
}

/// Fits statistics on `matrix` and returns the transformed matrix with them.
pub fn normalize_fit_apply(matrix: &[Vec<f64>], scheme: NormScheme) -> (Vec<Vec<f64>>, NormStats) {
    let stats = NormStats::fit(matrix, scheme);
    (stats.apply(matrix), stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|v| vec![*v]).collect()
    }

    #[test]
    fn zscore_unit_population_sd() {
        let (m, _) = normalize_fit_apply(&column(&[1.0, 2.0, 3.0]), NormScheme::Zscore);
        let vals: Vec<f64> = m.iter().map(|r| r[0]).collect();
        let mean = vals.iter().sum::<f64>() / 3.0;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!(mean.abs() < 1e-15);
        assert!((sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        for scheme in [NormScheme::Zscore, NormScheme::Minmax] {
            let (m, _) = normalize_fit_apply(&column(&[5.0, 5.0, 5.0]), scheme);
            assert_eq!(m, column(&[0.0, 0.0, 0.0]));
        }
        let (m, _) = normalize_fit_apply(&column(&[0.1; 7]), NormScheme::Zscore);
        assert!(m.iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn minmax_unit_interval() {
        let (m, _) = normalize_fit_apply(&column(&[0.0, 10.0]), NormScheme::Minmax);
        assert_eq!(m, column(&[0.0, 1.0]));
    }

    #[test]
    fn stored_stats_reproduce_fit_apply() {
        let data = vec![vec![1.0, 7.0], vec![4.0, -2.0], vec![9.0, 3.5]];
        for scheme in [NormScheme::Zscore, NormScheme::Minmax, NormScheme::None] {
            let (joint, stats) = normalize_fit_apply(&data, scheme);
            assert_eq!(stats.apply(&data), joint);
        }
    }
}
