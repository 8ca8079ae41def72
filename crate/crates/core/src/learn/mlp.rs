use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{glorot_bound, Adam};
use super::{check_width, LearnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![64, 32],
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Fully connected network, ReLU on hidden layers and a scalar identity output.
///
/// `params` stores, per layer, the row-major `out × in` weight matrix followed
/// by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl MlpModel {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::param_count(&sizes));
        for w in sizes.windows(2) {
            let bound = glorot_bound(w[0], w[1]);
            params.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-bound..=bound)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        MlpModel { sizes, params }
    }

    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let input = &acts[l];
            let weights = &self.params[off..off + fan_in * fan_out];
            let bias = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let out: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let z = bias[j]
                        + weights[j * fan_in..(j + 1) * fan_in]
                            .iter()
                            .zip(input)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            off += fan_in * fan_out + fan_out;
        }
        acts
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        check_width(self.sizes[0], x.len())?;
        Ok(self.forward(x).last().expect("output layer")[0])
    }

    /// Mean squared error over the rows.
    pub fn loss(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(r, t)| (self.forward(r).last().expect("output layer")[0] - t).powi(2))
            .sum::<f64>()
            / x.len() as f64
    }

    /// Loss and its gradient with respect to `params`.
    pub fn loss_gradient(&self, x: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let n = x.len() as f64;
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for (row, target) in x.iter().zip(y) {
            let acts = self.forward(row);
            let out = acts[layers][0];
            loss += (out - target).powi(2);
            let mut delta = vec![2.0 * (out - target) / n];
            for l in (0..layers).rev() {
                let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
                let o = offsets[l];
                let input = &acts[l];
                for j in 0..fan_out {
                    for k in 0..fan_in {
                        grad[o + j * fan_in + k] += delta[j] * input[k];
                    }
                    grad[o + fan_in * fan_out + j] += delta[j];
                }
                if l > 0 {
                    delta = (0..fan_in)
                        .map(|k| {
                            if input[k] <= 0.0 {
                                0.0
                            } else {
                                (0..fan_out).map(|j| self.params[o + j * fan_in + k] * delta[j]).sum()
                            }
                        })
                        .collect();
                }
            }
        }
        (loss / n, grad)
    }
}

pub fn fit_mlp(x: &[Vec<f64>], y: &[f64], params: &MlpParams) -> Result<MlpModel, LearnError> {
    if x.is_empty() {
        return Err(LearnError::Empty);
    }
    if params.batch_size == 0 || params.hidden.contains(&0) {
        return Err(LearnError::Config(
            "batch_size and hidden widths must be positive".into(),
        ));
    }
    let mut model = MlpModel::init(x[0].len(), &params.hidden, params.seed);
    let mut opt = Adam::new(model.params.len(), params.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..x.len()).collect();
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            let bx: Vec<Vec<f64>> = batch.iter().map(|&i| x[i].clone()).collect();
            let by: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
            let (loss, grad) = model.loss_gradient(&bx, &by);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(LearnError::Diverged { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut model.params, &grad);
        }
        log::trace!("mlp epoch {epoch} loss {}", epoch_loss / x.len() as f64);
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(LearnError::Diverged { epoch: params.epochs });
    }
    Ok(model)
}
