use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{clip_global_norm, glorot_bound, Adam};
use super::{check_width, LearnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmParams {
    pub hidden: usize,
    /// 1 or 2 stacked layers.
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for LstmParams {
    fn default() -> Self {
        LstmParams {
            hidden: 32,
            layers: 1,
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// One query: node vectors in plan order plus the query-level semantic vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    pub nodes: Vec<Vec<f64>>,
    pub semantic: Vec<f64>,
}

/// Recurrent model over node sequences.
///
/// `params` holds, per layer, `W` (4H × input, row-major), `U` (4H × H) and
/// `b` (4H), gate blocks ordered i, f, o, g; then the head weights over
/// `[h_T ∥ semantic]` and the head bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub input_width: usize,
    pub hidden: usize,
    pub layers: usize,
    pub semantic_width: usize,
    pub params: Vec<f64>,
}

struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tc: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Clone, Copy)]
struct LayerShape {
    input: usize,
    w: usize,
    u: usize,
    b: usize,
}

impl LstmModel {
    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input_width
        } else {
            self.hidden
        }
    }

    fn layer_shape(&self, l: usize) -> LayerShape {
        let mut off = 0;
        for k in 0..l {
            off += 4 * self.hidden * (self.layer_input(k) + self.hidden + 1);
        }
        let input = self.layer_input(l);
        let w = off;
        let u = w + 4 * self.hidden * input;
        let b = u + 4 * self.hidden * self.hidden;
        LayerShape { input, w, u, b }
    }

    fn head_offset(&self) -> usize {
        let s = self.layer_shape(self.layers - 1);
        s.b + 4 * self.hidden
    }

    pub fn param_count(input_width: usize, hidden: usize, layers: usize, semantic_width: usize) -> usize {
        let mut n = 0;
        for l in 0..layers {
            let input = if l == 0 { input_width } else { hidden };
            n += 4 * hidden * (input + hidden + 1);
        }
        n + hidden + semantic_width + 1
    }

    pub fn zeros(input_width: usize, hidden: usize, layers: usize, semantic_width: usize) -> Self {
        LstmModel {
            input_width,
            hidden,
            layers,
            semantic_width,
            params: vec![0.0; Self::param_count(input_width, hidden, layers, semantic_width)],
        }
    }

    /// Glorot-uniform matrices, forget-gate bias 1, other biases 0.
    pub fn init(input_width: usize, hidden: usize, layers: usize, semantic_width: usize, seed: u64) -> Self {
        let mut m = Self::zeros(input_width, hidden, layers, semantic_width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..layers {
            let s = m.layer_shape(l);
            let bw = glorot_bound(s.input, hidden);
            for p in &mut m.params[s.w..s.u] {
                *p = rng.gen_range(-bw..=bw);
            }
            let bu = glorot_bound(hidden, hidden);
            for p in &mut m.params[s.u..s.b] {
                *p = rng.gen_range(-bu..=bu);
            }
            for p in &mut m.params[s.b + hidden..s.b + 2 * hidden] {
                *p = 1.0;
            }
        }
        let h = m.head_offset();
        let bh = glorot_bound(hidden + semantic_width, 1);
        for p in &mut m.params[h..h + hidden + semantic_width] {
            *p = rng.gen_range(-bh..=bh);
        }
        m
    }

    fn layer_forward(&self, l: usize, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Step>) {
        let hd = self.hidden;
        let s = self.layer_shape(l);
        let p = &self.params;
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut hs = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let mut a = p[s.b..s.b + 4 * hd].to_vec();
            for (r, ar) in a.iter_mut().enumerate() {
                let wr = &p[s.w + r * s.input..s.w + (r + 1) * s.input];
                let ur = &p[s.u + r * hd..s.u + (r + 1) * hd];
                *ar += wr.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                    + ur.iter().zip(&h).map(|(u, v)| u * v).sum::<f64>();
            }
            let i: Vec<f64> = a[..hd].iter().map(|z| sigmoid(*z)).collect();
            let f: Vec<f64> = a[hd..2 * hd].iter().map(|z| sigmoid(*z)).collect();
            let o: Vec<f64> = a[2 * hd..3 * hd].iter().map(|z| sigmoid(*z)).collect();
            let g: Vec<f64> = a[3 * hd..].iter().map(|z| z.tanh()).collect();
            let c_new: Vec<f64> = (0..hd).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
            let tc: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = (0..hd).map(|k| o[k] * tc[k]).collect();
            steps.push(Step {
                x: x.clone(),
                h_prev: std::mem::replace(&mut h, h_new.clone()),
                c_prev: std::mem::replace(&mut c, c_new),
                i,
                f,
                o,
                g,
                tc,
            });
            hs.push(h_new);
        }
        (hs, steps)
    }

    /// Backpropagates `dh_ext` (gradient on each step's h from above) and
    /// returns the gradient on each step's input.
    fn layer_backward(&self, l: usize, steps: &[Step], dh_ext: &[Vec<f64>], grad: &mut [f64]) -> Vec<Vec<f64>> {
        let hd = self.hidden;
        let s = self.layer_shape(l);
        let p = &self.params;
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dxs = vec![Vec::new(); steps.len()];
        for t in (0..steps.len()).rev() {
            let st = &steps[t];
            let mut da = vec![0.0; 4 * hd];
            for k in 0..hd {
                let dh = dh_ext[t][k] + dh_next[k];
                let d_o = dh * st.tc[k];
                let dc = dh * st.o[k] * (1.0 - st.tc[k] * st.tc[k]) + dc_next[k];
                let di = dc * st.g[k];
                let dg = dc * st.i[k];
                let df = dc * st.c_prev[k];
                dc_next[k] = dc * st.f[k];
                da[k] = di * st.i[k] * (1.0 - st.i[k]);
                da[hd + k] = df * st.f[k] * (1.0 - st.f[k]);
                da[2 * hd + k] = d_o * st.o[k] * (1.0 - st.o[k]);
                da[3 * hd + k] = dg * (1.0 - st.g[k] * st.g[k]);
            }
            let mut dx = vec![0.0; s.input];
            let mut dh_prev = vec![0.0; hd];
            for (r, &dar) in da.iter().enumerate() {
                if dar == 0.0 {
                    continue;
                }
                for j in 0..s.input {
                    grad[s.w + r * s.input + j] += dar * st.x[j];
                    dx[j] += p[s.w + r * s.input + j] * dar;
                }
                for j in 0..hd {
                    grad[s.u + r * hd + j] += dar * st.h_prev[j];
                    dh_prev[j] += p[s.u + r * hd + j] * dar;
                }
                grad[s.b + r] += dar;
            }
            dh_next = dh_prev;
            dxs[t] = dx;
        }
        dxs
    }

    fn check_input(&self, input: &SequenceInput) -> Result<(), LearnError> {
        if input.nodes.is_empty() {
            return Err(LearnError::Config("empty node sequence".into()));
        }
        for n in &input.nodes {
            check_width(self.input_width, n.len())?;
        }
        check_width(self.semantic_width, input.semantic.len())
    }

    fn forward_all(&self, nodes: &[Vec<f64>]) -> (Vec<Vec<Step>>, Vec<f64>) {
        let mut xs = nodes.to_vec();
        let mut caches = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let (hs, steps) = self.layer_forward(l, &xs);
            caches.push(steps);
            xs = hs;
        }
        let last = xs.pop().expect("non-empty sequence");
        (caches, last)
    }

    fn head(&self, h: &[f64], semantic: &[f64]) -> f64 {
        let o = self.head_offset();
        let w = &self.params[o..o + self.hidden + self.semantic_width];
        let b = self.params[o + self.hidden + self.semantic_width];
        b + h.iter().chain(semantic).zip(w).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, input: &SequenceInput) -> Result<f64, LearnError> {
        self.check_input(input)?;
        let (_, h) = self.forward_all(&input.nodes);
        Ok(self.head(&h, &input.semantic))
    }

    /// Mean squared error over the inputs.
    pub fn loss(&self, inputs: &[SequenceInput], y: &[f64]) -> f64 {
        inputs
            .iter()
            .zip(y)
            .map(|(s, t)| {
                let (_, h) = self.forward_all(&s.nodes);
                (self.head(&h, &s.semantic) - t).powi(2)
            })
            .sum::<f64>()
            / inputs.len() as f64
    }

    /// Loss and its full backpropagation-through-time gradient.
    pub fn loss_gradient(&self, inputs: &[SequenceInput], y: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let n = inputs.len() as f64;
        let ho = self.head_offset();
        let hd = self.hidden;
        let mut loss = 0.0;
        for (s, t) in inputs.iter().zip(y) {
            let (caches, h) = self.forward_all(&s.nodes);
            let pred = self.head(&h, &s.semantic);
            loss += (pred - t).powi(2);
            let dy = 2.0 * (pred - t) / n;
            for (k, v) in h.iter().chain(&s.semantic).enumerate() {
                grad[ho + k] += dy * v;
            }
            grad[ho + hd + self.semantic_width] += dy;
            let steps = s.nodes.len();
            let mut dh_ext = vec![vec![0.0; hd]; steps];
            dh_ext[steps - 1] = self.params[ho..ho + hd].iter().map(|w| dy * w).collect();
            for l in (0..self.layers).rev() {
                dh_ext = self.layer_backward(l, &caches[l], &dh_ext, &mut grad);
            }
        }
        (loss / n, grad)
    }
}

pub fn fit_lstm(inputs: &[SequenceInput], y: &[f64], params: &LstmParams) -> Result<LstmModel, LearnError> {
    let first = inputs.first().ok_or(LearnError::Empty)?;
    if !(1..=2).contains(&params.layers) {
        return Err(LearnError::Config(format!(
            "lstm layers must be 1 or 2, got {}",
            params.layers
        )));
    }
    if params.hidden == 0 || params.batch_size == 0 {
        return Err(LearnError::Config("hidden and batch_size must be positive".into()));
    }
    let input_width = first.nodes.first().map_or(0, Vec::len);
    let mut model = LstmModel::init(
        input_width,
        params.hidden,
        params.layers,
        first.semantic.len(),
        params.seed,
    );
    for s in inputs {
        model.check_input(s)?;
    }
    let mut opt = Adam::new(model.params.len(), params.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let bx: Vec<SequenceInput> = batch.iter().map(|&i| inputs[i].clone()).collect();
            let by: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
            let (loss, mut grad) = model.loss_gradient(&bx, &by);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(LearnError::Diverged { epoch });
            }
            clip_global_norm(&mut grad, params.clip_norm);
            opt.step(&mut model.params, &grad);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_outputs_head_bias() {
        let mut m = LstmModel::zeros(3, 4, 1, 2);
        *m.params.last_mut().unwrap() = 0.75;
        let input = SequenceInput {
            nodes: vec![vec![0.0; 3]],
            semantic: vec![0.0; 2],
        };
        assert_eq!(m.predict(&input).unwrap(), 0.75);
    }

    #[test]
    fn param_layout_matches_count() {
        let m = LstmModel::init(5, 3, 2, 4, 0);
        assert_eq!(m.params.len(), LstmModel::param_count(5, 3, 2, 4));
        assert_eq!(m.head_offset() + 3 + 4 + 1, m.params.len());
    }

    #[test]
    fn width_mismatch_is_reported() {
        let m = LstmModel::zeros(3, 2, 1, 0);
        let bad = SequenceInput {
            nodes: vec![vec![0.0; 2]],
            semantic: vec![],
        };
        assert!(matches!(
            m.predict(&bad),
            Err(LearnError::WidthMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn memorizes_small_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inputs: Vec<SequenceInput> = (0..10)
            .map(|i| SequenceInput {
                nodes: (0..1 + i % 4)
                    .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                semantic: vec![],
            })
            .collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let p = LstmParams {
            hidden: 16,
            epochs: 2000,
            batch_size: 10,
            learning_rate: 0.01,
            ..LstmParams::default()
        };
        let m = fit_lstm(&inputs, &y, &p).unwrap();
        assert!(m.loss(&inputs, &y) < 0.05, "{}", m.loss(&inputs, &y));
    }
}
