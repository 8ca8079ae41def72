#![allow(dead_code)]

use std::path::{Path, PathBuf};

use plancost::learn::{LstmModel, MlpModel, SequenceInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_FLOOR: f64 = 1e-7;

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

pub fn templates_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("templates")
}

pub fn reference_plan_fixture() -> &'static str {
    include_str!("../fixtures/tpch_q_limit.json")
}

/// Ten uniform features on [-1, 1] and y = x0^2 + 3 x1 x2 + N(0, 0.1^2).
pub fn synthetic(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        y.push(row[0] * row[0] + 3.0 * row[1] * row[2] + noise.sample(&mut rng));
        x.push(row);
    }
    (x, y)
}

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
/// parameters, with central differences of step `h`.
pub fn max_relative_error(
    params: &[f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
    mut loss_at: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len());
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss_at(&p);
        p[i] = orig - h;
        let down = loss_at(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

pub fn naive_mse(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += (y[i] - p[i]) * (y[i] - p[i]);
    }
    s / y.len() as f64
}

pub fn naive_r2(y: &[f64], p: &[f64]) -> f64 {
    let mut mean = 0.0;
    for v in y {
        mean += v;
    }
    mean /= y.len() as f64;
    let (mut res, mut tot) = (0.0, 0.0);
    for i in 0..y.len() {
        res += (y[i] - p[i]) * (y[i] - p[i]);
        tot += (y[i] - mean) * (y[i] - mean);
    }
    1.0 - res / tot
}

pub fn naive_acc(y: &[f64], p: &[f64], tau: f64) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for i in 0..y.len() {
        if y[i] > 0.0 {
            n += 1;
            if (y[i] - p[i]).abs() / y[i] <= tau {
                hit += 1;
            }
        }
    }
    100.0 * hit as f64 / n as f64
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// Five samples, four inputs, hidden layers 6 and 3.
pub fn mlp_toy() -> (MlpModel, Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_matrix(&mut rng, 5, 4);
    let y = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut model = MlpModel::init(4, &[6, 3], 3);
    // nonzero biases so every path is exercised
    for p in model.params.iter_mut() {
        *p += rng.gen_range(-0.1..0.1);
    }
    (model, x, y)
}

/// Two queries with sequence lengths 2 and 3, hidden width 4.
pub fn lstm_toy(layers: usize) -> (LstmModel, Vec<SequenceInput>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = [2usize, 3]
        .iter()
        .map(|&len| SequenceInput {
            nodes: random_matrix(&mut rng, len, 3),
            semantic: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let mut model = LstmModel::init(3, 4, layers, 2, 5);
    for p in model.params.iter_mut() {
        *p += rng.gen_range(-0.2..0.2);
    }
    (model, inputs, vec![0.7, -1.3])
}
