#![allow(dead_code)]

pub mod oracles;

use latent_align::experiment::{DataSource, ExperimentConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The frozen synthetic fixture: n = 500, k = 6, G = 3.
pub fn fixture_config() -> ExperimentConfig {
    let mut c = ExperimentConfig {
        data: DataSource::Synthetic {
            n: 500,
            k_true: 6,
            seed: 11,
        },
        k: 6,
        groups: 3,
        seeds: vec![42],
        ..ExperimentConfig::default()
    };
    c.optimizer.lambda = 0.003;
    c.optimizer.beta_couple = 1.0;
    c.optimizer.step_u = 1.0;
    c.optimizer.step_delta = 0.5;
    c.optimizer.max_outer = 1000;
    c
}

pub const FIXTURE_LAMBDA_SWEEP: [f64; 4] = [0.003, 0.01, 0.02, 0.05];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

/// Gaussian elimination with partial pivoting; `None` if singular.
pub fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = b.clone();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))?;
        if m[[p, c]].abs() < 1e-13 {
            return None;
        }
        for j in 0..n {
            m.swap([c, j], [p, j]);
        }
        v.swap(c, p);
        for r in (c + 1)..n {
            let f = m[[r, c]] / m[[c, c]];
            for j in c..n {
                m[[r, j]] -= f * m[[c, j]];
            }
            v[r] -= f * v[c];
        }
    }
    let mut x = Array1::<f64>::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|j| m[[r, j]] * x[j]).sum();
        x[r] = (v[r] - s) / m[[r, r]];
    }
    Some(x)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
