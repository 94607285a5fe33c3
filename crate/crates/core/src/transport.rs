//! Entropic optimal transport between uniform empirical measures.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Squared Euclidean ground cost between the rows of `u` and the rows of `v`.
pub fn cost_matrix(u: ArrayView2<f64>, v: ArrayView2<f64>) -> Result<Array2<f64>> {
    if u.ncols() != v.ncols() {
        return Err(Error::dim(format!("{} vs {} latent dimensions", u.ncols(), v.ncols())));
    }
    let mut m = Array2::<f64>::zeros((u.nrows(), v.nrows()));
    for (p, up) in u.outer_iter().enumerate() {
        for (q, vq) in v.outer_iter().enumerate() {
            m[[p, q]] = up.iter().zip(vq.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub cost: Array2<f64>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    pub eta: f64,
}

impl TransportProblem {
    /// Uniform marginals on both sides.
    pub fn uniform(cost: Array2<f64>, eta: f64) -> Self {
        let (n, m) = cost.dim();
        TransportProblem {
            a: Array1::from_elem(n, 1.0 / n as f64),
            b: Array1::from_elem(m, 1.0 / m as f64),
            cost,
            eta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        SinkhornSettings {
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

/// Dual potentials `(f, g)` with `Gamma = exp((f_p + g_q - M_pq) / eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub f: Array1<f64>,
    pub g: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub gamma: Array2<f64>,
    /// `<Gamma, M>`.
    pub transport_cost: f64,
    /// `<Gamma, M> + eta * sum Gamma (log Gamma - 1)`.
    pub entropic_value: f64,
    pub iters: usize,
    pub marginal_err: f64,
    pub potentials: Potentials,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn sinkhorn(problem: &TransportProblem, settings: SinkhornSettings) -> Result<TransportPlan> {
    sinkhorn_warm(problem, settings, None)
}

/// Log-domain Sinkhorn, optionally warm-started from earlier potentials of
/// the same shape.
pub fn sinkhorn_warm(
    problem: &TransportProblem,
    settings: SinkhornSettings,
    warm: Option<&Potentials>,
) -> Result<TransportPlan> {
    let TransportProblem { cost, a, b, eta } = problem;
    let eta = *eta;
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    let (n, m) = cost.dim();
    if a.len() != n || b.len() != m || n == 0 || m == 0 {
        return Err(Error::dim("marginals do not match the cost matrix".to_string()));
    }
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);

    let (mut f, mut g) = match warm {
        Some(p) if p.f.len() == n && p.g.len() == m => (p.f.clone(), p.g.clone()),
        _ => (Array1::<f64>::zeros(n), Array1::<f64>::zeros(m)),
    };

    let row_update = |g: &Array1<f64>, f: &mut Array1<f64>| {
        for p in 0..n {
            let lse = log_sum_exp((0..m).map(|q| (g[q] - cost[[p, q]]) / eta));
            f[p] = eta * (log_a[p] - lse);
        }
    };
    let col_update = |f: &Array1<f64>, g: &mut Array1<f64>| {
        for q in 0..m {
            let lse = log_sum_exp((0..n).map(|p| (f[p] - cost[[p, q]]) / eta));
            g[q] = eta * (log_b[q] - lse);
        }
    };
    // after a column update, the column marginals are exact up to rounding,
    // so the row error is the convergence measure
    let row_err = |f: &Array1<f64>, g: &Array1<f64>| -> f64 {
        (0..n)
            .map(|p| {
                let s: f64 = (0..m).map(|q| ((f[p] + g[q] - cost[[p, q]]) / eta).exp()).sum();
                (s - a[p]).abs()
            })
            .fold(0.0, f64::max)
    };

    let mut iters = 0;
    while iters < settings.max_iters {
        row_update(&g, &mut f);
        col_update(&f, &mut g);
        iters += 1;
        if row_err(&f, &g) < settings.tol {
            break;
        }
    }

    let gamma = Array2::from_shape_fn((n, m), |(p, q)| ((f[p] + g[q] - cost[[p, q]]) / eta).exp());
    let col_err = (0..m)
        .map(|q| (gamma.column(q).sum() - b[q]).abs())
        .fold(0.0, f64::max);
    let row_err_final = (0..n)
        .map(|p| (gamma.row(p).sum() - a[p]).abs())
        .fold(0.0, f64::max);
    let marginal_err = col_err.max(row_err_final);
    if marginal_err >= settings.tol {
        return Err(Error::SinkhornNotConverged {
            iters,
            marginal_err,
        });
    }

    let transport_cost: f64 = gamma.iter().zip(cost.iter()).map(|(g, c)| g * c).sum();
    let entropy_term: f64 = gamma
        .iter()
        .map(|&x| if x > 0.0 { x * (x.ln() - 1.0) } else { 0.0 })
        .sum();
    Ok(TransportPlan {
        gamma,
        transport_cost,
        entropic_value: transport_cost + eta * entropy_term,
        iters,
        marginal_err,
        potentials: Potentials { f, g },
    })
}

/// Transport-cost discrepancy `<Gamma, M>` between two uniform measures given
/// by their support rows.
pub fn ot_discrepancy(
    source: ArrayView2<f64>,
    target: ArrayView2<f64>,
    eta: f64,
    settings: SinkhornSettings,
) -> Result<TransportPlan> {
    let cost = cost_matrix(source, target)?;
    sinkhorn(&TransportProblem::uniform(cost, eta), settings)
}

/// Squared Euclidean distance between two vectors.
pub fn sq_euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}
