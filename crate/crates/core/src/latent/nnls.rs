use ndarray::{Array1, Array2, ArrayView1};

use crate::linalg::cholesky_solve;
use crate::{Error, Result};

/// Tolerance on the projected-gradient KKT conditions of a returned solution.
pub const NNLS_KKT_TOL: f64 = 1e-6;

/// Lawson-Hanson active-set NNLS against a fixed basis.
///
/// Solves `min_{w >= 0} ||x - w H||^2` through the k x k normal equations,
/// with the Gram matrix `H H^T` computed once.
#[derive(Debug, Clone)]
pub struct BasisProjector {
    h: Array2<f64>,
    gram: Array2<f64>,
}

impl BasisProjector {
    pub fn new(h: &Array2<f64>) -> Self {
        BasisProjector {
            gram: h.dot(&h.t()),
            h: h.clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.h.nrows()
    }

    pub fn d(&self) -> usize {
        self.h.ncols()
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.h
    }

    /// Projects a single row. Panics on length mismatch; see [`nnls_project`]
    /// for the checked entry point.
    pub fn project(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let k = self.k();
        let c = self.h.dot(&x);
        let scale = c.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        let tol = 1e-13 * scale;

        let mut w = Array1::<f64>::zeros(k);
        let mut passive = vec![false; k];

        for _ in 0..(3 * k + 10) {
            // dual = c - G w = -grad / 2
            let dual = &c - &self.gram.dot(&w);
            let candidate = (0..k)
                .filter(|&r| !passive[r])
                .max_by(|&a, &b| dual[a].total_cmp(&dual[b]).then(b.cmp(&a)));
            let Some(t) = candidate else { break };
            if dual[t] <= tol {
                break;
            }
            passive[t] = true;

            loop {
                let idx: Vec<usize> = (0..k).filter(|&r| passive[r]).collect();
                let z = self.solve_passive(&idx, &c);
                let Some(z) = z else {
                    // numerically dependent column: drop it and stop growing
                    passive[t] = false;
                    return self.polish(w, &c);
                };
                if z.iter().all(|&v| v > 0.0) {
                    w.fill(0.0);
                    for (p, &r) in idx.iter().enumerate() {
                        w[r] = z[p];
                    }
                    break;
                }
                let mut alpha = f64::INFINITY;
                for (p, &r) in idx.iter().enumerate() {
                    if z[p] <= 0.0 {
                        let a = w[r] / (w[r] - z[p]);
                        alpha = alpha.min(a);
                    }
                }
                for (p, &r) in idx.iter().enumerate() {
                    w[r] += alpha * (z[p] - w[r]);
                    if w[r] <= 1e-15 * scale {
                        w[r] = 0.0;
                        passive[r] = false;
                    }
                }
            }
        }
        self.polish(w, &c)
    }

    fn solve_passive(&self, idx: &[usize], c: &Array1<f64>) -> Option<Array1<f64>> {
        let m = idx.len();
        let mut g = Array2::<f64>::zeros((m, m));
        let mut rhs = Array1::<f64>::zeros(m);
        for (a, &ra) in idx.iter().enumerate() {
            rhs[a] = c[ra];
            for (b, &rb) in idx.iter().enumerate() {
                g[[a, b]] = self.gram[[ra, rb]];
            }
        }
        cholesky_solve(&g, &rhs)
    }

    /// Re-solves on the final support so the passive components satisfy the
    /// normal equations to working precision.
    fn polish(&self, mut w: Array1<f64>, c: &Array1<f64>) -> Array1<f64> {
        let idx: Vec<usize> = (0..self.k()).filter(|&r| w[r] > 0.0).collect();
        if idx.is_empty() {
            return w;
        }
        if let Some(z) = self.solve_passive(&idx, c) {
            if z.iter().all(|&v| v > 0.0) {
                for (p, &r) in idx.iter().enumerate() {
                    w[r] = z[p];
                }
            }
        }
        w
    }

    /// Gradient of `||x - wH||^2` with respect to `w`.
    pub fn gradient(&self, x: ArrayView1<f64>, w: &Array1<f64>) -> Array1<f64> {
        2.0 * (self.gram.dot(w) - self.h.dot(&x))
    }
}

/// Checked single-row projection onto a fixed basis.
pub fn nnls_project(x: ArrayView1<f64>, h: &Array2<f64>) -> Result<Array1<f64>> {
    if x.len() != h.ncols() {
        return Err(Error::dim(format!("x has length {}, basis has {} columns", x.len(), h.ncols())));
    }
    Ok(BasisProjector::new(h).project(x))
}
