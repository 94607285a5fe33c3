//! Fixed-basis latent representation.
//!
//! The basis `H` is learned once by [`fit_nmf`], rescaled so every row has
//! unit l1 norm, and never touched again. Any feature vector, observed or
//! post-intervention, is mapped to latent coordinates by [`nnls_project`].

mod nmf;
mod nnls;

pub use nmf::{fit_nmf, LatentModel, NmfSettings};
pub use nnls::{nnls_project, BasisProjector, NNLS_KKT_TOL};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Norm below which a code row is treated as degenerate.
pub const ZERO_ROW_NORM: f64 = 1e-12;

/// Row-l1-normalized latent codes with a mask flagging degenerate rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCodes {
    #[serde(with = "crate::matrix_serde")]
    pub w_tilde: Array2<f64>,
    pub zero_rows: Vec<bool>,
}

impl NormalizedCodes {
    pub fn n(&self) -> usize {
        self.w_tilde.nrows()
    }

    pub fn k(&self) -> usize {
        self.w_tilde.ncols()
    }

    pub fn select(&self, indices: &[usize]) -> Array2<f64> {
        self.w_tilde.select(ndarray::Axis(0), indices)
    }
}

/// Divides each row by its l1 norm. Rows with norm below [`ZERO_ROW_NORM`]
/// become the uniform vector `1/k` and are masked.
pub fn normalize_rows(w: ArrayView2<f64>) -> NormalizedCodes {
    let (n, k) = w.dim();
    let mut w_tilde = Array2::<f64>::zeros((n, k));
    let mut zero_rows = vec![false; n];
    for (i, row) in w.outer_iter().enumerate() {
        let s: f64 = row.iter().map(|v| v.abs()).sum();
        if s < ZERO_ROW_NORM {
            w_tilde.row_mut(i).fill(1.0 / k as f64);
            zero_rows[i] = true;
        } else {
            w_tilde.row_mut(i).assign(&row.mapv(|v| v / s));
        }
    }
    NormalizedCodes { w_tilde, zero_rows }
}

/// Normalization used inside the optimizer: `u / (sum(u) + ZERO_ROW_NORM)`,
/// differentiable everywhere on the nonnegative orthant.
pub fn normalize_floor(u: ArrayView2<f64>) -> Array2<f64> {
    let mut out = u.to_owned();
    for mut row in out.outer_iter_mut() {
        let s = row.sum() + ZERO_ROW_NORM;
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Projects every row of `x` onto the basis, in parallel, assembling rows in
/// input order.
pub fn project_rows(x: ArrayView2<f64>, projector: &BasisProjector) -> Array2<f64> {
    use rayon::prelude::*;
    let rows: Vec<Array1<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| projector.project(x.row(i)))
        .collect();
    let mut out = Array2::<f64>::zeros((x.nrows(), projector.k()));
    for (i, r) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&r);
    }
    out
}
