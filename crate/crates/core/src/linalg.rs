//! Small dense helpers for the k x k systems that show up in NNLS and the
//! logistic probe. Sizes stay well below 64, so plain Cholesky is enough.

use ndarray::{Array1, Array2};

/// Solves `a * x = b` for symmetric positive definite `a`.
///
/// Returns `None` when a pivot drops below `1e-14 * max_diag`, which the
/// callers treat as numerical rank deficiency.
pub(crate) fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), n);
    let max_diag = (0..n).map(|i| a[[i, i]].abs()).fold(0.0_f64, f64::max);
    let floor = 1e-14 * max_diag.max(f64::MIN_POSITIVE);

    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= floor {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }

    let mut z = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

/// Orthogonal projector `H^T (H H^T)^-1 H` onto the row space of `h`.
pub(crate) fn row_space_projector(h: &Array2<f64>) -> Option<Array2<f64>> {
    let (k, d) = h.dim();
    let gram = h.dot(&h.t());
    let mut g_inv_h = Array2::<f64>::zeros((k, d));
    for j in 0..d {
        let col = cholesky_solve(&gram, &h.column(j).to_owned())?;
        g_inv_h.column_mut(j).assign(&col);
    }
    Some(h.t().dot(&g_inv_h))
}
