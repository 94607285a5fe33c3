use ndarray::{Array2, ArrayView2};

/// Proximal map of `t_lambda * sum_j rho_j ||col_j||_2`: each column is
/// shrunk by `max(0, 1 - t_lambda rho_j / ||col_j||)`.
pub fn prox_weighted_l21(delta: ArrayView2<f64>, rho: &[f64], t_lambda: f64) -> Array2<f64> {
    assert_eq!(delta.ncols(), rho.len(), "one weight per column");
    let mut out = delta.to_owned();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let scale = (1.0 - t_lambda * rho[j] / norm).max(0.0);
        if scale == 0.0 {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| v * scale);
        }
    }
    out
}

/// Weighted l2,1 norm `sum_j rho_j ||col_j||_2`.
pub fn weighted_l21(delta: ArrayView2<f64>, rho: &[f64]) -> f64 {
    delta
        .columns()
        .into_iter()
        .zip(rho)
        .map(|(c, r)| r * c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum()
}
