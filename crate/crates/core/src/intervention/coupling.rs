use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Residual matrix `X_B + Delta_B - U H` (n_B x d).
pub fn coupling_matrix(
    delta: ArrayView2<f64>,
    u: ArrayView2<f64>,
    x_b: ArrayView2<f64>,
    h: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if delta.dim() != x_b.dim() || u.nrows() != x_b.nrows() || u.ncols() != h.nrows() || h.ncols() != x_b.ncols() {
        return Err(Error::dim(format!(
            "delta {:?}, U {:?}, X_B {:?}, H {:?}",
            delta.dim(),
            u.dim(),
            x_b.dim(),
            h.dim()
        )));
    }
    Ok(&x_b + &delta - &u.dot(&h))
}

/// `sum_i ||x_i + Delta_i - U_i H||^2` over the target rows.
pub fn coupling_residual(
    delta: ArrayView2<f64>,
    u: ArrayView2<f64>,
    x_b: ArrayView2<f64>,
    h: ArrayView2<f64>,
) -> Result<f64> {
    Ok(coupling_matrix(delta, u, x_b, h)?.iter().map(|v| v * v).sum())
}

/// Gradients of [`coupling_residual`]: `(d/dDelta, d/dU) = (2R, -2 R H^T)`.
pub fn coupling_gradients(
    delta: ArrayView2<f64>,
    u: ArrayView2<f64>,
    x_b: ArrayView2<f64>,
    h: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let r = coupling_matrix(delta, u, x_b, h)?;
    let gu = -2.0 * r.dot(&h.t());
    Ok((2.0 * r, gu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_delta_and_codes_give_data_norm() {
        let x = array![[1.0, 2.0], [0.5, 0.0]];
        let h = array![[0.5, 0.5]];
        let v = coupling_residual(Array2::zeros((2, 2)).view(), Array2::zeros((2, 1)).view(), x.view(), h.view()).unwrap();
        assert_eq!(v, 1.0 + 4.0 + 0.25);
    }

    #[test]
    fn exact_coupling_at_projection() {
        let h = array![[0.5, 0.5, 0.0], [0.0, 0.25, 0.75]];
        let u = array![[2.0, 1.0]];
        let x = u.dot(&h) - array![[0.1, 0.0, 0.0]];
        let delta = array![[0.1, 0.0, 0.0]];
        let p = crate::latent::nnls_project((&x + &delta).row(0), &h).unwrap();
        let u = p.insert_axis(ndarray::Axis(0));
        assert!(coupling_residual(delta.view(), u.view(), x.view(), h.view()).unwrap() <= 1e-10);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let r = coupling_residual(
            Array2::zeros((2, 2)).view(),
            Array2::zeros((3, 1)).view(),
            Array2::zeros((2, 2)).view(),
            Array2::zeros((1, 2)).view(),
        );
        assert!(r.is_err());
    }
}
