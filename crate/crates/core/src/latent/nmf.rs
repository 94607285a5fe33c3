use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MU_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for NmfSettings {
    fn default() -> Self {
        NmfSettings {
            max_iters: 2000,
            tol: 1e-7,
        }
    }
}

/// Frozen basis `H` (rows sum to one) and coefficients `W` with `X ~ W H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatentModelFile", into = "LatentModelFile")]
pub struct LatentModel {
    pub h: Array2<f64>,
    pub w: Array2<f64>,
    pub k: usize,
    pub fit_loss: f64,
    pub seed: u64,
    pub iters_run: usize,
    /// Squared Frobenius loss after each multiplicative update (not serialized).
    pub loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
struct LatentModelFile {
    k: usize,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    fit_loss: f64,
    seed: u64,
    iters_run: usize,
}

impl From<LatentModel> for LatentModelFile {
    fn from(m: LatentModel) -> Self {
        LatentModelFile {
            k: m.k,
            h: crate::matrix_serde::rows(&m.h),
            w: crate::matrix_serde::rows(&m.w),
            fit_loss: m.fit_loss,
            seed: m.seed,
            iters_run: m.iters_run,
        }
    }
}

impl TryFrom<LatentModelFile> for LatentModel {
    type Error = Error;

    fn try_from(f: LatentModelFile) -> Result<Self> {
        let h = crate::matrix_serde::from_rows(&f.h, 0).map_err(Error::dim)?;
        let w = crate::matrix_serde::from_rows(&f.w, f.k).map_err(Error::dim)?;
        let m = LatentModel {
            h,
            w,
            k: f.k,
            fit_loss: f.fit_loss,
            seed: f.seed,
            iters_run: f.iters_run,
            loss_trace: Vec::new(),
        };
        m.check()?;
        Ok(m)
    }
}

impl LatentModel {
    /// Re-checks the structural invariants (used after deserialization).
    pub fn check(&self) -> Result<()> {
        if self.h.nrows() != self.k || self.w.ncols() != self.k {
            return Err(Error::dim(format!(
                "k = {} but H is {:?} and W is {:?}",
                self.k,
                self.h.dim(),
                self.w.dim()
            )));
        }
        if self.k > self.w.nrows().min(self.h.ncols()) {
            return Err(Error::invalid("rank exceeds min(n, d)"));
        }
        if self.h.iter().chain(self.w.iter()).any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("latent factors must be nonnegative"));
        }
        for (r, row) in self.h.outer_iter().enumerate() {
            if (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("basis row {r} sums to {}", row.sum())));
            }
        }
        if !(self.fit_loss >= 0.0) {
            return Err(Error::invalid("fit_loss must be nonnegative"));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.h.ncols()
    }
}

fn frobenius_loss(x: ArrayView2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let r = &x - &w.dot(h);
    r.iter().map(|v| v * v).sum()
}

/// Standard Frobenius NMF by Lee-Seung multiplicative updates.
///
/// Both factors start from seeded uniform entries in (0.01, 1.01). Iteration
/// stops when the relative loss decrease falls below `tol` or after
/// `max_iters` sweeps. The basis rows are then rescaled to unit l1 norm and
/// the scale moved into `W`, which leaves `W H` unchanged.
pub fn fit_nmf(x: ArrayView2<f64>, k: usize, seed: u64, settings: NmfSettings) -> Result<LatentModel> {
    let (n, d) = x.dim();
    if k == 0 || k > n.min(d) {
        return Err(Error::invalid(format!("rank k = {k} must be in 1..=min(n, d) = {}", n.min(d))));
    }
    if settings.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if x.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("NMF input must be nonnegative and finite"));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("NMF input is all zeros".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((n, k), |_| rng.random_range(0.01..1.01));
    let mut h = Array2::from_shape_fn((k, d), |_| rng.random_range(0.01..1.01));

    let mut loss = frobenius_loss(x, &w, &h);
    let mut trace = Vec::with_capacity(settings.max_iters.min(4096));
    let mut iters = 0;
    for _ in 0..settings.max_iters {
        iters += 1;
        let wt = w.t();
        let num_h = wt.dot(&x);
        let den_h = wt.dot(&w).dot(&h);
        h.zip_mut_with(&num_h, |hv, &nv| *hv *= nv);
        h.zip_mut_with(&den_h, |hv, &dv| *hv /= dv + MU_GUARD);

        let num_w = x.dot(&h.t());
        let den_w = w.dot(&h.dot(&h.t()));
        w.zip_mut_with(&num_w, |wv, &nv| *wv *= nv);
        w.zip_mut_with(&den_w, |wv, &dv| *wv /= dv + MU_GUARD);

        let next = frobenius_loss(x, &w, &h);
        trace.push(next);
        let rel = (loss - next) / loss.max(f64::MIN_POSITIVE);
        loss = next;
        if rel < settings.tol {
            break;
        }
    }

    for r in 0..k {
        let s = h.row(r).sum();
        if s > 0.0 {
            h.row_mut(r).mapv_inplace(|v| v / s);
            w.column_mut(r).mapv_inplace(|v| v * s);
        } else {
            // dead factor: contributes nothing, keep H on the simplex
            h.row_mut(r).fill(1.0 / d as f64);
            w.column_mut(r).fill(0.0);
        }
    }

    let fit_loss = frobenius_loss(x, &w, &h);
    Ok(LatentModel {
        h,
        w,
        k,
        fit_loss,
        seed,
        iters_run: iters,
        loss_trace: trace,
    })
}
