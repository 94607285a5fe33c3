//! Latent-outcome probe and target-aware feature priorities.
//!
//! A logistic model on normalized latent codes plays the role of the
//! surrogate. Shapley values are taken on its log-odds margin, which is
//! linear, so they have the closed form `beta_r * (w_r - background_r)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::cholesky_solve;
use crate::{Error, Result};

pub const DEFAULT_TAU_Y: f64 = 0.5;
pub const DEFAULT_EPS_OMEGA: f64 = 1e-6;
pub const DEFAULT_L2: f64 = 1e-2;

const GRAD_TOL: f64 = 1e-7;
const MAX_ITERS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "threshold")]
pub enum BinarizationRule {
    /// Label 1 iff strictly above the median.
    Median,
    /// Label 1 iff `y >= t`.
    Fixed(f64),
}

pub fn binarize_outcome(y: ArrayView1<f64>, rule: BinarizationRule) -> Result<Vec<u8>> {
    match rule {
        BinarizationRule::Median => {
            let mut sorted = y.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            if n == 0 || sorted[0] == sorted[n - 1] {
                return Err(Error::Degenerate("median binarization of a constant outcome".into()));
            }
            let median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            };
            Ok(y.iter().map(|&v| u8::from(v > median)).collect())
        }
        BinarizationRule::Fixed(t) => Ok(y.iter().map(|&v| u8::from(v >= t)).collect()),
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    #[serde(with = "crate::matrix_serde::vector")]
    pub beta: Array1<f64>,
    pub bias: f64,
    pub tau_y: f64,
    pub train_accuracy: f64,
    pub iterations: usize,
}

impl SurrogateModel {
    pub fn margin(&self, w: ArrayView1<f64>) -> f64 {
        self.beta.dot(&w) + self.bias
    }

    pub fn predict(&self, w: ArrayView1<f64>) -> f64 {
        sigmoid(self.margin(w))
    }

    pub fn predict_rows(&self, w: ArrayView2<f64>) -> Array1<f64> {
        w.outer_iter().map(|r| self.predict(r)).collect()
    }
}

/// Mean logistic loss plus `(l2 / 2) ||beta||^2`; the bias is unpenalized.
pub fn logistic_objective(
    x: ArrayView2<f64>,
    labels: &[u8],
    l2: f64,
    beta: ArrayView1<f64>,
    bias: f64,
) -> f64 {
    let n = x.nrows() as f64;
    let loss: f64 = x
        .outer_iter()
        .zip(labels)
        .map(|(row, &l)| {
            let z = row.dot(&beta) + bias;
            softplus(z) - f64::from(l) * z
        })
        .sum();
    loss / n + 0.5 * l2 * beta.dot(&beta)
}

/// Gradient of [`logistic_objective`] as `(d/dbeta, d/dbias)`.
pub fn logistic_gradient(
    x: ArrayView2<f64>,
    labels: &[u8],
    l2: f64,
    beta: ArrayView1<f64>,
    bias: f64,
) -> (Array1<f64>, f64) {
    let n = x.nrows() as f64;
    let mut g = Array1::<f64>::zeros(x.ncols());
    let mut gb = 0.0;
    for (row, &l) in x.outer_iter().zip(labels) {
        let r = sigmoid(row.dot(&beta) + bias) - f64::from(l);
        g.scaled_add(r, &row);
        gb += r;
    }
    g /= n;
    g.scaled_add(l2, &beta);
    (g, gb / n)
}

/// Fits the logistic probe with damped Newton steps and Armijo backtracking.
///
/// Stops when the gradient infinity norm drops below 1e-7 or after 5000
/// iterations. Deterministic: starts from `beta = 0` and the log-odds of the
/// positive rate.
pub fn fit_logistic(codes: ArrayView2<f64>, labels: &[u8], l2: f64, tau_y: f64) -> Result<SurrogateModel> {
    let (n, k) = codes.dim();
    if labels.len() != n {
        return Err(Error::dim(format!("{n} rows vs {} labels", labels.len())));
    }
    if !(l2 >= 0.0) {
        return Err(Error::invalid("l2 must be nonnegative"));
    }
    if !(tau_y > 0.0 && tau_y < 1.0) {
        return Err(Error::invalid("tau_y must lie in (0, 1)"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::Degenerate("logistic probe needs both classes".into()));
    }

    let mut beta = Array1::<f64>::zeros(k);
    let p = pos as f64 / n as f64;
    let mut bias = (p / (1.0 - p)).ln();
    let mut f = logistic_objective(codes, labels, l2, beta.view(), bias);
    let mut iterations = 0;

    for it in 0..MAX_ITERS {
        iterations = it;
        let (g, gb) = logistic_gradient(codes, labels, l2, beta.view(), bias);
        let gnorm = g.iter().fold(gb.abs(), |m, v| m.max(v.abs()));
        if gnorm < GRAD_TOL {
            break;
        }

        // Hessian on [beta; bias]
        let mut hess = Array2::<f64>::zeros((k + 1, k + 1));
        for row in codes.outer_iter() {
            let s = sigmoid(row.dot(&beta) + bias);
            let wgt = s * (1.0 - s) / n as f64;
            for a in 0..k {
                for b in 0..=a {
                    hess[[a, b]] += wgt * row[a] * row[b];
                }
                hess[[k, a]] += wgt * row[a];
            }
            hess[[k, k]] += wgt;
        }
        for a in 0..=k {
            for b in 0..a {
                hess[[b, a]] = hess[[a, b]];
            }
        }
        for a in 0..k {
            hess[[a, a]] += l2;
        }
        let mut grad = Array1::<f64>::zeros(k + 1);
        grad.slice_mut(ndarray::s![..k]).assign(&g);
        grad[k] = gb;

        let dir = match cholesky_solve(&hess, &grad) {
            Some(step) => -step,
            None => -grad.clone(),
        };
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-16 {
            let nb = &beta + &(t * &dir.slice(ndarray::s![..k]));
            let nbias = bias + t * dir[k];
            let nf = logistic_objective(codes, labels, l2, nb.view(), nbias);
            if nf <= f + 1e-4 * t * slope {
                beta = nb;
                bias = nbias;
                f = nf;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let correct = codes
        .outer_iter()
        .zip(labels)
        .filter(|(row, &l)| u8::from(sigmoid(row.dot(&beta) + bias) >= tau_y) == l)
        .count();
    Ok(SurrogateModel {
        beta,
        bias,
        tau_y,
        train_accuracy: correct as f64 / n as f64,
        iterations,
    })
}

/// Exact Shapley values of the log-odds margin: `phi[i, r] = beta_r (w[i, r] - background_r)`.
pub fn shapley_latent(
    model: &SurrogateModel,
    codes: ArrayView2<f64>,
    background: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    let k = model.beta.len();
    if codes.ncols() != k || background.len() != k {
        return Err(Error::dim(format!(
            "model has {k} factors, codes have {}, background has {}",
            codes.ncols(),
            background.len()
        )));
    }
    let mut phi = codes.to_owned();
    for mut row in phi.outer_iter_mut() {
        for r in 0..k {
            row[r] = model.beta[r] * (row[r] - background[r]);
        }
    }
    Ok(phi)
}

/// Mean absolute Shapley value per factor over the target respondents.
pub fn aggregate_relevance(phi: ArrayView2<f64>, target: &[usize]) -> Result<Array1<f64>> {
    if target.is_empty() {
        return Err(Error::invalid("target index set is empty"));
    }
    let mut out = Array1::<f64>::zeros(phi.ncols());
    for &i in target {
        out.zip_mut_with(&phi.row(i), |o, &v| *o += v.abs());
    }
    out /= target.len() as f64;
    Ok(out)
}

/// Indices of the `q` largest relevances, descending, ties to the lower index.
pub fn select_topq(varphi: ArrayView1<f64>, q: usize) -> Result<Vec<usize>> {
    let k = varphi.len();
    if q == 0 || q > k {
        return Err(Error::invalid(format!("q = {q} must be in 1..={k}")));
    }
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| varphi[b].total_cmp(&varphi[a]).then(a.cmp(&b)));
    idx.truncate(q);
    Ok(idx)
}

/// `omega_j = sum_{r in K_q} varphi_r H[r, j]` over the controllable features
/// and `rho_j = 1 / (omega_j + eps_omega)`.
pub fn feature_priorities(
    top: &[usize],
    varphi: ArrayView1<f64>,
    h: ArrayView2<f64>,
    controllable: &[usize],
    eps_omega: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if !(eps_omega > 0.0) {
        return Err(Error::invalid("eps_omega must be positive"));
    }
    let omega: Array1<f64> = controllable
        .iter()
        .map(|&j| top.iter().map(|&r| varphi[r] * h[[r, j]]).sum())
        .collect();
    let rho = omega.mapv(|o| 1.0 / (o + eps_omega));
    Ok((omega, rho))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorityProvenance {
    pub seed: u64,
    pub q: usize,
    pub eps_omega: f64,
    pub binarization: BinarizationRule,
    pub l2: f64,
}

/// Everything the optimizer needs from the attribution stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorityWeights {
    #[serde(with = "crate::matrix_serde")]
    pub phi: Array2<f64>,
    #[serde(with = "crate::matrix_serde::vector")]
    pub varphi: Array1<f64>,
    #[serde(rename = "K_q")]
    pub top_factors: Vec<usize>,
    /// Feature indices (S_ctrl) that `omega` and `rho` are indexed by.
    pub controllable: Vec<usize>,
    #[serde(with = "crate::matrix_serde::vector")]
    pub omega: Array1<f64>,
    #[serde(with = "crate::matrix_serde::vector")]
    pub rho: Array1<f64>,
    pub eps_omega: f64,
    #[serde(with = "crate::matrix_serde::vector")]
    pub background: Array1<f64>,
    pub provenance: PriorityProvenance,
}

impl PriorityWeights {
    pub fn omega_of(&self, feature: usize) -> Option<f64> {
        self.controllable.iter().position(|&j| j == feature).map(|p| self.omega[p])
    }

    pub fn rho_of(&self, feature: usize) -> Option<f64> {
        self.controllable.iter().position(|&j| j == feature).map(|p| self.rho[p])
    }

    /// Copy with every controllable feature given the mean priority, so the
    /// penalty weights are uniform.
    pub fn flattened(&self) -> PriorityWeights {
        let mut out = self.clone();
        let m = if self.omega.is_empty() { 0.0 } else { self.omega.mean().unwrap_or(0.0) };
        out.omega.fill(m);
        out.rho.fill(1.0 / (m + self.eps_omega));
        out
    }
}

pub struct PrioritySettings {
    pub q: usize,
    pub eps_omega: f64,
    pub seed: u64,
    pub binarization: BinarizationRule,
    pub l2: f64,
}

/// Runs the attribution stage end to end: Shapley against the full-sample
/// mean code, relevance over the target group, top-q factors, priorities.
pub fn compute_priorities(
    model: &SurrogateModel,
    codes: ArrayView2<f64>,
    target: &[usize],
    h: ArrayView2<f64>,
    controllable: &[usize],
    settings: &PrioritySettings,
) -> Result<PriorityWeights> {
    let background = codes
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::invalid("no latent codes"))?;
    let phi = shapley_latent(model, codes, background.view())?;
    let varphi = aggregate_relevance(phi.view(), target)?;
    let top = select_topq(varphi.view(), settings.q)?;
    let (omega, rho) = feature_priorities(&top, varphi.view(), h, controllable, settings.eps_omega)?;
    Ok(PriorityWeights {
        phi,
        varphi,
        top_factors: top,
        controllable: controllable.to_vec(),
        omega,
        rho,
        eps_omega: settings.eps_omega,
        background,
        provenance: PriorityProvenance {
            seed: settings.seed,
            q: settings.q,
            eps_omega: settings.eps_omega,
            binarization: settings.binarization,
            l2: settings.l2,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn median_rule_is_strict() {
        let y = array![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(binarize_outcome(y.view(), BinarizationRule::Median).unwrap(), vec![0, 0, 0, 1, 1]);
        assert!(binarize_outcome(array![2.0, 2.0, 2.0].view(), BinarizationRule::Median).is_err());
        assert_eq!(
            binarize_outcome(array![0.2, 0.8].view(), BinarizationRule::Fixed(0.5)).unwrap(),
            vec![0, 1]
        );
    }

    #[test]
    fn separable_data_fits_perfectly() {
        let x = array![[0.1], [0.2], [0.3], [0.7], [0.8], [0.9]];
        let m = fit_logistic(x.view(), &[0, 0, 0, 1, 1, 1], 0.1, 0.5).unwrap();
        assert_eq!(m.train_accuracy, 1.0);
    }

    #[test]
    fn independent_labels_give_small_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 500;
        let raw = Array2::from_shape_fn((n, 4), |_| rng.random_range(0.0..1.0));
        let codes = crate::latent::normalize_rows(raw.view()).w_tilde;
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let m = fit_logistic(codes.view(), &labels, 0.1, 0.5).unwrap();
        let max = m.beta.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        // max |beta| = 0.022 for this seed
        assert!(max < 0.5, "{max}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((40, 3), |_| rng.random_range(0.0..1.0));
        let labels: Vec<u8> = (0..40).map(|i| u8::from(x[[i, 0]] + 0.3 * rng.random::<f64>() > 0.6)).collect();
        let m = fit_logistic(x.view(), &labels, 0.05, 0.5).unwrap();
        let (g, gb) = logistic_gradient(x.view(), &labels, 0.05, m.beta.view(), m.bias);
        assert!(g.iter().all(|v| v.abs() < 1e-7) && gb.abs() < 1e-7);

        // away from the optimum, compare against central differences
        let beta = &m.beta + &array![0.3, -0.2, 0.5];
        let bias = m.bias - 0.4;
        let (g, gb) = logistic_gradient(x.view(), &labels, 0.05, beta.view(), bias);
        let h = 1e-6;
        for r in 0..3 {
            let mut bp = beta.clone();
            bp[r] += h;
            let mut bm = beta.clone();
            bm[r] -= h;
            let fd = (logistic_objective(x.view(), &labels, 0.05, bp.view(), bias)
                - logistic_objective(x.view(), &labels, 0.05, bm.view(), bias))
                / (2.0 * h);
            assert!((fd - g[r]).abs() <= 1e-5 * g[r].abs().max(1e-3), "{fd} vs {}", g[r]);
        }
        let fd = (logistic_objective(x.view(), &labels, 0.05, beta.view(), bias + h)
            - logistic_objective(x.view(), &labels, 0.05, beta.view(), bias - h))
            / (2.0 * h);
        assert!((fd - gb).abs() <= 1e-5 * gb.abs().max(1e-3));
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.1], [0.2]];
        assert!(fit_logistic(x.view(), &[1, 1], 0.1, 0.5).is_err());
    }

    fn model(beta: Array1<f64>) -> SurrogateModel {
        SurrogateModel {
            beta,
            bias: 0.3,
            tau_y: 0.5,
            train_accuracy: 1.0,
            iterations: 0,
        }
    }

    #[test]
    fn shapley_null_model_and_reference_point() {
        let codes = array![[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]];
        let bg = array![0.4, 0.2, 0.4];
        let phi = shapley_latent(&model(Array1::zeros(3)), codes.view(), bg.view()).unwrap();
        assert!(phi.iter().all(|&v| v == 0.0));
        let at_bg = bg.clone().insert_axis(Axis(0));
        let phi = shapley_latent(&model(array![1.0, -2.0, 0.5]), at_bg.view(), bg.view()).unwrap();
        assert!(phi.iter().all(|&v| v == 0.0));
        assert!(shapley_latent(&model(array![1.0, 2.0]), codes.view(), bg.view()).is_err());
    }

    #[test]
    fn relevance_uses_absolute_values() {
        let phi = array![[1.0, -1.0], [-1.0, 1.0], [5.0, 5.0]];
        assert_eq!(aggregate_relevance(phi.view(), &[0, 1]).unwrap().to_vec(), vec![1.0, 1.0]);
        assert_eq!(aggregate_relevance(phi.view(), &[1]).unwrap().to_vec(), vec![1.0, 1.0]);
        let zero = Array2::<f64>::zeros((2, 3));
        assert_eq!(aggregate_relevance(zero.view(), &[0, 1]).unwrap().to_vec(), vec![0.0; 3]);
        assert!(aggregate_relevance(phi.view(), &[]).is_err());
    }

    #[test]
    fn topq_ordering_and_ties() {
        assert_eq!(select_topq(array![0.1, 0.9, 0.5].view(), 2).unwrap(), vec![1, 2]);
        assert_eq!(select_topq(array![0.1, 0.9, 0.5].view(), 3).unwrap(), vec![1, 2, 0]);
        assert_eq!(select_topq(array![0.5, 0.5].view(), 1).unwrap(), vec![0]);
        assert!(select_topq(array![0.5, 0.5].view(), 0).is_err());
        assert!(select_topq(array![0.5, 0.5].view(), 3).is_err());
    }

    #[test]
    fn priorities_transfer_through_basis() {
        let h = array![[0.5, 0.5, 0.0], [0.1, 0.2, 0.7]];
        let (omega, rho) =
            feature_priorities(&[0], array![2.0, 9.0].view(), h.view(), &[0, 1, 2], 1e-6).unwrap();
        assert_eq!(omega.to_vec(), vec![1.0, 1.0, 0.0]);
        assert_eq!(rho[2], 1.0 / 1e-6);

        let (omega, rho) =
            feature_priorities(&[0, 1], array![0.0, 0.0].view(), h.view(), &[0, 2], 1e-3).unwrap();
        assert_eq!(omega.to_vec(), vec![0.0, 0.0]);
        assert_eq!(rho.to_vec(), vec![1000.0, 1000.0]);
    }
}
