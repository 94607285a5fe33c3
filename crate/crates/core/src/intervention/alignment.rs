//! Alignment terms of the penalized objective, evaluated on normalized
//! auxiliary codes, and the chain rule through the l1 normalization.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::latent::ZERO_ROW_NORM;
use crate::transport::{cost_matrix, sinkhorn_warm, Potentials, SinkhornSettings, TransportPlan, TransportProblem};
use crate::{Error, Result};

/// Gradient with respect to `U` of `sum_pq Gamma_pq ||u~_p - w~_q||^2` for a
/// fixed plan, where `u~_p = U_p / (sum(U_p) + 1e-12)`.
pub fn ot_grad_wrt_u(u: ArrayView2<f64>, reference: ArrayView2<f64>, gamma: ArrayView2<f64>) -> Result<Array2<f64>> {
    if gamma.dim() != (u.nrows(), reference.nrows()) || u.ncols() != reference.ncols() {
        return Err(Error::dim(format!(
            "U {:?}, reference {:?}, plan {:?}",
            u.dim(),
            reference.dim(),
            gamma.dim()
        )));
    }
    let u_tilde = crate::latent::normalize_floor(u);
    let g_tilde = fixed_plan_grad_tilde(u_tilde.view(), reference, gamma);
    Ok(chain_normalization(u, g_tilde.view()))
}

/// `d/du~_p = 2 sum_q Gamma_pq (u~_p - w~_q)`.
pub(crate) fn fixed_plan_grad_tilde(
    u_tilde: ArrayView2<f64>,
    reference: ArrayView2<f64>,
    gamma: ArrayView2<f64>,
) -> Array2<f64> {
    let mass = gamma.sum_axis(Axis(1));
    let pulled = gamma.dot(&reference);
    let mut g = u_tilde.to_owned();
    for (p, mut row) in g.outer_iter_mut().enumerate() {
        row *= mass[p];
        row -= &pulled.row(p);
        row *= 2.0;
    }
    g
}

/// Maps a gradient with respect to normalized rows back to the raw rows:
/// `g_U = g~ / (s + e) - (g~ . U) / (s + e)^2` with `s = sum(U_p)`.
pub(crate) fn chain_normalization(u: ArrayView2<f64>, g_tilde: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(u.dim());
    for p in 0..u.nrows() {
        let up = u.row(p);
        let gp = g_tilde.row(p);
        let s = up.sum() + ZERO_ROW_NORM;
        let radial = gp.dot(&up) / (s * s);
        for r in 0..u.ncols() {
            out[[p, r]] = gp[r] / s - radial;
        }
    }
    out
}

/// Which discrepancy between the post-intervention target codes and the
/// reference group drives the optimizer.
#[derive(Debug, Clone)]
pub enum AlignmentTerm {
    /// Entropic OT value `W_eta` against the reference codes.
    EntropicOt {
        reference: Array2<f64>,
        eta: f64,
        sinkhorn: SinkhornSettings,
    },
    /// Squared distance between the target mean code and the reference mean.
    CentroidMatch { reference_mean: Array1<f64> },
    /// Negative mean surrogate margin over the target group.
    OutcomeMargin { beta: Array1<f64>, bias: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct AlignmentEval {
    pub value: f64,
    /// `<Gamma, M>` when the term is OT-based.
    pub transport_cost: Option<f64>,
    pub grad_tilde: Array2<f64>,
    pub plan: Option<TransportPlan>,
}

impl AlignmentTerm {
    pub fn uses_transport(&self) -> bool {
        matches!(self, AlignmentTerm::EntropicOt { .. })
    }

    pub(crate) fn evaluate(&self, u_tilde: ArrayView2<f64>, warm: Option<&Potentials>) -> Result<AlignmentEval> {
        let n_b = u_tilde.nrows() as f64;
        match self {
            AlignmentTerm::EntropicOt { reference, eta, sinkhorn } => {
                let cost = cost_matrix(u_tilde, reference.view())?;
                let plan = sinkhorn_warm(&TransportProblem::uniform(cost, *eta), *sinkhorn, warm)?;
                let grad_tilde = fixed_plan_grad_tilde(u_tilde, reference.view(), plan.gamma.view());
                Ok(AlignmentEval {
                    value: plan.entropic_value,
                    transport_cost: Some(plan.transport_cost),
                    grad_tilde,
                    plan: Some(plan),
                })
            }
            AlignmentTerm::CentroidMatch { reference_mean } => {
                let mean = u_tilde.mean_axis(Axis(0)).expect("nonempty target");
                let diff = &mean - reference_mean;
                let value = diff.dot(&diff);
                let row = diff.mapv(|v| 2.0 * v / n_b);
                let grad_tilde = broadcast_rows(row.view(), u_tilde.nrows());
                Ok(AlignmentEval {
                    value,
                    transport_cost: None,
                    grad_tilde,
                    plan: None,
                })
            }
            AlignmentTerm::OutcomeMargin { beta, bias } => {
                let value = -u_tilde.outer_iter().map(|r| beta.dot(&r) + bias).sum::<f64>() / n_b;
                let row = beta.mapv(|b| -b / n_b);
                Ok(AlignmentEval {
                    value,
                    transport_cost: None,
                    grad_tilde: broadcast_rows(row.view(), u_tilde.nrows()),
                    plan: None,
                })
            }
        }
    }
}

fn broadcast_rows(row: ArrayView1<f64>, n: usize) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((n, row.len()));
    for mut r in out.outer_iter_mut() {
        r.assign(&row);
    }
    out
}
