//! Conversion, effort and alignment metrics, and the pre/post movement table.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::attribution::SurrogateModel;
use crate::grouping::GroupAssignment;
use crate::latent::{normalize_rows, project_rows, BasisProjector};
use crate::transport::{ot_discrepancy, SinkhornSettings};
use crate::{Error, Result};

/// Mean-probability gap above which the NNLS cross-check is flagged.
pub const CROSS_CHECK_TOL: f64 = 1e-3;
const EFFORT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversionMetrics {
    pub n_conv: usize,
    pub r_conv: f64,
    pub mean_dp: f64,
}

/// Counts target respondents whose probability moves from below `tau_y` to
/// at least `tau_y`.
pub fn conversion_metrics(
    model: &SurrogateModel,
    pre: ArrayView2<f64>,
    post: ArrayView2<f64>,
    tau_y: f64,
) -> Result<ConversionMetrics> {
    if pre.dim() != post.dim() {
        return Err(Error::dim(format!("pre {:?} vs post {:?}", pre.dim(), post.dim())));
    }
    if !(tau_y > 0.0 && tau_y < 1.0) {
        return Err(Error::invalid(format!("tau_y must lie in (0, 1), got {tau_y}")));
    }
    let p0 = model.predict_rows(pre);
    let p1 = model.predict_rows(post);
    Ok(conversion_from_probs(p0.view(), p1.view(), tau_y))
}

fn conversion_from_probs(p0: ArrayView1<f64>, p1: ArrayView1<f64>, tau_y: f64) -> ConversionMetrics {
    let n = p0.len();
    let n_conv = p0.iter().zip(p1.iter()).filter(|(a, b)| **a < tau_y && **b >= tau_y).count();
    let mean_dp = if n == 0 { 0.0 } else { (&p1 - &p0).sum() / n as f64 };
    ConversionMetrics {
        n_conv,
        r_conv: if n == 0 { 0.0 } else { n_conv as f64 / n as f64 },
        mean_dp,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnNorm {
    pub feature: usize,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortSummary {
    pub effort: f64,
    pub n_lever: usize,
    /// Column norms over the controllable features, in feature order.
    pub columns: Vec<ColumnNorm>,
}

/// `effort = sum_j ||Delta_:,j||_2` over `controllable`; a lever is active
/// when its norm exceeds `tau_delta`.
pub fn effort_and_levers(delta: ArrayView2<f64>, controllable: &[usize], tau_delta: f64) -> EffortSummary {
    let columns: Vec<ColumnNorm> = controllable
        .iter()
        .map(|&j| ColumnNorm {
            feature: j,
            norm: delta.column(j).iter().map(|v| v * v).sum::<f64>().sqrt(),
        })
        .collect();
    EffortSummary {
        effort: columns.iter().map(|c| c.norm).sum(),
        n_lever: columns.iter().filter(|c| c.norm > tau_delta).count(),
        columns,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMetrics {
    pub w_before: f64,
    pub w_after: f64,
    pub dw: f64,
    pub rho_reduction: f64,
    /// Set when `w_before` is zero and the relative reduction is undefined.
    pub degenerate: bool,
}

/// OT discrepancies (transport-cost part) of the target group to the
/// reference, before and after.
pub fn alignment_metrics(
    target_pre: ArrayView2<f64>,
    target_post: ArrayView2<f64>,
    reference: ArrayView2<f64>,
    eta: f64,
    settings: SinkhornSettings,
) -> Result<AlignmentMetrics> {
    if target_pre.nrows() == 0 || target_post.nrows() == 0 || reference.nrows() == 0 {
        return Err(Error::invalid("empty measure"));
    }
    let w_before = ot_discrepancy(target_pre, reference, eta, settings)?.transport_cost;
    let w_after = ot_discrepancy(target_post, reference, eta, settings)?.transport_cost;
    Ok(alignment_from_values(w_before, w_after))
}

fn alignment_from_values(w_before: f64, w_after: f64) -> AlignmentMetrics {
    let dw = w_before - w_after;
    let degenerate = !(w_before > 0.0);
    AlignmentMetrics {
        w_before,
        w_after,
        dw,
        rho_reduction: if degenerate { 0.0 } else { dw / w_before },
        degenerate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementRow {
    pub group: String,
    pub size: usize,
    pub mean_prob: f64,
    pub centroid_distance: f64,
    pub ot_to_reference: f64,
}

/// Reference, target-pre and target-post rows. `codes` are the normalized
/// codes of all respondents; `target_post` the post codes of the target
/// group in target order.
pub fn group_movement_report(
    groups: &GroupAssignment,
    model: &SurrogateModel,
    codes: ArrayView2<f64>,
    target_post: ArrayView2<f64>,
    eta: f64,
    settings: SinkhornSettings,
) -> Result<Vec<MovementRow>> {
    let reference = codes.select(Axis(0), &groups.reference_indices);
    let target_pre = codes.select(Axis(0), &groups.target_indices);
    if target_post.dim() != target_pre.dim() {
        return Err(Error::dim(format!("post codes {:?} vs target {:?}", target_post.dim(), target_pre.dim())));
    }
    let centroid = |m: ArrayView2<f64>| -> Result<Array1<f64>> {
        m.mean_axis(Axis(0)).ok_or_else(|| Error::invalid("empty group"))
    };
    let c_ref = centroid(reference.view())?;
    let dist = |c: &Array1<f64>| (c - &c_ref).mapv(|v| v * v).sum().sqrt();
    let mean_prob = |m: ArrayView2<f64>| model.predict_rows(m).mean().unwrap_or(0.0);

    let mut rows = vec![MovementRow {
        group: "reference".into(),
        size: reference.nrows(),
        mean_prob: mean_prob(reference.view()),
        centroid_distance: 0.0,
        ot_to_reference: 0.0,
    }];
    for (name, m) in [("target_pre", target_pre.view()), ("target_post", target_post)] {
        rows.push(MovementRow {
            group: name.into(),
            size: m.nrows(),
            mean_prob: mean_prob(m),
            centroid_distance: dist(&centroid(m)?),
            ot_to_reference: ot_discrepancy(m, reference.view(), eta, settings)?.transport_cost,
        });
    }
    Ok(rows)
}

/// Conversion recomputed from exact NNLS codes of `x + Delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub n_conv: usize,
    pub r_conv: f64,
    pub mean_dp: f64,
    /// `|mean_dp(nnls) - mean_dp(auxiliary)|`.
    pub mean_prob_gap: f64,
    pub flagged: bool,
}

/// Projects the intervened target rows onto the basis and evaluates
/// conversion on the result.
pub fn nnls_cross_check(
    model: &SurrogateModel,
    x: ArrayView2<f64>,
    delta: ArrayView2<f64>,
    basis: &Array2<f64>,
    target: &[usize],
    target_pre: ArrayView2<f64>,
    reported: &ConversionMetrics,
    tau_y: f64,
) -> Result<CrossCheck> {
    let post_x = (&x + &delta).select(Axis(0), target);
    let projector = BasisProjector::new(basis);
    let post = normalize_rows(project_rows(post_x.view(), &projector).view()).w_tilde;
    let c = conversion_metrics(model, target_pre, post.view(), tau_y)?;
    let gap = (c.mean_dp - reported.mean_dp).abs();
    Ok(CrossCheck {
        n_conv: c.n_conv,
        r_conv: c.r_conv,
        mean_dp: c.mean_dp,
        mean_prob_gap: gap,
        flagged: gap > CROSS_CHECK_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_b: usize,
    pub n_conv: usize,
    pub r_conv: f64,
    pub mean_dp: f64,
    pub effort: f64,
    pub n_lever: usize,
    pub eff_conv: f64,
    pub w_before: f64,
    pub w_after: f64,
    pub dw: f64,
    pub rho_reduction: f64,
    pub alignment_degenerate: bool,
    pub lever_norms: Vec<ColumnNorm>,
    pub group_movement: Vec<MovementRow>,
    pub cross_check: CrossCheck,
}

/// Inputs shared by every evaluated intervention.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationContext<'a> {
    pub model: &'a SurrogateModel,
    pub groups: &'a GroupAssignment,
    /// Normalized pre-intervention codes of all respondents.
    pub codes: ArrayView2<'a, f64>,
    pub x: ArrayView2<'a, f64>,
    pub basis: &'a Array2<f64>,
    pub controllable: &'a [usize],
    pub tau_y: f64,
    pub tau_delta: f64,
    pub eta: f64,
    pub sinkhorn: SinkhornSettings,
}

/// Full metrics of an intervention `delta` (n x d) whose target rows map to
/// the normalized latent codes `target_post`.
pub fn evaluate(ctx: &EvaluationContext<'_>, delta: ArrayView2<f64>, target_post: ArrayView2<f64>) -> Result<MetricsReport> {
    let target = &ctx.groups.target_indices;
    let target_pre = ctx.codes.select(Axis(0), target);
    let reference = ctx.codes.select(Axis(0), &ctx.groups.reference_indices);
    let conv = conversion_metrics(ctx.model, target_pre.view(), target_post, ctx.tau_y)?;
    let eff = effort_and_levers(delta, ctx.controllable, ctx.tau_delta);
    let align = alignment_metrics(target_pre.view(), target_post, reference.view(), ctx.eta, ctx.sinkhorn)?;
    let movement = group_movement_report(ctx.groups, ctx.model, ctx.codes, target_post, ctx.eta, ctx.sinkhorn)?;
    let cross = nnls_cross_check(ctx.model, ctx.x, delta, ctx.basis, target, target_pre.view(), &conv, ctx.tau_y)?;
    Ok(MetricsReport {
        n_b: target.len(),
        n_conv: conv.n_conv,
        r_conv: conv.r_conv,
        mean_dp: conv.mean_dp,
        effort: eff.effort,
        n_lever: eff.n_lever,
        eff_conv: conv.n_conv as f64 / eff.effort.max(EFFORT_FLOOR),
        w_before: align.w_before,
        w_after: align.w_after,
        dw: align.dw,
        rho_reduction: align.rho_reduction,
        alignment_degenerate: align.degenerate,
        lever_norms: eff.columns,
        group_movement: movement,
        cross_check: cross,
    })
}

/// One flat CSV row for sweep and comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub label: String,
    pub seed: u64,
    pub n_b: usize,
    pub n_conv: usize,
    pub r_conv: f64,
    pub mean_dp: f64,
    pub n_lever: usize,
    pub effort: f64,
    pub eff_conv: f64,
    pub w_before: f64,
    pub w_after: f64,
    pub dw: f64,
    pub rho_reduction: f64,
    pub nnls_n_conv: usize,
    pub nnls_mean_dp: f64,
    pub cross_check_flagged: bool,
}

impl MetricsReport {
    pub fn row(&self, label: impl Into<String>, seed: u64) -> MetricsRow {
        MetricsRow {
            label: label.into(),
            seed,
            n_b: self.n_b,
            n_conv: self.n_conv,
            r_conv: self.r_conv,
            mean_dp: self.mean_dp,
            n_lever: self.n_lever,
            effort: self.effort,
            eff_conv: self.eff_conv,
            w_before: self.w_before,
            w_after: self.w_after,
            dw: self.dw,
            rho_reduction: self.rho_reduction,
            nnls_n_conv: self.cross_check.n_conv,
            nnls_mean_dp: self.cross_check.mean_dp,
            cross_check_flagged: self.cross_check.flagged,
        }
    }
}
