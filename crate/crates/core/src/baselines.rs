//! Rule-based comparison interventions and ablated optimizer variants.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::intervention::{
    active_levers, optimize, optimize_with, project_feasible, round_report, AlignmentTerm, InterventionProblem,
    InterventionResult, OptimizerStatus,
};
use crate::latent::{normalize_rows, project_rows, BasisProjector};
use crate::{Error, Result};

pub const DEFAULT_STEP_MAGNITUDE: f64 = 0.2;
pub const DEFAULT_K_LEVERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    TopShapleySingle,
    TopShapleyTopK,
    MaxCoverageTopK,
    OutcomeOnlySparse,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::TopShapleySingle,
        BaselineKind::TopShapleyTopK,
        BaselineKind::MaxCoverageTopK,
        BaselineKind::OutcomeOnlySparse,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::TopShapleySingle => "top_shapley_single",
            BaselineKind::TopShapleyTopK => "top_shapley_topk",
            BaselineKind::MaxCoverageTopK => "max_coverage_topk",
            BaselineKind::OutcomeOnlySparse => "outcome_only_sparse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub k_levers: usize,
    /// Uniform per-entry increment, in feature units.
    pub step_magnitude: f64,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        BaselineSpec {
            kind,
            k_levers: if kind == BaselineKind::TopShapleySingle { 1 } else { DEFAULT_K_LEVERS },
            step_magnitude: DEFAULT_STEP_MAGNITUDE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NoShapleyWeighting,
    NoSparsity,
    NoOtAlignment,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::NoShapleyWeighting, Ablation::NoSparsity, Ablation::NoOtAlignment];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::NoShapleyWeighting => "no_shapley_weighting",
            Ablation::NoSparsity => "no_sparsity",
            Ablation::NoOtAlignment => "no_ot_alignment",
        }
    }
}

/// Levers ranked by priority, highest first, ties to the lower index.
fn rank_by_omega(problem: &InterventionProblem<'_>) -> Vec<usize> {
    let mut levers = problem.dataset.schema().levers();
    let omega = |j: usize| problem.priorities.omega_of(j).unwrap_or(0.0);
    levers.sort_by(|&a, &b| omega(b).total_cmp(&omega(a)).then(a.cmp(&b)));
    levers
}

/// Levers ranked by how many target respondents can take `+step` without
/// clipping; ties broken by priority, then index.
fn rank_by_coverage(problem: &InterventionProblem<'_>, step: f64) -> Vec<usize> {
    let schema = problem.dataset.schema();
    let x = problem.dataset.x();
    let coverage = |j: usize| {
        let upper = schema.feature(j).upper;
        problem
            .groups
            .target_indices
            .iter()
            .filter(|&&i| x[[i, j]] + step <= upper)
            .count()
    };
    let omega = |j: usize| problem.priorities.omega_of(j).unwrap_or(0.0);
    let mut levers = schema.levers();
    levers.sort_by(|&a, &b| {
        coverage(b)
            .cmp(&coverage(a))
            .then(omega(b).total_cmp(&omega(a)))
            .then(a.cmp(&b))
    });
    levers
}

/// Wraps a fixed intervention as a result, with post codes from exact NNLS
/// projection of the intervened rows.
fn direct_result(problem: &InterventionProblem<'_>, delta: Array2<f64>) -> InterventionResult {
    let target = &problem.groups.target_indices;
    let post_x = (problem.dataset.x() + &delta).select(Axis(0), target);
    let projector = BasisProjector::new(problem.basis);
    let u_star = project_rows(post_x.view(), &projector);
    let post_codes = normalize_rows(u_star.view()).w_tilde;
    let active = active_levers(delta.view(), problem.dataset, problem.priorities, problem.settings.tau_delta);
    let rounded = round_report(&delta, problem.dataset);
    InterventionResult {
        delta_star: delta,
        u_star,
        post_codes,
        plan: None,
        trajectory: Vec::new(),
        active_levers: active,
        rounded_report: rounded,
        status: OptimizerStatus::Direct,
        sinkhorn_calls: 0,
        target_indices: target.clone(),
    }
}

/// Uniform `+step` on the chosen levers for every target respondent,
/// before projection onto the feasible set.
pub fn uniform_delta(problem: &InterventionProblem<'_>, levers: &[usize], step: f64) -> Array2<f64> {
    let mut delta = Array2::<f64>::zeros(problem.dataset.x().dim());
    for &i in &problem.groups.target_indices {
        for &j in levers {
            delta[[i, j]] = step;
        }
    }
    delta
}

pub fn run_baseline(spec: &BaselineSpec, problem: &InterventionProblem<'_>) -> Result<InterventionResult> {
    let n_levers = problem.dataset.schema().levers().len();
    if spec.k_levers == 0 || spec.k_levers > n_levers {
        return Err(Error::invalid(format!(
            "k_levers = {} but {n_levers} levers are available",
            spec.k_levers
        )));
    }
    let uniform = |ranked: Vec<usize>, k: usize| -> Result<InterventionResult> {
        if !(spec.step_magnitude > 0.0) {
            return Err(Error::invalid("step_magnitude must be positive"));
        }
        let raw = uniform_delta(problem, &ranked[..k], spec.step_magnitude);
        let delta = project_feasible(&raw, problem.dataset, &problem.groups.target_indices);
        Ok(direct_result(problem, delta))
    };
    match spec.kind {
        BaselineKind::TopShapleySingle => uniform(rank_by_omega(problem), 1),
        BaselineKind::TopShapleyTopK => uniform(rank_by_omega(problem), spec.k_levers),
        BaselineKind::MaxCoverageTopK => uniform(rank_by_coverage(problem, spec.step_magnitude), spec.k_levers),
        BaselineKind::OutcomeOnlySparse => {
            let term = AlignmentTerm::OutcomeMargin {
                beta: problem.surrogate.beta.clone(),
                bias: problem.surrogate.bias,
            };
            optimize_with(problem, &term)
        }
    }
}

pub fn run_ablation(which: Ablation, problem: &InterventionProblem<'_>) -> Result<InterventionResult> {
    match which {
        Ablation::NoShapleyWeighting => {
            let flat = problem.priorities.flattened();
            let p = InterventionProblem {
                priorities: &flat,
                ..*problem
            };
            optimize(&p)
        }
        Ablation::NoSparsity => {
            let mut p = *problem;
            p.settings.lambda = 0.0;
            optimize(&p)
        }
        Ablation::NoOtAlignment => {
            let reference = problem.reference_codes();
            let reference_mean = reference
                .mean_axis(Axis(0))
                .ok_or_else(|| Error::invalid("empty reference group"))?;
            optimize_with(problem, &AlignmentTerm::CentroidMatch { reference_mean })
        }
    }
}
