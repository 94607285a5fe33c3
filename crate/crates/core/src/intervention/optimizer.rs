use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::alignment::{chain_normalization, AlignmentEval, AlignmentTerm};
use super::feasibility::{clip_entry, round_report};
use super::prox::{prox_weighted_l21, weighted_l21};
use crate::attribution::{PriorityWeights, SurrogateModel};
use crate::data::SurveyDataset;
use crate::grouping::GroupAssignment;
use crate::linalg::row_space_projector;
use crate::latent::{normalize_floor, project_rows, BasisProjector};
use crate::transport::{SinkhornSettings, TransportPlan, DEFAULT_ETA};
use crate::{Error, Result};

/// Column norm above which a lever counts as active.
pub const DEFAULT_TAU_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub eta: f64,
    pub lambda: f64,
    pub beta_couple: f64,
    pub step_u: f64,
    pub step_delta: f64,
    pub max_outer: usize,
    pub tol_obj: f64,
    /// Consecutive small-decrease iterations needed to declare convergence.
    pub patience: usize,
    pub max_halvings: usize,
    pub tau_delta: f64,
    pub coupling_anchor: CouplingAnchor,
    pub coupling_space: CouplingSpace,
    pub sinkhorn: SinkhornSettings,
}

/// Where the coupling residual `r = anchor + Delta - U H` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSpace {
    /// `||r||^2` over all d features. Components of `Delta` outside the row
    /// space of `H`, which the projection discards, are still charged.
    Feature,
    /// `||r P||^2` with `P` the orthogonal projector onto the row space of
    /// `H`: zero exactly when `U` is the least-squares code of
    /// `anchor + Delta`.
    RowSpace,
}

/// What `x + Delta` is compared with in the coupling term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingAnchor {
    /// The observed rows: `||x + Delta - U H||^2`. At `Delta = 0` the
    /// coupling equals the NNLS residual, which `Delta` can lower by moving
    /// the observed answers toward their low-rank reconstruction.
    Observed,
    /// The NNLS reconstruction `x_hat = U0 H`: `||x_hat + Delta - U H||^2`.
    /// Zero at the start, and `U H` tracks the projection of `x + Delta`
    /// while the active set of the projection is unchanged.
    Reconstruction,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            eta: DEFAULT_ETA,
            lambda: 0.05,
            beta_couple: 1.0,
            step_u: 1.0,
            step_delta: 0.5,
            max_outer: 200,
            tol_obj: 1e-5,
            patience: 3,
            max_halvings: 20,
            tau_delta: DEFAULT_TAU_DELTA,
            coupling_anchor: CouplingAnchor::Reconstruction,
            coupling_space: CouplingSpace::RowSpace,
            sinkhorn: SinkhornSettings::default(),
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        if !(self.beta_couple > 0.0) {
            return Err(Error::invalid("beta_couple must be positive"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta must be positive"));
        }
        if !(self.step_u > 0.0 && self.step_delta > 0.0) {
            return Err(Error::invalid("step sizes must be positive"));
        }
        if !(self.tau_delta >= 0.0) {
            return Err(Error::invalid("tau_delta must be nonnegative"));
        }
        Ok(())
    }
}

/// Inputs of one intervention solve. `codes` are the pre-intervention
/// normalized latent codes of all respondents.
#[derive(Debug, Clone, Copy)]
pub struct InterventionProblem<'a> {
    pub dataset: &'a SurveyDataset,
    pub basis: &'a Array2<f64>,
    pub codes: &'a Array2<f64>,
    pub groups: &'a GroupAssignment,
    pub priorities: &'a PriorityWeights,
    pub surrogate: &'a SurrogateModel,
    pub settings: OptimizerSettings,
}

impl InterventionProblem<'_> {
    pub fn reference_codes(&self) -> Array2<f64> {
        self.codes.select(Axis(0), &self.groups.reference_indices)
    }

    pub fn target_codes(&self) -> Array2<f64> {
        self.codes.select(Axis(0), &self.groups.target_indices)
    }

    pub fn target_x(&self) -> Array2<f64> {
        self.dataset.x().select(Axis(0), &self.groups.target_indices)
    }

    /// The paper-default alignment term: entropic OT against the reference group.
    pub fn entropic_ot_term(&self) -> AlignmentTerm {
        AlignmentTerm::EntropicOt {
            reference: self.reference_codes(),
            eta: self.settings.eta,
            sinkhorn: self.settings.sinkhorn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerStatus {
    /// Relative objective decrease stayed below tolerance long enough.
    Converged,
    MaxIterations,
    /// No decreasing step was found after the allowed halvings.
    StepUnderflow,
    /// Step underflow before the first accepted iteration; the result is
    /// the zero intervention.
    StalledAtZero,
    /// Closed-form rule, no iterations.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    pub objective: f64,
    /// Value of the alignment term (entropic OT value for the full method).
    pub alignment: f64,
    /// `<Gamma, M>` when the alignment term is OT-based.
    pub ot_cost: Option<f64>,
    pub coupling: f64,
    pub sparsity: f64,
    pub mean_gain: f64,
    pub step_u: f64,
    pub step_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveLever {
    pub feature: usize,
    pub name: String,
    pub magnitude: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct InterventionResult {
    /// n x d, nonzero only on target rows and lever columns.
    pub delta_star: Array2<f64>,
    /// n_B x k auxiliary codes, nonnegative.
    pub u_star: Array2<f64>,
    /// Normalized rows of `u_star`.
    pub post_codes: Array2<f64>,
    /// Final plan when the alignment term is OT-based.
    pub plan: Option<TransportPlan>,
    pub trajectory: Vec<TrajectoryRecord>,
    pub active_levers: Vec<ActiveLever>,
    pub rounded_report: Array2<f64>,
    pub status: OptimizerStatus,
    pub sinkhorn_calls: usize,
    pub target_indices: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportSummary {
    pub transport_cost: f64,
    pub entropic_value: f64,
    pub iters: usize,
    pub marginal_err: f64,
}

/// JSON form of an [`InterventionResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterventionReport {
    pub status: OptimizerStatus,
    pub delta_star: Vec<SparseEntry>,
    pub rounded_report: Vec<SparseEntry>,
    pub active_levers: Vec<ActiveLever>,
    pub trajectory: Vec<TrajectoryRecord>,
    pub target_indices: Vec<usize>,
    #[serde(rename = "U_star")]
    pub u_star: Vec<Vec<f64>>,
    pub transport: Option<TransportSummary>,
    pub sinkhorn_calls: usize,
}

fn triplets(m: &Array2<f64>) -> Vec<SparseEntry> {
    m.indexed_iter()
        .filter(|(_, v)| **v != 0.0)
        .map(|((i, j), v)| SparseEntry { i, j, value: *v })
        .collect()
}

impl InterventionResult {
    pub fn report(&self) -> InterventionReport {
        InterventionReport {
            status: self.status,
            delta_star: triplets(&self.delta_star),
            rounded_report: triplets(&self.rounded_report),
            active_levers: self.active_levers.clone(),
            trajectory: self.trajectory.clone(),
            target_indices: self.target_indices.clone(),
            u_star: crate::matrix_serde::rows(&self.u_star),
            transport: self.plan.as_ref().map(|p| TransportSummary {
                transport_cost: p.transport_cost,
                entropic_value: p.entropic_value,
                iters: p.iters,
                marginal_err: p.marginal_err,
            }),
            sinkhorn_calls: self.sinkhorn_calls,
        }
    }
}

/// Active levers of an n x d intervention, largest column norm first.
pub fn active_levers(
    delta: ArrayView2<f64>,
    dataset: &SurveyDataset,
    priorities: &PriorityWeights,
    tau_delta: f64,
) -> Vec<ActiveLever> {
    let mut out: Vec<ActiveLever> = dataset
        .schema()
        .levers()
        .into_iter()
        .filter_map(|j| {
            let norm = delta.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm > tau_delta).then(|| ActiveLever {
                feature: j,
                name: dataset.schema().feature(j).name.clone(),
                magnitude: norm,
                omega: priorities.omega_of(j).unwrap_or(0.0),
            })
        })
        .collect();
    out.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.feature.cmp(&b.feature)));
    out
}

struct Workspace<'a> {
    problem: &'a InterventionProblem<'a>,
    term: &'a AlignmentTerm,
    levers: Vec<usize>,
    rho: Vec<f64>,
    /// Rows the coupling ties `x + Delta` to: observed or reconstructed.
    anchor: Array2<f64>,
    row_space: Option<Array2<f64>>,
    lower: Array2<f64>,
    upper: Array2<f64>,
    pre_probs: Vec<f64>,
    sinkhorn_calls: usize,
}

struct Eval {
    objective: f64,
    align: AlignmentEval,
    coupling: f64,
    sparsity: f64,
    resid: Array2<f64>,
    u_tilde: Array2<f64>,
}

impl Workspace<'_> {
    fn n_b(&self) -> f64 {
        self.anchor.nrows() as f64
    }

    fn residual(&self, delta: &Array2<f64>, u: &Array2<f64>) -> Array2<f64> {
        let mut r = &self.anchor - &u.dot(self.problem.basis);
        for (l, &j) in self.levers.iter().enumerate() {
            let mut col = r.column_mut(j);
            col += &delta.column(l);
        }
        match &self.row_space {
            Some(p) => r.dot(p),
            None => r,
        }
    }

    fn evaluate(&mut self, delta: &Array2<f64>, u: &Array2<f64>, warm: Option<&Eval>) -> Result<Eval> {
        let s = &self.problem.settings;
        let u_tilde = normalize_floor(u.view());
        let potentials = warm.and_then(|e| e.align.plan.as_ref()).map(|p| &p.potentials);
        if self.term.uses_transport() {
            self.sinkhorn_calls += 1;
        }
        let align = self.term.evaluate(u_tilde.view(), potentials)?;
        let resid = self.residual(delta, u);
        let coupling: f64 = resid.iter().map(|v| v * v).sum();
        let sparsity = weighted_l21(delta.view(), &self.rho) / self.n_b().sqrt();
        let objective = align.value + s.beta_couple * coupling / self.n_b() + s.lambda * sparsity;
        Ok(Eval {
            objective,
            align,
            coupling,
            sparsity,
            resid,
            u_tilde,
        })
    }

    fn mean_gain(&self, u_tilde: &Array2<f64>) -> f64 {
        let m = self.problem.surrogate;
        let total: f64 = u_tilde
            .outer_iter()
            .zip(&self.pre_probs)
            .map(|(r, &p0)| m.predict(r) - p0)
            .sum();
        total / self.n_b()
    }

    fn record(&self, iteration: usize, e: &Eval, step_u: f64, step_delta: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            iteration,
            objective: e.objective,
            alignment: e.align.value,
            ot_cost: e.align.transport_cost,
            coupling: e.coupling,
            sparsity: e.sparsity,
            mean_gain: self.mean_gain(&e.u_tilde),
            step_u,
            step_delta,
        }
    }

    /// One trial update from `(delta, u)` with the given steps.
    ///
    /// Every smooth term of the objective is a per-respondent average, so
    /// both block gradients are rescaled by n_B before stepping; the prox
    /// threshold is scaled the same way.
    fn trial(&self, delta: &Array2<f64>, u: &Array2<f64>, cur: &Eval, step_u: f64, step_delta: f64) -> (Array2<f64>, Array2<f64>) {
        let s = &self.problem.settings;
        let n_b = self.n_b();
        let h = self.problem.basis;

        let align_grad = chain_normalization(u.view(), cur.align.grad_tilde.view());
        let couple_grad = cur.resid.dot(&h.t()); // d/dU of C is -2 R H^T
        let mut u_next = u.clone();
        ndarray::Zip::from(&mut u_next)
            .and(&align_grad)
            .and(&couple_grad)
            .for_each(|v, &ga, &gc| {
                let g = n_b * ga - 2.0 * s.beta_couple * gc;
                *v = (*v - step_u * g).max(0.0);
            });

        let resid = self.residual(delta, &u_next);
        let mut stepped = delta.clone();
        for (l, &j) in self.levers.iter().enumerate() {
            let mut col = stepped.column_mut(l);
            col.scaled_add(-step_delta * 2.0 * s.beta_couple, &resid.column(j));
        }
        let mut next = prox_weighted_l21(stepped.view(), &self.rho, step_delta * n_b.sqrt() * s.lambda);
        ndarray::Zip::from(&mut next)
            .and(&self.lower)
            .and(&self.upper)
            .for_each(|v, &lo, &hi| *v = v.clamp(lo, hi));
        (next, u_next)
    }
}

/// Solves the full-method program: entropic OT alignment plus weighted l2,1.
pub fn optimize(problem: &InterventionProblem<'_>) -> Result<InterventionResult> {
    let term = problem.entropic_ot_term();
    optimize_with(problem, &term)
}

/// Alternating projected proximal descent on
/// `J = A(U) + beta_couple * C(Delta, U) / n_B + lambda * Omega(Delta) / sqrt(n_B)`
/// where `A` is the chosen alignment term and `C` the coupling residual.
/// Every term is a per-respondent average, so `lambda` does not depend on
/// the size of the target group.
///
/// Each outer iteration takes a projected gradient step on `U` (the OT plan
/// held fixed), then a gradient step on `Delta` followed by the weighted
/// l2,1 prox and the box projection. A trial is accepted only if `J`
/// strictly decreases; otherwise both steps are halved.
pub fn optimize_with(problem: &InterventionProblem<'_>, term: &AlignmentTerm) -> Result<InterventionResult> {
    let s = problem.settings;
    s.validate()?;
    let dataset = problem.dataset;
    let target = &problem.groups.target_indices;
    if target.is_empty() {
        return Err(Error::invalid("target group is empty"));
    }
    let schema = dataset.schema();
    let levers = schema.levers();
    let rho: Vec<f64> = levers
        .iter()
        .map(|&j| {
            problem
                .priorities
                .rho_of(j)
                .ok_or_else(|| Error::invalid(format!("no priority for lever {j}")))
        })
        .collect::<Result<_>>()?;

    let x_b = problem.target_x();
    let n_b = x_b.nrows();
    let mut lower = Array2::<f64>::zeros((n_b, levers.len()));
    let mut upper = Array2::<f64>::zeros((n_b, levers.len()));
    for (l, &j) in levers.iter().enumerate() {
        let f = schema.feature(j);
        for p in 0..n_b {
            lower[[p, l]] = clip_entry(f64::NEG_INFINITY, x_b[[p, j]], f.lower, f.upper);
            upper[[p, l]] = clip_entry(f64::INFINITY, x_b[[p, j]], f.lower, f.upper);
        }
    }
    let pre_probs: Vec<f64> = problem
        .target_codes()
        .outer_iter()
        .map(|r| problem.surrogate.predict(r))
        .collect();

    let mut ws = Workspace {
        problem,
        term,
        levers,
        rho,
        anchor: Array2::zeros((0, 0)),
        row_space: match s.coupling_space {
            CouplingSpace::Feature => None,
            CouplingSpace::RowSpace => Some(
                row_space_projector(problem.basis)
                    .ok_or_else(|| Error::Degenerate("basis rows are linearly dependent".into()))?,
            ),
        },
        lower,
        upper,
        pre_probs,
        sinkhorn_calls: 0,
    };

    let projector = BasisProjector::new(problem.basis);
    let mut u = project_rows(x_b.view(), &projector);
    ws.anchor = match s.coupling_anchor {
        CouplingAnchor::Observed => x_b,
        CouplingAnchor::Reconstruction => u.dot(problem.basis),
    };
    let mut delta = Array2::<f64>::zeros((n_b, ws.levers.len()));
    let mut cur = ws.evaluate(&delta, &u, None)?;

    let (mut step_u, mut step_delta) = (s.step_u, s.step_delta);
    let mut trajectory = vec![ws.record(0, &cur, step_u, step_delta)];
    let mut status = OptimizerStatus::MaxIterations;
    let mut quiet = 0;

    'outer: for it in 1..=s.max_outer {
        let mut accepted = None;
        for attempt in 0..=s.max_halvings {
            if attempt > 0 {
                step_u *= 0.5;
                step_delta *= 0.5;
            }
            let (d_next, u_next) = ws.trial(&delta, &u, &cur, step_u, step_delta);
            let e = ws.evaluate(&d_next, &u_next, Some(&cur))?;
            if e.objective < cur.objective {
                accepted = Some((d_next, u_next, e));
                break;
            }
        }
        let Some((d_next, u_next, e)) = accepted else {
            status = if trajectory.len() == 1 {
                OptimizerStatus::StalledAtZero
            } else {
                OptimizerStatus::StepUnderflow
            };
            break 'outer;
        };
        let rel = (cur.objective - e.objective) / cur.objective.abs().max(1e-12);
        delta = d_next;
        u = u_next;
        cur = e;
        trajectory.push(ws.record(it, &cur, step_u, step_delta));
        quiet = if rel < s.tol_obj { quiet + 1 } else { 0 };
        if quiet >= s.patience {
            status = OptimizerStatus::Converged;
            break;
        }
    }

    let n = dataset.n();
    let mut delta_star = Array2::<f64>::zeros((n, dataset.d()));
    if status != OptimizerStatus::StalledAtZero {
        for (p, &i) in target.iter().enumerate() {
            for (l, &j) in ws.levers.iter().enumerate() {
                delta_star[[i, j]] = delta[[p, l]];
            }
        }
    }
    let active = active_levers(delta_star.view(), dataset, problem.priorities, s.tau_delta);
    let rounded = round_report(&delta_star, dataset);
    Ok(InterventionResult {
        delta_star,
        post_codes: cur.u_tilde,
        u_star: u,
        plan: cur.align.plan,
        trajectory,
        active_levers: active,
        rounded_report: rounded,
        status,
        sinkhorn_calls: ws.sinkhorn_calls,
        target_indices: target.clone(),
    })
}
