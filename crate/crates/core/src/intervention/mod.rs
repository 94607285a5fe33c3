//! Sparse feasible distributional intervention.
//!
//! The optimizer works on the target rows only and on the lever columns
//! (controllable, non-categorical) only, alternating a projected gradient
//! step on auxiliary latent codes `U` with a proximal step on `Delta`.

mod alignment;
mod coupling;
mod feasibility;
mod optimizer;
mod prox;

pub use alignment::{ot_grad_wrt_u, AlignmentTerm};
pub use coupling::{coupling_gradients, coupling_matrix, coupling_residual};
pub use feasibility::{project_feasible, round_report};
pub use optimizer::{
    active_levers, optimize, optimize_with, ActiveLever, CouplingAnchor, CouplingSpace, InterventionProblem, InterventionReport,
    InterventionResult, OptimizerSettings, OptimizerStatus, SparseEntry, TrajectoryRecord,
    DEFAULT_TAU_DELTA,
};
pub use prox::{prox_weighted_l21, weighted_l21};
