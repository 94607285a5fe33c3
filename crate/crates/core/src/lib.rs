//! Sparse, policy-feasible group-level counterfactual interventions on
//! mixed-type survey data.
//!
//! The pipeline runs in five stages, each living in its own module:
//!
//! 1. [`data`]: survey schema, validation, CSV ingestion and synthetic fixtures.
//! 2. [`latent`]: fixed-basis NMF, NNLS projection onto the frozen basis and
//!    row normalization of latent codes.
//! 3. [`grouping`]: k-means on normalized codes, outcome anchoring of the
//!    reference and target clusters, empirical measures.
//! 4. [`attribution`]: logistic latent-outcome probe, exact margin Shapley
//!    values, target-group relevance and controllable-feature priorities.
//! 5. [`intervention`]: entropic-OT alignment ([`transport`]) with a weighted
//!    l2,1 penalty, solved by alternating projected proximal updates.
//!
//! [`evaluation`] computes the conversion, effort and alignment metrics,
//! [`baselines`] holds the comparison rules and ablations, and
//! [`experiment`] wires everything into reproducible runs and sweeps.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod grouping;
pub mod intervention;
pub mod latent;
mod linalg;
pub mod matrix_serde;
pub mod transport;

pub use error::{Error, Result};
