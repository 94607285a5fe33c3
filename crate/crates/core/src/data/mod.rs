//! Mixed-type survey data: feature schema, validated datasets and synthetic
//! fixtures.

mod dataset;
mod schema;
pub mod synthetic;

pub use dataset::{load_dataset, SurveyDataset};
pub use schema::{
    validate_row, FeatureKind, FeatureSchema, FeatureSpec, ValidationMode, Violation,
    ViolationKind, FEASIBILITY_TOL,
};
pub use synthetic::{default_schema, generate_synthetic, SyntheticDataset, SyntheticTruth};
