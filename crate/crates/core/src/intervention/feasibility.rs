use ndarray::Array2;

use crate::data::{FeatureKind, SurveyDataset};

/// Projects an n x d intervention onto the feasible set: rows outside the
/// target group and columns outside the lever set are zeroed, and every
/// remaining entry is clipped so the post value stays inside its bounds.
///
/// Idempotent. Because the observed row is feasible, zero is always inside
/// the clip interval, so no entry grows in magnitude.
pub fn project_feasible(delta: &Array2<f64>, dataset: &SurveyDataset, target: &[usize]) -> Array2<f64> {
    assert_eq!(delta.dim(), dataset.x().dim(), "delta must be n x d");
    let schema = dataset.schema();
    let levers = schema.levers();
    let mut out = Array2::<f64>::zeros(delta.dim());
    for &i in target {
        for &j in &levers {
            let f = schema.feature(j);
            let x = dataset.x()[[i, j]];
            out[[i, j]] = clip_entry(delta[[i, j]], x, f.lower, f.upper);
        }
    }
    out
}

#[inline]
pub(crate) fn clip_entry(v: f64, x: f64, lower: f64, upper: f64) -> f64 {
    v.clamp(lower - x, upper - x)
}

/// Rounds reported post values: binary features to the nearest of {0, 1},
/// Likert features to the nearest integer level (halves away from zero),
/// then re-expresses the result as an intervention. Numeric features pass
/// through unchanged.
pub fn round_report(delta_star: &Array2<f64>, dataset: &SurveyDataset) -> Array2<f64> {
    let schema = dataset.schema();
    let mut out = delta_star.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        let f = schema.feature(j);
        if !matches!(f.kind, FeatureKind::Binary | FeatureKind::Likert) || *v == 0.0 {
            continue;
        }
        let x = dataset.x()[[i, j]];
        let post = (x + *v).round().clamp(f.lower, f.upper);
        *v = post - x;
    }
    out
}
