//! Deterministic synthetic survey fixtures.
//!
//! Respondents are drawn from three archetypes over `k_true` nonnegative
//! latent factors. Factor 0 raises the outcome and factor 1 lowers it. The
//! first intervention lever of the schema is planted as the dominant
//! controllable loading of factor 0, so a group that lacks factor 0 can be
//! moved toward one that has it by raising that lever.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::SurveyDataset;
use super::schema::{FeatureKind, FeatureSchema, FeatureSpec};
use crate::{Error, Result};

/// Index of the latent factor that raises the outcome.
pub const POSITIVE_FACTOR: usize = 0;
/// Index of the latent factor that lowers the outcome.
pub const NEGATIVE_FACTOR: usize = 1;

#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    pub archetype: Vec<usize>,
    /// Feature index of the planted discriminative lever.
    pub planted_lever: usize,
    /// `w_tilde[:, 0] - w_tilde[:, 1]` on the true coefficients.
    pub outcome_signal: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: SurveyDataset,
    pub truth: SyntheticTruth,
}

/// An 18-feature survey layout: controllable Likert, binary and numeric
/// levers, fixed attitudes and demographics, a fixed one-hot district block
/// and a controllable one-hot travel-mode block.
pub fn default_schema() -> FeatureSchema {
    FeatureSchema::new(
        "adoption_intention",
        vec![
            FeatureSpec::likert("reward_health_benefit", 1, 5, true),
            FeatureSpec::likert("reward_transit_discount", 1, 5, true),
            FeatureSpec::likert("reward_certificate", 1, 5, true),
            FeatureSpec::likert("group_travel_credit", 1, 5, true),
            FeatureSpec::binary("app_enrolled", true),
            FeatureSpec::binary("card_linked", true),
            FeatureSpec::binary("reminder_opt_in", true),
            FeatureSpec::numeric("weekly_info_sessions", 0.0, 1.0, true),
            FeatureSpec::likert("env_attitude", 1, 5, false),
            FeatureSpec::likert("car_dependence", 1, 5, false),
            FeatureSpec::likert("commute_burden", 1, 5, false),
            FeatureSpec::numeric("income_scaled", 0.0, 1.0, false),
            FeatureSpec::likert("age_band", 1, 5, false),
            FeatureSpec::one_hot("district_core", "district", false),
            FeatureSpec::one_hot("district_inner", "district", false),
            FeatureSpec::one_hot("district_outer", "district", false),
            FeatureSpec::one_hot("mode_bus", "mode", true),
            FeatureSpec::one_hot("mode_metro", "mode", true),
        ],
    )
    .expect("default schema is valid")
    .with_id_column(Some("respondent_id".into()))
}

fn pick(rng: &mut ChaCha8Rng, pool: &[usize], count: usize) -> Vec<usize> {
    let mut pool = pool.to_vec();
    pool.shuffle(rng);
    pool.truncate(count);
    pool
}

pub fn generate_synthetic(
    n: usize,
    schema: &FeatureSchema,
    k_true: usize,
    seed: u64,
) -> Result<SyntheticDataset> {
    let d = schema.len();
    if k_true < 2 {
        return Err(Error::invalid("k_true must be at least 2 to separate outcome groups"));
    }
    if k_true > d {
        return Err(Error::invalid(format!("k_true = {k_true} exceeds d = {d}")));
    }
    if n < (3 * k_true).max(20) {
        return Err(Error::invalid(format!(
            "n = {n} is too small to populate outcome-separated clusters for k_true = {k_true}"
        )));
    }
    let levers = schema.levers();
    let planted = *levers
        .first()
        .ok_or_else(|| Error::invalid("schema has no controllable non-categorical feature"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Ground-truth basis: weak background loadings plus a few signature
    // features per factor.
    let mut h = Array2::<f64>::zeros((k_true, d));
    h.mapv_inplace(|_| rng.random_range(0.0..0.08));
    let fixed: Vec<usize> = schema
        .fixed()
        .into_iter()
        .filter(|&j| schema.feature(j).kind != FeatureKind::CategoricalOneHot)
        .collect();
    let others: Vec<usize> = (0..d).filter(|&j| j != planted).collect();
    let fixed_or_other = if fixed.len() >= 3 { &fixed } else { &others };
    for r in 0..k_true {
        let sig = match r {
            POSITIVE_FACTOR => pick(&mut rng, fixed_or_other, 1),
            NEGATIVE_FACTOR => pick(&mut rng, fixed_or_other, 3),
            _ => pick(&mut rng, &others, 3),
        };
        for j in sig {
            h[[r, j]] = rng.random_range(0.6..1.0);
        }
        h[[r, planted]] = if r == POSITIVE_FACTOR { 1.0 } else { 0.02 };
    }

    // Archetypes: 0 carries factor 0, 1 carries factor 1, 2 carries one of
    // the remaining factors (or a blend when k_true = 2).
    let mut w = Array2::<f64>::zeros((n, k_true));
    let mut archetype = Vec::with_capacity(n);
    for i in 0..n {
        let a = rng.random_range(0..3usize);
        archetype.push(a);
        for r in 0..k_true {
            w[[i, r]] = rng.random_range(0.05..0.35);
        }
        let boost = rng.random_range(0.8..1.2);
        match a {
            0 => w[[i, POSITIVE_FACTOR]] += boost,
            1 => w[[i, NEGATIVE_FACTOR]] += boost,
            _ if k_true > 2 => w[[i, 2 + i % (k_true - 2)]] += boost,
            _ => {
                w[[i, 0]] += 0.5 * boost;
                w[[i, 1]] += 0.5 * boost;
            }
        }
    }

    let z = w.dot(&h);
    let col_max: Vec<f64> = (0..d)
        .map(|j| z.column(j).iter().cloned().fold(f64::MIN_POSITIVE, f64::max))
        .collect();

    let mut x = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for (j, f) in schema.features().iter().enumerate() {
            let zij = z[[i, j]] / col_max[j];
            let noise: f64 = rng.sample(StandardNormal);
            let span = f.upper - f.lower;
            x[[i, j]] = match f.kind {
                FeatureKind::Likert => {
                    (f.lower + ((zij + 0.05 * noise).clamp(0.0, 1.0) * span).round()).clamp(f.lower, f.upper)
                }
                FeatureKind::Binary => f64::from(u8::from(zij + 0.08 * noise >= 0.5)),
                FeatureKind::Numeric => f.lower + (zij + 0.03 * noise).clamp(0.0, 1.0) * span,
                // filled per block below
                FeatureKind::CategoricalOneHot => 0.0,
            };
        }
        for (_, members) in schema.blocks() {
            let mut best = members[0];
            let mut best_score = f64::NEG_INFINITY;
            for &j in members {
                let noise: f64 = rng.sample(StandardNormal);
                let score = z[[i, j]] / col_max[j] + 0.1 * noise;
                if score > best_score {
                    best_score = score;
                    best = j;
                }
            }
            x[[i, best]] = 1.0;
        }
    }

    let mut signal = Array1::<f64>::zeros(n);
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let s: f64 = w.row(i).sum();
        signal[i] = (w[[i, POSITIVE_FACTOR]] - w[[i, NEGATIVE_FACTOR]]) / s;
        let noise: f64 = rng.sample(StandardNormal);
        y[i] = 3.0 + 2.0 * signal[i] + 0.15 * noise;
    }

    let ids = (0..n).map(|i| format!("s{i:05}")).collect();
    let dataset = SurveyDataset::new(x, y, schema.clone(), ids)?;
    Ok(SyntheticDataset {
        dataset,
        truth: SyntheticTruth {
            w,
            h,
            archetype,
            planted_lever: planted,
            outcome_signal: signal,
        },
    })
}
