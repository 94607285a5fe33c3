use ndarray::{Array2, Axis};

use super::config::{DataSource, ExperimentConfig};
use crate::attribution::{binarize_outcome, compute_priorities, fit_logistic, PrioritySettings, PriorityWeights, SurrogateModel};
use crate::baselines::{run_ablation, run_baseline, Ablation, BaselineKind, BaselineSpec};
use crate::data::{default_schema, generate_synthetic, load_dataset, SurveyDataset};
use crate::evaluation::{evaluate, EvaluationContext, MetricsReport};
use crate::grouping::{anchor_groups, kmeans, Clustering, GroupAssignment};
use crate::intervention::{optimize, InterventionProblem, InterventionResult};
use crate::latent::{fit_nmf, normalize_rows, project_rows, BasisProjector, LatentModel, NormalizedCodes};
use crate::Result;

pub fn load_data(source: &DataSource) -> Result<SurveyDataset> {
    match source {
        DataSource::Synthetic { n, k_true, seed } => {
            Ok(generate_synthetic(*n, &default_schema(), *k_true, *seed)?.dataset)
        }
        DataSource::Files { dataset, schema } => load_dataset(dataset, schema),
    }
}

/// Everything the pipeline learns before the intervention is solved.
#[derive(Debug, Clone)]
pub struct FittedStages {
    pub seed: u64,
    pub latent: LatentModel,
    /// Normalized NNLS codes of every respondent on the fixed basis.
    pub codes: NormalizedCodes,
    pub clustering: Clustering,
    pub groups: GroupAssignment,
    pub surrogate: SurrogateModel,
    pub priorities: PriorityWeights,
}

/// A complete single-seed run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub stages: FittedStages,
    pub result: InterventionResult,
    pub metrics: MetricsReport,
}

/// Fits the basis, codes, groups, probe and priorities for one seed.
pub fn fit_stages(config: &ExperimentConfig, dataset: &SurveyDataset, seed: u64) -> Result<FittedStages> {
    config.validate()?;
    let x = dataset.x();
    let latent = fit_nmf(x.view(), config.k, seed, config.nmf)?;
    // every respondent is coded by NNLS on the frozen basis, the same map
    // applied after intervention, so a zero intervention leaves codes intact
    let projector = BasisProjector::new(&latent.h);
    let codes = normalize_rows(project_rows(x.view(), &projector).view());
    let clustering = kmeans(codes.w_tilde.view(), config.groups, seed, config.kmeans_restarts)?;
    let groups = anchor_groups(&clustering.labels, dataset.y().view(), config.groups)?;
    let labels = binarize_outcome(dataset.y().view(), config.binarization)?;
    let surrogate = fit_logistic(codes.w_tilde.view(), &labels, config.l2, config.tau_y)?;
    let settings = PrioritySettings {
        q: config.q(),
        eps_omega: config.eps_omega,
        seed,
        binarization: config.binarization,
        l2: config.l2,
    };
    let priorities = compute_priorities(
        &surrogate,
        codes.w_tilde.view(),
        &groups.target_indices,
        latent.h.view(),
        &dataset.schema().controllable(),
        &settings,
    )?;
    Ok(FittedStages {
        seed,
        latent,
        codes,
        clustering,
        groups,
        surrogate,
        priorities,
    })
}

impl FittedStages {
    pub fn problem<'a>(&'a self, config: &ExperimentConfig, dataset: &'a SurveyDataset) -> InterventionProblem<'a> {
        InterventionProblem {
            dataset,
            basis: &self.latent.h,
            codes: &self.codes.w_tilde,
            groups: &self.groups,
            priorities: &self.priorities,
            surrogate: &self.surrogate,
            settings: config.optimizer,
        }
    }

    pub fn evaluation_context<'a>(&'a self, config: &ExperimentConfig, dataset: &'a SurveyDataset, controllable: &'a [usize]) -> EvaluationContext<'a> {
        EvaluationContext {
            model: &self.surrogate,
            groups: &self.groups,
            codes: self.codes.w_tilde.view(),
            x: dataset.x().view(),
            basis: &self.latent.h,
            controllable,
            tau_y: config.tau_y,
            tau_delta: config.optimizer.tau_delta,
            eta: config.optimizer.eta,
            sinkhorn: config.optimizer.sinkhorn,
        }
    }

    pub fn evaluate(&self, config: &ExperimentConfig, dataset: &SurveyDataset, result: &InterventionResult) -> Result<MetricsReport> {
        let controllable = dataset.schema().controllable();
        let ctx = self.evaluation_context(config, dataset, &controllable);
        evaluate(&ctx, result.delta_star.view(), result.post_codes.view())
    }

    pub fn target_pre_codes(&self) -> Array2<f64> {
        self.codes.w_tilde.select(Axis(0), &self.groups.target_indices)
    }
}

pub fn run_seed(config: &ExperimentConfig, dataset: &SurveyDataset, seed: u64) -> Result<SeedRun> {
    let stages = fit_stages(config, dataset, seed)?;
    let result = optimize(&stages.problem(config, dataset))?;
    let metrics = stages.evaluate(config, dataset, &result)?;
    Ok(SeedRun { stages, result, metrics })
}

/// One row of the method comparison.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub label: String,
    pub result: InterventionResult,
    pub metrics: MetricsReport,
}

/// Full method, the four baselines and the three ablations on identical
/// fitted stages.
pub fn run_comparison(config: &ExperimentConfig, dataset: &SurveyDataset, run: &SeedRun) -> Result<Vec<MethodRun>> {
    let stages = &run.stages;
    let problem = stages.problem(config, dataset);
    let mut out = vec![MethodRun {
        label: "full_method".into(),
        result: run.result.clone(),
        metrics: run.metrics.clone(),
    }];
    for kind in BaselineKind::ALL {
        let mut spec = BaselineSpec::new(kind);
        spec.step_magnitude = config.baselines.step_magnitude;
        if kind != BaselineKind::TopShapleySingle {
            spec.k_levers = config.baselines.k_levers.min(dataset.schema().levers().len());
        }
        let result = run_baseline(&spec, &problem)?;
        let metrics = stages.evaluate(config, dataset, &result)?;
        out.push(MethodRun {
            label: kind.label().into(),
            result,
            metrics,
        });
    }
    for which in Ablation::ALL {
        let result = run_ablation(which, &problem)?;
        let metrics = stages.evaluate(config, dataset, &result)?;
        out.push(MethodRun {
            label: which.label().into(),
            result,
            metrics,
        });
    }
    Ok(out)
}
