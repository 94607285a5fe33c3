//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion.
//!
//! Criterion 8 runs only when a Beijing survey export is supplied through
//! `LATENT_ALIGN_BEIJING_CSV` and `LATENT_ALIGN_BEIJING_SCHEMA`.
//!
//! The process exits non-zero on any failure that is not listed in
//! `KNOWN_GAPS`; set `ACCEPTANCE_STRICT=1` to fail on those as well.

mod common;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{fixture_config, oracles, rng, uniform_matrix, FIXTURE_LAMBDA_SWEEP};
use latent_align::data::{generate_synthetic, default_schema, validate_row, SurveyDataset, ValidationMode};
use latent_align::experiment::{load_data, run_comparison, run_on, run_seed, DataSource, ExperimentConfig, SeedRun};
use latent_align::intervention::{optimize, project_feasible, InterventionResult};

// criterion 1
const NNLS_TOL: f64 = 1e-6;
const SINKHORN_CLOSED_FORM_TOL: f64 = 1e-6;
const SINKHORN_DUAL_TOL: f64 = 1e-5;
const PROX_TOL: f64 = 1e-8;
const SHAPLEY_BRUTE_TOL: f64 = 1e-10;
/// Efficiency gap in scaled units of machine epsilon.
const SHAPLEY_EFFICIENCY_ULPS: f64 = 4.0;
const KERNEL_BUDGET_SECS: f64 = 120.0;
// criterion 2
const FD_REL_TOL: f64 = 1e-5;
const FD_INSTANCES: usize = 20;
// criterion 3
const PROJECTION_TRIALS: usize = 1000;
// criterion 5
const RUN_BUDGET_SECS: f64 = 60.0;
// criterion 6
const NEAR_ZERO_EFFORT: f64 = 1e-6;
// criterion 7
const THREAD_J_TOL: f64 = 1e-9;
// criterion 8
const BEIJING_MAX_LEVERS: usize = 12;

/// Criteria expected to fail on the frozen fixture.
const KNOWN_GAPS: &[u8] = &[6];

enum Outcome {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: u8,
    title: &'static str,
    outcome: Outcome,
    detail: String,
}

fn verdict(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn check(ok: bool, detail: &mut String, text: String) -> bool {
    let _ = write!(detail, "{}{}{}", if detail.is_empty() { "" } else { "; " }, text, if ok { "" } else { " [x]" });
    ok
}

fn kernels() -> Line {
    let start = Instant::now();
    let mut d = String::new();
    let mut ok = true;
    let e = oracles::nnls_suite(50);
    ok &= check(e < NNLS_TOL, &mut d, format!("nnls {e:.1e} < {NNLS_TOL:.0e}"));
    let e = oracles::sinkhorn_closed_form_error();
    ok &= check(e < SINKHORN_CLOSED_FORM_TOL, &mut d, format!("sinkhorn 2x2 {e:.1e} < {SINKHORN_CLOSED_FORM_TOL:.0e}"));
    let e = oracles::sinkhorn_dual_suite(10);
    ok &= check(e < SINKHORN_DUAL_TOL, &mut d, format!("sinkhorn 6x5 {e:.1e} < {SINKHORN_DUAL_TOL:.0e}"));
    let e = oracles::prox_suite(50);
    ok &= check(e < PROX_TOL, &mut d, format!("prox {e:.1e} < {PROX_TOL:.0e}"));
    let e = oracles::shapley_brute_suite();
    ok &= check(e < SHAPLEY_BRUTE_TOL, &mut d, format!("shapley {e:.1e} < {SHAPLEY_BRUTE_TOL:.0e}"));
    let e = oracles::shapley_efficiency_suite();
    ok &= check(e <= SHAPLEY_EFFICIENCY_ULPS, &mut d, format!("efficiency {e:.2} ulp <= {SHAPLEY_EFFICIENCY_ULPS}"));
    let secs = start.elapsed().as_secs_f64();
    ok &= check(secs < KERNEL_BUDGET_SECS, &mut d, format!("{secs:.2}s < {KERNEL_BUDGET_SECS}s"));
    Line { id: 1, title: "kernel oracles", outcome: verdict(ok), detail: d }
}

fn gradients() -> Line {
    let mut d = String::new();
    let (wd, wu) = oracles::coupling_fd_suite(FD_INSTANCES);
    let wot = oracles::ot_grad_fd_suite(FD_INSTANCES);
    let mut ok = check(wd < FD_REL_TOL, &mut d, format!("coupling dDelta {wd:.1e}"));
    ok &= check(wu < FD_REL_TOL, &mut d, format!("coupling dU {wu:.1e}"));
    ok &= check(wot < FD_REL_TOL, &mut d, format!("ot dU {wot:.1e}"));
    let _ = write!(d, " (relative, < {FD_REL_TOL:.0e}, {FD_INSTANCES} instances)");
    Line { id: 2, title: "finite-difference gradients", outcome: verdict(ok), detail: d }
}

/// Number of support, optimize-mode or report-mode violations.
fn feasibility_violations(result: &InterventionResult, data: &SurveyDataset, target: &[usize]) -> usize {
    let schema = data.schema();
    let levers = schema.levers();
    let mut bad = result
        .delta_star
        .indexed_iter()
        .filter(|((i, j), v)| **v != 0.0 && !(target.contains(i) && levers.contains(j)))
        .count();
    let post = data.x() + &result.delta_star;
    let rounded = data.x() + &result.rounded_report;
    for &i in target {
        bad += validate_row(&post.row(i).to_vec(), schema, ValidationMode::Optimize).len();
        bad += validate_row(&rounded.row(i).to_vec(), schema, ValidationMode::Report).len();
    }
    bad
}

struct FixtureRuns {
    config: ExperimentConfig,
    data: SurveyDataset,
    run: SeedRun,
    run_secs: f64,
    comparison: Vec<(String, InterventionResult, usize, usize)>,
    sweep: Vec<(f64, InterventionResult, f64, usize)>,
}

fn fixture_runs() -> FixtureRuns {
    let config = fixture_config();
    let data = load_data(&config.data).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let run = single.install(|| run_seed(&config, &data, 42).unwrap());
    let run_secs = start.elapsed().as_secs_f64();
    let comparison = run_comparison(&config, &data, &run)
        .unwrap()
        .into_iter()
        .map(|m| (m.label, m.result, m.metrics.n_conv, m.metrics.n_lever))
        .collect();
    let sweep = FIXTURE_LAMBDA_SWEEP
        .iter()
        .map(|&lambda| {
            let mut c = config.clone();
            c.optimizer.lambda = lambda;
            let result = optimize(&run.stages.problem(&c, &data)).unwrap();
            let m = run.stages.evaluate(&c, &data, &result).unwrap();
            (lambda, result, m.effort, m.n_conv)
        })
        .collect();
    FixtureRuns { config, data, run, run_secs, comparison, sweep }
}

fn feasibility(f: &FixtureRuns) -> Line {
    let mut d = String::new();
    let target = &f.run.stages.groups.target_indices;
    let mut runs = vec![&f.run.result];
    runs.extend(f.comparison.iter().map(|c| &c.1));
    runs.extend(f.sweep.iter().map(|s| &s.1));
    let bad: usize = runs.iter().map(|r| feasibility_violations(r, &f.data, target)).sum();
    let mut ok = check(bad == 0, &mut d, format!("{} optimizer runs, {bad} violations", runs.len()));

    let small = generate_synthetic(40, &default_schema(), 3, 5).unwrap().dataset;
    let mut r = rng(900);
    let mut not_idempotent = 0;
    for t in 0..PROJECTION_TRIALS {
        let delta = uniform_matrix(&mut r, 40, 18, -6.0, 6.0);
        let target: Vec<usize> = (0..40).filter(|i| (i + t) % 3 != 0).collect();
        let once = project_feasible(&delta, &small, &target);
        if project_feasible(&once, &small, &target) != once {
            not_idempotent += 1;
        }
    }
    ok &= check(
        not_idempotent == 0,
        &mut d,
        format!("projection idempotent on {}/{PROJECTION_TRIALS}", PROJECTION_TRIALS - not_idempotent),
    );
    Line { id: 3, title: "feasibility", outcome: verdict(ok), detail: d }
}

fn monotonicity(f: &FixtureRuns) -> Line {
    let mut d = String::new();
    let traj = &f.run.result.trajectory;
    let j_up = traj.windows(2).filter(|w| w[1].objective >= w[0].objective).count();
    let mut ok = check(j_up == 0, &mut d, format!("J strictly decreasing over {} records ({j_up} violations)", traj.len()));
    let half = &traj[..traj.len().div_ceil(2)];
    let gain_down = half.windows(2).filter(|w| w[1].mean_gain < w[0].mean_gain).count();
    ok &= check(gain_down == 0, &mut d, format!("mean gain non-decreasing over first {} ({gain_down} drops)", half.len()));
    let all_down = traj.windows(2).filter(|w| w[1].mean_gain < w[0].mean_gain).count();
    let _ = write!(d, "; whole trajectory {all_down} drops");
    Line { id: 4, title: "monotone trajectory", outcome: verdict(ok), detail: d }
}

fn effectiveness(f: &FixtureRuns) -> Line {
    let mut d = String::new();
    let m = &f.run.metrics;
    let mut ok = check(m.r_conv > 0.0, &mut d, format!("r_conv {:.4} ({}/{})", m.r_conv, m.n_conv, m.n_b));
    ok &= check(m.dw > 0.0, &mut d, format!("dw {:.4}", m.dw));
    let row = |g: &str| m.group_movement.iter().find(|r| r.group == g).unwrap();
    let (pre, post) = (row("target_pre"), row("target_post"));
    ok &= check(
        post.centroid_distance < pre.centroid_distance,
        &mut d,
        format!("centroid {:.3} -> {:.3}", pre.centroid_distance, post.centroid_distance),
    );
    ok &= check(
        post.ot_to_reference < pre.ot_to_reference,
        &mut d,
        format!("ot {:.3} -> {:.3}", pre.ot_to_reference, post.ot_to_reference),
    );
    let truth = match f.config.data {
        DataSource::Synthetic { n, k_true, seed } => generate_synthetic(n, &default_schema(), k_true, seed).unwrap().truth,
        DataSource::Files { .. } => unreachable!("fixture is synthetic"),
    };
    let planted = f.run.result.active_levers.iter().any(|l| l.feature == truth.planted_lever);
    ok &= check(planted, &mut d, format!("planted lever {} active", f.data.schema().feature(truth.planted_lever).name));
    ok &= check(f.run_secs < RUN_BUDGET_SECS, &mut d, format!("single-threaded run {:.2}s", f.run_secs));
    Line { id: 5, title: "end-to-end effectiveness", outcome: verdict(ok), detail: d }
}

fn ordering(f: &FixtureRuns) -> Line {
    let mut d = String::new();
    let full = f.comparison.iter().find(|c| c.0 == "full_method").unwrap();
    let mut ok = true;
    for name in ["top_shapley_single", "top_shapley_topk", "max_coverage_topk", "outcome_only_sparse"] {
        let b = f.comparison.iter().find(|c| c.0 == name).unwrap();
        ok &= check(full.2 >= b.2, &mut d, format!("full {} vs {name} {}", full.2, b.2));
    }
    let ns = f.comparison.iter().find(|c| c.0 == "no_sparsity").unwrap();
    ok &= check(ns.3 >= full.3, &mut d, format!("levers no_sparsity {} vs full {}", ns.3, full.3));
    let efforts: Vec<f64> = f.sweep.iter().map(|s| s.2).collect();
    let monotone = efforts.windows(2).all(|w| w[1] <= w[0]);
    let listed: Vec<String> = f.sweep.iter().map(|s| format!("{}:{:.2}/{}", s.0, s.2, s.3)).collect();
    ok &= check(monotone, &mut d, format!("lambda effort/n_conv {}", listed.join(" ")));
    let last = f.sweep.last().unwrap();
    ok &= check(last.2 <= NEAR_ZERO_EFFORT && last.3 == 0, &mut d, format!("largest lambda effort <= {NEAR_ZERO_EFFORT:.0e}, n_conv 0"));
    Line { id: 6, title: "comparative ordering", outcome: verdict(ok), detail: d }
}

fn json_files(dir: &Path, out: &mut Vec<PathBuf>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            json_files(&p, out);
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    json_files(dir, &mut files);
    files.into_iter().map(|p| (p.clone(), std::fs::read(p).unwrap())).collect()
}

fn determinism(f: &FixtureRuns) -> Line {
    let mut d = String::new();
    let dir = tempfile::tempdir().unwrap();
    let mut config = f.config.clone();
    config.output_dir = dir.path().to_path_buf();
    run_on(&config, &f.data).unwrap();
    let first = snapshot(dir.path());
    run_on(&config, &f.data).unwrap();
    let second = snapshot(dir.path());
    let identical = first == second && !first.is_empty();
    let mut ok = check(identical, &mut d, format!("{} JSON artifacts byte-identical", first.len()));
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let run = many.install(|| run_seed(&f.config, &f.data, 42).unwrap());
    let j1 = f.run.result.trajectory.last().unwrap().objective;
    let j4 = run.result.trajectory.last().unwrap().objective;
    ok &= check((j1 - j4).abs() <= THREAD_J_TOL, &mut d, format!("|J(1 thread) - J(4 threads)| = {:.1e}", (j1 - j4).abs()));
    Line { id: 7, title: "determinism", outcome: verdict(ok), detail: d }
}

fn beijing() -> Line {
    let (Ok(csv), Ok(schema)) = (std::env::var("LATENT_ALIGN_BEIJING_CSV"), std::env::var("LATENT_ALIGN_BEIJING_SCHEMA")) else {
        return Line {
            id: 8,
            title: "public survey run",
            outcome: Outcome::Skip,
            detail: "LATENT_ALIGN_BEIJING_CSV / LATENT_ALIGN_BEIJING_SCHEMA not set".into(),
        };
    };
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig {
        data: DataSource::Files { dataset: csv.into(), schema: schema.into() },
        k: 10,
        groups: 3,
        tau_y: 0.5,
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    config.optimizer.lambda = 0.05;
    let mut d = String::new();
    let outcome = match load_data(&config.data).and_then(|data| run_on(&config, &data)) {
        Err(e) => {
            check(false, &mut d, format!("run failed: {e}"));
            Outcome::Fail
        }
        Ok(out) => {
            let m = &out.runs[0].metrics;
            let mut ok = check(m.n_lever <= BEIJING_MAX_LEVERS, &mut d, format!("n_lever {} <= {BEIJING_MAX_LEVERS}", m.n_lever));
            ok &= check(m.r_conv > 0.0, &mut d, format!("r_conv {:.4}", m.r_conv));
            let _ = write!(
                d,
                "; n_conv {} effort {:.4} rho {:.4} (published: 61, 0.1718, 15.6777, 8 levers, 0.2425)",
                m.n_conv, m.effort, m.rho_reduction
            );
            verdict(ok)
        }
    };
    Line { id: 8, title: "public survey run", outcome, detail: d }
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut lines = vec![kernels(), gradients()];
    let f = fixture_runs();
    lines.push(feasibility(&f));
    lines.push(monotonicity(&f));
    lines.push(effectiveness(&f));
    lines.push(ordering(&f));
    lines.push(determinism(&f));
    lines.push(beijing());

    let mut unexpected = 0;
    let (mut pass, mut fail, mut skip) = (0, 0, 0);
    for l in &lines {
        let tag = match l.outcome {
            Outcome::Pass => {
                pass += 1;
                "PASS"
            }
            Outcome::Skip => {
                skip += 1;
                "SKIP"
            }
            Outcome::Fail => {
                fail += 1;
                if strict || !KNOWN_GAPS.contains(&l.id) {
                    unexpected += 1;
                    "FAIL"
                } else {
                    "FAIL (known gap)"
                }
            }
        };
        println!("criterion {} {:<28} {tag}: {}", l.id, l.title, l.detail);
    }
    println!("acceptance: {pass} passed, {fail} failed, {skip} skipped");
    if unexpected > 0 {
        std::process::exit(1);
    }
}
