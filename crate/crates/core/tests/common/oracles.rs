//! Independent reference implementations and the seeded suites built on them.
//! Each suite returns the worst error it saw.

use latent_align::attribution::{shapley_latent, SurrogateModel};
use latent_align::intervention::{coupling_gradients, coupling_residual, ot_grad_wrt_u, prox_weighted_l21};
use latent_align::latent::nnls_project;
use latent_align::transport::{cost_matrix, sinkhorn, SinkhornSettings, TransportProblem};
use ndarray::{array, Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use super::{rng, solve_dense, uniform_matrix};

fn ls_objective(x: ArrayView1<f64>, h: &Array2<f64>, w: &Array1<f64>) -> f64 {
    let r = &x - &w.dot(h);
    r.dot(&r)
}

/// Best nonnegative fit over all 2^k supports, each solved unconstrained.
pub fn nnls_exhaustive(x: ArrayView1<f64>, h: &Array2<f64>) -> Array1<f64> {
    let k = h.nrows();
    let mut best = Array1::<f64>::zeros(k);
    let mut best_obj = ls_objective(x, h, &best);
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|r| mask & (1 << r) != 0).collect();
        let hs = h.select(Axis(0), &support);
        let gram = hs.dot(&hs.t());
        let rhs = hs.dot(&x);
        let Some(coef) = solve_dense(&gram, &rhs) else { continue };
        if coef.iter().any(|&c| c < 0.0) {
            continue;
        }
        let mut w = Array1::<f64>::zeros(k);
        for (p, &r) in support.iter().enumerate() {
            w[r] = coef[p];
        }
        let obj = ls_objective(x, h, &w);
        if obj < best_obj {
            best_obj = obj;
            best = w;
        }
    }
    best
}

pub fn nnls_suite(instances: usize) -> f64 {
    let mut r = rng(100);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let h = uniform_matrix(&mut r, 3, 6, 0.0, 1.0);
        // mix of representable and arbitrary targets
        let x: Array1<f64> = if r.random_bool(0.5) {
            uniform_matrix(&mut r, 1, 3, -0.5, 1.0).row(0).dot(&h)
        } else {
            uniform_matrix(&mut r, 1, 6, 0.0, 2.0).row(0).to_owned()
        };
        let got = nnls_project(x.view(), &h).unwrap();
        let want = nnls_exhaustive(x.view(), &h);
        worst = worst.max((&got - &want).iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    worst
}

/// Largest entry error of the 2 x 2 symmetric plan at eta = 1, against
/// `Gamma_11 = 1 / (2 (1 + e^-1))`.
pub fn sinkhorn_closed_form_error() -> f64 {
    let p = TransportProblem::uniform(array![[0.0, 1.0], [1.0, 0.0]], 1.0);
    let plan = sinkhorn(&p, SinkhornSettings::default()).unwrap();
    let e = (-1.0f64).exp();
    let diag = 1.0 / (2.0 * (1.0 + e));
    let want = array![[diag, e * diag], [e * diag, diag]];
    super::max_abs_diff(&plan.gamma, &want)
}

/// Entropic OT value by gradient ascent on the smooth dual
/// `<f, a> + <g, b> - eta * sum exp((f_p + g_q - M_pq) / eta)`.
pub fn entropic_value_by_dual_ascent(m: &Array2<f64>, eta: f64) -> f64 {
    let (n, k) = m.dim();
    let (a, b) = (1.0 / n as f64, 1.0 / k as f64);
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(k);
    let plan = |f: &Array1<f64>, g: &Array1<f64>| {
        Array2::from_shape_fn((n, k), |(p, q)| ((f[p] + g[q] - m[[p, q]]) / eta).exp())
    };
    let step = eta / 2.0;
    for _ in 0..200_000 {
        let gam = plan(&f, &g);
        let rf = gam.sum_axis(Axis(1)).mapv(|s| a - s);
        let rg = gam.sum_axis(Axis(0)).mapv(|s| b - s);
        let err = rf.iter().chain(rg.iter()).map(|v| v.abs()).fold(0.0, f64::max);
        if err < 1e-13 {
            break;
        }
        f.scaled_add(step, &rf);
        g.scaled_add(step, &rg);
    }
    let gam = plan(&f, &g);
    gam.iter()
        .zip(m.iter())
        .map(|(&x, &c)| if x > 0.0 { x * c + eta * x * (x.ln() - 1.0) } else { 0.0 })
        .sum()
}

/// 6 x 5 instances in three dimensions.
pub fn sinkhorn_dual_suite(instances: usize) -> f64 {
    let mut r = rng(200);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let u = uniform_matrix(&mut r, 6, 3, 0.0, 1.0);
        let v = uniform_matrix(&mut r, 5, 3, 0.0, 1.0);
        let m = cost_matrix(u.view(), v.view()).unwrap();
        let eta = 0.5;
        let plan = sinkhorn(&TransportProblem::uniform(m.clone(), eta), SinkhornSettings::default()).unwrap();
        worst = worst.max((plan.entropic_value - entropic_value_by_dual_ascent(&m, eta)).abs());
    }
    worst
}

/// Minimizer of `1/2 (1 - s)^2 c^2 + t s c` over `s` in [0, 1], by bisection on the derivative sign.
pub fn best_scale(c: f64, t: f64) -> f64 {
    let slope = |s: f64| -(1.0 - s) * c * c + t * c;
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn prox_suite(instances: usize) -> f64 {
    let mut r = rng(400);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let d = uniform_matrix(&mut r, 7, 4, -1.0, 1.0);
        let rho: Vec<f64> = (0..4).map(|_| r.random_range(0.1..3.0)).collect();
        let t = r.random_range(0.0..1.5);
        let out = prox_weighted_l21(d.view(), &rho, t);
        for j in 0..4 {
            let c = d.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = best_scale(c, t * rho[j]);
            for i in 0..7 {
                worst = worst.max((out[[i, j]] - s * d[[i, j]]).abs());
            }
        }
    }
    worst
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn random_model(r: &mut impl Rng, k: usize, bias: f64) -> SurrogateModel {
    SurrogateModel {
        beta: Array1::from_shape_fn(k, |_| r.random_range(-3.0..3.0)),
        bias,
        tau_y: 0.5,
        train_accuracy: 1.0,
        iterations: 0,
    }
}

/// Average marginal contribution over all orderings of the k components,
/// with absent components set to the background.
pub fn shapley_brute_suite() -> f64 {
    let mut r = rng(500);
    let k = 3;
    let model = random_model(&mut r, k, 0.3);
    let codes = uniform_matrix(&mut r, 25, k, 0.0, 1.0);
    let bg = codes.mean_axis(Axis(0)).unwrap();
    let phi = shapley_latent(&model, codes.view(), bg.view()).unwrap();
    let perms = permutations(k);
    let mut worst = 0.0f64;
    for (i, w) in codes.outer_iter().enumerate() {
        let value = |present: &[bool]| -> f64 {
            let z: Array1<f64> = (0..k).map(|c| if present[c] { w[c] } else { bg[c] }).collect();
            model.margin(z.view())
        };
        let mut brute = vec![0.0; k];
        for p in &perms {
            let mut present = vec![false; k];
            for &c in p {
                let before = value(&present);
                present[c] = true;
                brute[c] += value(&present) - before;
            }
        }
        for c in 0..k {
            worst = worst.max((phi[[i, c]] - brute[c] / perms.len() as f64).abs());
        }
    }
    worst
}

/// Efficiency gap in units of machine epsilon, scaled by the margin gap and k.
pub fn shapley_efficiency_suite() -> f64 {
    let mut r = rng(501);
    let mut worst = 0.0f64;
    for n in [1, 10, 300, 2000] {
        let k = 5;
        let model = random_model(&mut r, k, -0.7);
        let codes = uniform_matrix(&mut r, n, k, 0.0, 1.0);
        let bg = codes.mean_axis(Axis(0)).unwrap();
        let phi = shapley_latent(&model, codes.view(), bg.view()).unwrap();
        for (i, w) in codes.outer_iter().enumerate() {
            let total: f64 = phi.row(i).sum();
            let gap = model.margin(w) - model.margin(bg.view());
            let scale = f64::EPSILON * (1.0 + gap.abs() + model.beta.iter().map(|b| b.abs()).sum::<f64>()) * k as f64;
            worst = worst.max((total - gap).abs() / scale);
        }
    }
    worst
}

const FD_STEP: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Worst relative gap between `grad` and central differences of `f` at `x`.
pub fn fd_error(x: &Array2<f64>, grad: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for ((i, j), &g) in grad.indexed_iter() {
        let mut plus = x.clone();
        plus[[i, j]] += FD_STEP;
        let mut minus = x.clone();
        minus[[i, j]] -= FD_STEP;
        worst = worst.max(rel_err(g, (f(&plus) - f(&minus)) / (2.0 * FD_STEP)));
    }
    worst
}

pub fn normalize(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.outer_iter_mut() {
        let s = row.sum() + 1e-12;
        row /= s;
    }
    out
}

pub fn fixed_plan_cost(u: &Array2<f64>, reference: &Array2<f64>, gamma: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for (p, row) in u.outer_iter().enumerate() {
        let s = row.sum() + 1e-12;
        for (q, w) in reference.outer_iter().enumerate() {
            let d: f64 = row.iter().zip(w.iter()).map(|(a, b)| (a / s - b).powi(2)).sum();
            total += gamma[[p, q]] * d;
        }
    }
    total
}

/// Returns the worst error for the Delta and U arguments.
pub fn coupling_fd_suite(instances: usize) -> (f64, f64) {
    let mut r = rng(800);
    let (mut wd, mut wu) = (0.0f64, 0.0f64);
    for _ in 0..instances {
        let (n, k, d) = (r.random_range(2..6), r.random_range(2..5), r.random_range(3..8));
        let x = uniform_matrix(&mut r, n, d, 0.0, 1.0);
        let h = uniform_matrix(&mut r, k, d, 0.0, 1.0);
        let delta = uniform_matrix(&mut r, n, d, -0.3, 0.3);
        let u = uniform_matrix(&mut r, n, k, 0.0, 1.0);
        let (gd, gu) = coupling_gradients(delta.view(), u.view(), x.view(), h.view()).unwrap();
        wd = wd.max(fd_error(&delta, &gd, |dd| {
            coupling_residual(dd.view(), u.view(), x.view(), h.view()).unwrap()
        }));
        wu = wu.max(fd_error(&u, &gu, |uu| {
            coupling_residual(delta.view(), uu.view(), x.view(), h.view()).unwrap()
        }));
    }
    (wd, wu)
}

pub fn ot_grad_fd_suite(instances: usize) -> f64 {
    let mut r = rng(801);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (nb, na, k) = (r.random_range(2..6), r.random_range(2..6), r.random_range(2..5));
        let u = uniform_matrix(&mut r, nb, k, 0.05, 1.0);
        let reference = normalize(&uniform_matrix(&mut r, na, k, 0.0, 1.0));
        let raw = uniform_matrix(&mut r, nb, na, 0.0, 1.0);
        let gamma = &raw / raw.sum();
        let g = ot_grad_wrt_u(u.view(), reference.view(), gamma.view()).unwrap();
        worst = worst.max(fd_error(&u, &g, |uu| fixed_plan_cost(uu, &reference, &gamma)));
    }
    worst
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn wcss(x: &Array2<f64>, labels: &[usize], g: usize) -> f64 {
    let k = x.ncols();
    let mut total = 0.0;
    for c in 0..g {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let mut centroid = vec![0.0; k];
        for &i in &members {
            for r in 0..k {
                centroid[r] += x[[i, r]] / members.len() as f64;
            }
        }
        for &i in &members {
            total += (0..k).map(|r| (x[[i, r]] - centroid[r]).powi(2)).sum::<f64>();
        }
    }
    total
}
