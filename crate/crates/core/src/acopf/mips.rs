//! Primal–dual interior-point method with a log-barrier on slack variables
//! and Newton steps on the full KKT system using the exact Lagrangian
//! Hessian.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::nlp::NlpProblem;

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub grad_tol: f64,
    pub comp_tol: f64,
    pub cost_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the boundary a step may cover.
    pub xi: f64,
    /// Centering parameter: barrier weight is reduced to this fraction of the
    /// average complementarity each iteration.
    pub sigma: f64,
    /// Initial slack and multiplier level.
    pub z0: f64,
    /// Initial level of a single restart from `x0` after a failed attempt;
    /// `None` disables the restart.
    pub restart_z0: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-6,
            grad_tol: 1e-6,
            comp_tol: 1e-6,
            cost_tol: 1e-6,
            max_iter: 200,
            xi: 0.99995,
            sigma: 0.2,
            z0: 1.0,
            restart_z0: Some(0.1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Scaled termination measures, identical to the ones tested for convergence.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Conditions {
    pub feas: f64,
    pub grad: f64,
    pub comp: f64,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct NlpResult {
    pub x: Vec<f64>,
    /// Objective in problem units (unscaled).
    pub objective: f64,
    /// Multipliers of the problem's equality rows followed by fixed-variable rows.
    pub lambda: Vec<f64>,
    /// Multipliers of the problem's inequality rows followed by lower- and
    /// upper-bound rows (see [`BoundRows`]).
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub conditions: Conditions,
    pub solve_time: f64,
}

/// Variable bounds expressed as constraint rows: fixed variables become
/// equalities, finite bounds become `lo - x ≤ 0` and `x - hi ≤ 0`.
#[derive(Clone, Debug, Default)]
pub struct BoundRows {
    pub fixed: Vec<(usize, f64)>,
    pub lower: Vec<(usize, f64)>,
    pub upper: Vec<(usize, f64)>,
}

impl BoundRows {
    pub fn of(problem: &NlpProblem) -> Self {
        let mut rows = BoundRows::default();
        for i in 0..problem.n {
            let (lo, hi) = (problem.lower[i], problem.upper[i]);
            if lo == hi {
                rows.fixed.push((i, lo));
                continue;
            }
            if lo.is_finite() {
                rows.lower.push((i, lo));
            }
            if hi.is_finite() {
                rows.upper.push((i, hi));
            }
        }
        rows
    }
}

/// Everything the iteration needs at one point.
pub(crate) struct PointEval {
    pub f: f64,
    pub df: Vec<f64>,
    pub g: Vec<f64>,
    pub jg: Vec<Vec<(usize, f64)>>,
    pub h: Vec<f64>,
    pub jh: Vec<Vec<(usize, f64)>>,
}

pub(crate) fn evaluate_point(problem: &NlpProblem, bounds: &BoundRows, x: &[f64]) -> PointEval {
    let scale = problem.cost_scale;
    let f = scale * problem.objective.value(x);
    let mut df = vec![0.0; problem.n];
    problem.objective.gradient(x, &mut df);
    df.iter_mut().for_each(|d| *d *= scale);
    let eq = problem.equalities_at(x);
    let iq = problem.inequalities_at(x);
    let (mut g, mut jg) = (eq.values, eq.rows);
    for &(i, val) in &bounds.fixed {
        g.push(x[i] - val);
        jg.push(vec![(i, 1.0)]);
    }
    let (mut h, mut jh) = (iq.values, iq.rows);
    for &(i, lo) in &bounds.lower {
        h.push(lo - x[i]);
        jh.push(vec![(i, -1.0)]);
    }
    for &(i, hi) in &bounds.upper {
        h.push(x[i] - hi);
        jh.push(vec![(i, 1.0)]);
    }
    PointEval { f, df, g, jg, h, jh }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `∇f + Jgᵀλ + Jhᵀμ`.
pub(crate) fn lagrangian_gradient(p: &PointEval, lambda: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut lx = p.df.clone();
    for (row, l) in p.jg.iter().zip(lambda) {
        for &(c, v) in row {
            lx[c] += v * l;
        }
    }
    for (row, m) in p.jh.iter().zip(mu) {
        for &(c, v) in row {
            lx[c] += v * m;
        }
    }
    lx
}

pub(crate) fn conditions(
    p: &PointEval,
    x: &[f64],
    lambda: &[f64],
    mu: &[f64],
    z: &[f64],
    f_prev: f64,
) -> Conditions {
    let lx = lagrangian_gradient(p, lambda, mu);
    let max_h = p.h.iter().fold(0.0f64, |m, &v| m.max(v));
    let x_norm = norm_inf(x);
    let feas = norm_inf(&p.g).max(max_h) / (1.0 + x_norm.max(norm_inf(z)));
    let grad = norm_inf(&lx) / (1.0 + norm_inf(lambda).max(norm_inf(mu)));
    let comp = z.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>() / (1.0 + x_norm);
    let cost = (p.f - f_prev).abs() / (1.0 + f_prev.abs());
    Conditions { feas, grad, comp, cost }
}

/// Minimizes the problem from `problem.x0`.
pub fn solve_nlp(problem: &NlpProblem, opts: &SolverOptions) -> NlpResult {
    let start = Instant::now();
    let first = solve_from(problem, opts);
    let z0 = match opts.restart_z0 {
        Some(z0) if first.status != SolveStatus::Optimal && z0 != opts.z0 => z0,
        _ => return NlpResult { solve_time: start.elapsed().as_secs_f64(), ..first },
    };
    log::debug!("interior point ended {:?} after {} iterations; restarting with z0 = {z0}", first.status, first.iterations);
    let second = solve_from(problem, &SolverOptions { z0, ..*opts });
    NlpResult { iterations: first.iterations + second.iterations, solve_time: start.elapsed().as_secs_f64(), ..second }
}

fn solve_from(problem: &NlpProblem, opts: &SolverOptions) -> NlpResult {
    let start = Instant::now();
    let n = problem.n;
    let bounds = BoundRows::of(problem);
    let mut x = problem.x0.clone();
    let mut pt = evaluate_point(problem, &bounds, &x);
    let neq = pt.g.len();
    let niq = pt.h.len();

    let mut z = vec![opts.z0; niq];
    let mut mu = vec![opts.z0; niq];
    let mut gamma = 1.0;
    for k in 0..niq {
        if pt.h[k] < -opts.z0 {
            z[k] = -pt.h[k];
        }
        if gamma / z[k] > opts.z0 {
            mu[k] = gamma / z[k];
        }
    }
    let mut lambda = vec![0.0; neq];
    let mut f_prev = pt.f;
    let mut cond = conditions(&pt, &x, &lambda, &mu, &z, f_prev);
    cond.cost = 0.0;
    let converged = |c: &Conditions| {
        c.feas < opts.feas_tol && c.grad < opts.grad_tol && c.comp < opts.comp_tol && c.cost < opts.cost_tol
    };

    let mut status = None;
    let mut iterations = 0;
    if converged(&cond) {
        status = Some(SolveStatus::Optimal);
    }
    while status.is_none() && iterations < opts.max_iter {
        iterations += 1;
        let mut m = problem.lagrangian_hessian(&x, problem.cost_scale, &lambda[..problem.n_eq()], &mu[..problem.n_ineq()]);
        let lx = lagrangian_gradient(&pt, &lambda, &mu);
        let mut rhs_x: Vec<f64> = lx.iter().map(|v| -v).collect();
        for (k, row) in pt.jh.iter().enumerate() {
            let d = mu[k] / z[k];
            let w = (gamma + mu[k] * pt.h[k]) / z[k];
            for &(c1, v1) in row {
                rhs_x[c1] -= v1 * w;
                for &(c2, v2) in row {
                    m[(c1, c2)] += d * v1 * v2;
                }
            }
        }
        let dim = n + neq;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&m);
        for (r, row) in pt.jg.iter().enumerate() {
            for &(c, v) in row {
                kkt[(n + r, c)] += v;
                kkt[(c, n + r)] += v;
            }
        }
        let mut rhs = DVector::zeros(dim);
        for i in 0..n {
            rhs[i] = rhs_x[i];
        }
        for r in 0..neq {
            rhs[n + r] = -pt.g[r];
        }
        let sol = match kkt.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                // Retry with a small regularization before giving up.
                let mut reg = kkt;
                for i in 0..n {
                    reg[(i, i)] += 1e-8;
                }
                for r in 0..neq {
                    reg[(n + r, n + r)] -= 1e-8;
                }
                match reg.lu().solve(&rhs) {
                    Some(s) if s.iter().all(|v| v.is_finite()) => s,
                    _ => {
                        status = Some(SolveStatus::Infeasible);
                        break;
                    }
                }
            }
        };
        let dx: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        let dlam: Vec<f64> = sol.rows(n, neq).iter().copied().collect();
        let mut dz = vec![0.0; niq];
        let mut dmu = vec![0.0; niq];
        for k in 0..niq {
            let jdx: f64 = pt.jh[k].iter().map(|&(c, v)| v * dx[c]).sum();
            dz[k] = -pt.h[k] - z[k] - jdx;
            dmu[k] = -mu[k] + (gamma - mu[k] * dz[k]) / z[k];
        }
        let mut alpha_p: f64 = 1.0;
        let mut alpha_d: f64 = 1.0;
        for k in 0..niq {
            if dz[k] < 0.0 {
                alpha_p = alpha_p.min(opts.xi * -z[k] / dz[k]);
            }
            if dmu[k] < 0.0 {
                alpha_d = alpha_d.min(opts.xi * -mu[k] / dmu[k]);
            }
        }
        for i in 0..n {
            x[i] += alpha_p * dx[i];
        }
        for k in 0..niq {
            z[k] += alpha_p * dz[k];
            mu[k] += alpha_d * dmu[k];
        }
        for r in 0..neq {
            lambda[r] += alpha_d * dlam[r];
        }
        if niq > 0 {
            gamma = opts.sigma * z.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / niq as f64;
        }
        f_prev = pt.f;
        pt = evaluate_point(problem, &bounds, &x);
        cond = conditions(&pt, &x, &lambda, &mu, &z, f_prev);
        let diverged = !pt.f.is_finite()
            || x.iter().any(|v| !v.is_finite())
            || norm_inf(&x) > 1e10
            || norm_inf(&lambda) > 1e10
            || norm_inf(&mu) > 1e10;
        if diverged {
            status = Some(SolveStatus::Infeasible);
        } else if converged(&cond) {
            status = Some(SolveStatus::Optimal);
        }
    }
    let status = status.unwrap_or(if cond.feas > opts.feas_tol {
        SolveStatus::Infeasible
    } else {
        SolveStatus::IterationLimit
    });
    NlpResult {
        objective: problem.objective.value(&x),
        x,
        lambda,
        mu,
        z,
        status,
        iterations,
        conditions: cond,
        solve_time: start.elapsed().as_secs_f64(),
    }
}
