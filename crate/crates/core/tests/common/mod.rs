//! Independent oracles shared by the integration tests and the acceptance
//! target. Nothing here calls the solvers it is used to check.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use gridveil::acopf::NlpProblem;
use gridveil::netmodel::{BusKind, NetworkCase};
use gridveil::sampling::{generate_dataset, lhs, split_dataset, Label, SamplingOptions};
use gridveil::surrogate::{
    build_bundle, classify, ds_charts, loss_and_grad, train_fr, train_pq, PolytopeModel, SurrogateBundle, TrainOptions,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Backward/forward sweep on a radial feeder with the slack at 1∠0 p.u.
/// Returns bus voltage magnitudes in case bus order.
pub fn sweep_voltages(case: &NetworkCase, tol: f64) -> Vec<f64> {
    let n = case.n_buses();
    let index: HashMap<u32, usize> = case.buses.iter().enumerate().map(|(i, b)| (b.id.0, i)).collect();
    let root = case.buses.iter().position(|b| b.kind == BusKind::Slack).expect("slack bus");
    let mut adj: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    for br in case.branches.iter().filter(|b| b.closed) {
        assert!(br.b_sh == 0.0 && br.tap == 1.0, "sweep oracle handles plain series branches only");
        let (i, k) = (index[&br.from.0], index[&br.to.0]);
        let z = Complex64::new(br.r, br.x);
        adj[i].push((k, z));
        adj[k].push((i, z));
    }
    // Breadth-first order from the root; parent[i] = (parent, series impedance).
    let mut parent: Vec<Option<(usize, Complex64)>> = vec![None; n];
    let mut order = vec![root];
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(i) = queue.pop_front() {
        for &(k, z) in &adj[i] {
            if !seen[k] {
                seen[k] = true;
                parent[k] = Some((i, z));
                order.push(k);
                queue.push_back(k);
            }
        }
    }
    assert_eq!(order.len(), n, "feeder is not connected");
    assert_eq!(adj.iter().map(Vec::len).sum::<usize>(), 2 * (n - 1), "feeder is not radial");

    let base = case.base_mva;
    let load: Vec<Complex64> = case.buses.iter().map(|b| Complex64::new(b.p_d, b.q_d) / base).collect();
    let shunt: Vec<Complex64> = case.buses.iter().map(|b| Complex64::new(b.g_s, -b.b_s) / base).collect();
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    for _ in 0..1000 {
        let mut current: Vec<Complex64> = (0..n).map(|i| (load[i] / v[i]).conj() + shunt[i] * v[i]).collect();
        for &i in order.iter().rev() {
            if let Some((p, _)) = parent[i] {
                let c = current[i];
                current[p] += c;
            }
        }
        let mut change = 0.0f64;
        for &i in &order {
            if let Some((p, z)) = parent[i] {
                let new = v[p] - z * current[i];
                change = change.max((new - v[i]).norm());
                v[i] = new;
            }
        }
        if change < tol {
            break;
        }
    }
    v.iter().map(|x| x.norm()).collect()
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..m {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Largest `|a − b| / max(1, |a|)` over entries.
pub fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max)
}

/// A random point strictly inside the variable box; unbounded variables
/// are drawn around their starting value.
pub fn interior_point(p: &NlpProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..p.n)
        .map(|i| {
            let (lo, hi) = (p.lower[i], p.upper[i]);
            if lo.is_finite() && hi.is_finite() && hi > lo {
                lo + (hi - lo) * rng.gen_range(0.05..0.95)
            } else if lo.is_finite() && hi.is_finite() {
                lo
            } else {
                p.x0[i] + rng.gen_range(-0.5..0.5)
            }
        })
        .collect()
}

/// Worst relative error of the analytic objective gradient and constraint
/// Jacobians against central differences over `points` random points.
pub fn jacobian_audit(p: &NlpProblem, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x = interior_point(p, &mut rng);
        let h = 1e-6;
        let eq = p.equalities_at(&x).dense_jacobian(p.n);
        worst = worst.max(max_rel_err(&eq, &fd_jacobian(|z| p.equality_values(z), &x, h)));
        let iq = p.inequalities_at(&x).dense_jacobian(p.n);
        worst = worst.max(max_rel_err(&iq, &fd_jacobian(|z| p.inequality_values(z), &x, h)));
        let mut g = vec![0.0; p.n];
        p.objective.gradient(&x, &mut g);
        let fd = fd_jacobian(|z| vec![p.objective.value(z)], &x, h);
        worst = worst.max(max_rel_err(&DMatrix::from_row_slice(1, p.n, &g), &fd));
    }
    worst
}

/// Three buses with magnitudes held in [1, 1.0001] p.u.; the only real
/// degree of freedom is the unit at bus 2 (the unit at bus 3 supplies
/// reactive power only). Line 2-3 is rated below its unconstrained flow.
pub const THREE_BUS: &str = "\
name three
base_mva 100
bus
1 slack 0 0 0 0 1 1.0001 0
2 pq 40 10 0 0 1 1.0001 0
3 pq 80 30 0 0 1 1.0001 0
branch
1 2 0.01 0.1 0 0 1 1 0
2 3 0.02 0.2 0 45 1 1 0
1 3 0.01 0.15 0 0 1 1 0
gen
1 1 0 0 300 -300 300 0.02 40 0
2 2 0 0 200 -300 300 0.01 10 0
3 3 0 0 0 -300 300 0 0 0
";

/// The brute-force optimum of [`THREE_BUS`] with all magnitudes at 1 p.u.
/// (a feasible restriction, so never below the true optimum): the bus-2
/// output is swept on a 0.1 MW grid and then on a 1e-4 MW grid around the
/// best point, angles are found by Newton's method on the
/// two active-power balances, and reactive outputs and line ratings are
/// checked. Returns the best (cost $/h, p2 MW).
pub fn three_bus_grid_oracle() -> (f64, f64) {
    let base = 100.0;
    let y = |r: f64, x: f64| Complex64::new(1.0, 0.0) / Complex64::new(r, x);
    let lines = [(0usize, 1usize, y(0.01, 0.1), 0.0), (1, 2, y(0.02, 0.2), 45.0), (0, 2, y(0.01, 0.15), 0.0)];
    let mut ybus = [[Complex64::new(0.0, 0.0); 3]; 3];
    for &(i, k, yl, _) in &lines {
        ybus[i][i] += yl;
        ybus[k][k] += yl;
        ybus[i][k] -= yl;
        ybus[k][i] -= yl;
    }
    let s_inj = |th: &[f64; 3]| -> [Complex64; 3] {
        let v: Vec<Complex64> = th.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let mut s = [Complex64::new(0.0, 0.0); 3];
        for i in 0..3 {
            let cur: Complex64 = (0..3).map(|k| ybus[i][k] * v[k]).sum();
            s[i] = v[i] * cur.conj();
        }
        s
    };
    let (pd, qd) = ([0.0, 40.0, 80.0], [0.0, 10.0, 30.0]);
    // Cost at a given bus-2 output, or None if a limit is broken.
    let eval = |p2: f64, th: &mut [f64; 3]| -> Option<f64> {
        let target = [(p2 - pd[1]) / base, -pd[2] / base];
        let mut ok = false;
        for _ in 0..50 {
            let s = s_inj(th);
            let f = [s[1].re - target[0], s[2].re - target[1]];
            if f[0].abs().max(f[1].abs()) < 1e-12 {
                ok = true;
                break;
            }
            // 2x2 Jacobian by central differences in θ2, θ3.
            let mut jac = [[0.0; 2]; 2];
            for c in 0..2 {
                let (mut tp, mut tm) = (*th, *th);
                tp[c + 1] += 1e-7;
                tm[c + 1] -= 1e-7;
                let (sp, sm) = (s_inj(&tp), s_inj(&tm));
                jac[0][c] = (sp[1].re - sm[1].re) / 2e-7;
                jac[1][c] = (sp[2].re - sm[2].re) / 2e-7;
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            th[1] -= (jac[1][1] * f[0] - jac[0][1] * f[1]) / det;
            th[2] -= (-jac[1][0] * f[0] + jac[0][0] * f[1]) / det;
        }
        if !ok {
            return None;
        }
        let s = s_inj(th);
        let p1 = s[0].re * base + pd[0];
        let q: Vec<f64> = (0..3).map(|i| s[i].im * base + qd[i]).collect();
        if !(0.0..=300.0).contains(&p1) || q.iter().any(|q| q.abs() > 300.0) {
            return None;
        }
        let v: Vec<Complex64> = th.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let overloaded = lines.iter().any(|&(i, k, yl, rate)| {
            let sf = v[i] * ((v[i] - v[k]) * yl).conj() * base;
            let st = v[k] * ((v[k] - v[i]) * yl).conj() * base;
            rate > 0.0 && sf.norm().max(st.norm()) > rate
        });
        if overloaded {
            return None;
        }
        Some(0.02 * p1 * p1 + 40.0 * p1 + 0.01 * p2 * p2 + 10.0 * p2)
    };
    let mut best = (f64::INFINITY, f64::NAN);
    let mut th = [0.0; 3];
    for step in 0..=2000 {
        let p2 = step as f64 * 0.1;
        if let Some(cost) = eval(p2, &mut th) {
            if cost < best.0 {
                best = (cost, p2);
            }
        }
    }
    // Second pass at 1e-4 MW around the coarse optimum.
    let centre = best.1;
    for step in -1000..=1000 {
        let p2 = centre + step as f64 * 1e-4;
        if !(0.0..=200.0).contains(&p2) {
            continue;
        }
        if let Some(cost) = eval(p2, &mut th) {
            if cost < best.0 {
                best = (cost, p2);
            }
        }
    }
    best
}

/// Small surrogate bundles for DS1, DS2 and DS3 (DS3 reuses the DS2
/// models), trained on `n` samples each.
pub fn quick_bundles(dss: &[NetworkCase], n: usize, n_h: usize, epochs: usize) -> Vec<SurrogateBundle> {
    let mut models = Vec::new();
    for ds in &dss[..2] {
        let charts = ds_charts(ds).unwrap();
        let data = generate_dataset(ds, &charts, n, 42, &SamplingOptions::default()).unwrap();
        let (train, _) = split_dataset(&data, 0.8, 1).unwrap();
        let opts = TrainOptions { n_h, lr: 1e-2, max_epochs: epochs, w_10: 2.0, seed: 3, ..Default::default() };
        models.push((train_fr(&train, &opts).unwrap(), train_pq(&train, ds.base_mva).unwrap()));
    }
    let band = (0.95, 1.05);
    vec![
        build_bundle(&dss[0], models[0].0.clone(), models[0].1.clone(), band).unwrap(),
        build_bundle(&dss[1], models[1].0.clone(), models[1].1.clone(), band).unwrap(),
        build_bundle(&dss[2], models[1].0.clone(), models[1].1.clone(), band).unwrap(),
    ]
}

/// Worst relative error between the analytic weighted-BCE gradient and
/// central differences over `points` random (model, batch) draws. Draws
/// where a sample's top two nodes are within 1e-3 are redrawn, since the
/// max is not differentiable at a tie.
pub fn bce_gradient_audit(points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_h, d, batch) = (6, 4, 16);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < points {
        let w: Vec<Vec<f64>> = (0..n_h).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let b: Vec<f64> = (0..n_h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xs: Vec<Vec<f64>> = (0..batch).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let labels: Vec<Label> =
            (0..batch).map(|_| if rng.gen_bool(0.5) { Label::Feasible } else { Label::Infeasible }).collect();
        let tie_free = xs.iter().all(|x| {
            let mut o: Vec<f64> = w.iter().zip(&b).map(|(r, bi)| r.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>() + bi).collect();
            o.sort_by(|a, b| b.total_cmp(a));
            o[0] - o[1] > 1e-3
        });
        if !tie_free {
            continue;
        }
        let (w_10, w_01) = (rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0));
        let loss = |theta: &[f64]| -> Vec<f64> {
            let wm: Vec<Vec<f64>> = theta[..n_h * d].chunks(d).map(<[f64]>::to_vec).collect();
            let model = PolytopeModel::new(wm, theta[n_h * d..].to_vec()).unwrap();
            vec![loss_and_grad(&model, &xs, &labels, w_10, w_01).unwrap().loss]
        };
        let theta: Vec<f64> = w.iter().flatten().chain(&b).copied().collect();
        let g = loss_and_grad(&PolytopeModel::new(w, b).unwrap(), &xs, &labels, w_10, w_01).unwrap();
        let analytic: Vec<f64> = g.grad_w.iter().flatten().chain(&g.grad_b).copied().collect();
        let fd = fd_jacobian(loss, &theta, 1e-6);
        worst = worst.max(max_rel_err(&DMatrix::from_row_slice(1, theta.len(), &analytic), &fd));
        done += 1;
    }
    worst
}

/// Points in `bounds` (widened by 10 % per side) where classification by
/// facets disagrees with the sign of a forward pass computed as a dense
/// matrix product, ignoring points with |max(Wx + b)| ≤ 1e-9.
pub fn facet_forward_disagreements(model: &PolytopeModel, bounds: &[(f64, f64)], n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.dim();
    let w = DMatrix::from_row_iterator(model.n_h(), d, model.w.iter().flatten().copied());
    let b = nalgebra::DVector::from_column_slice(&model.b);
    let mut disagree = 0;
    for _ in 0..n {
        let x: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| {
                let pad = 0.1 * (hi - lo);
                rng.gen_range(lo - pad..=hi + pad)
            })
            .collect();
        let o = &w * nalgebra::DVector::from_column_slice(&x) + &b;
        let f = o.max();
        if f.abs() <= 1e-9 {
            continue;
        }
        let y = 1.0 / (1.0 + (-f).exp());
        let nn = if y > 0.5 { Label::Infeasible } else { Label::Feasible };
        if classify(model, &x, 0.0) != nn {
            disagree += 1;
        }
    }
    disagree
}

/// Whether an LHS design of `n` points in `d` unit dimensions has exactly
/// one point per stratum in every marginal.
pub fn lhs_exactly_stratified(n: usize, d: usize, seed: u64) -> bool {
    let bounds: Vec<(f64, f64)> = (0..d).map(|k| (-(k as f64), 1.0 + k as f64 * 2.0)).collect();
    let pts = lhs(n, &bounds, seed).unwrap();
    (0..d).all(|k| {
        let (lo, hi) = bounds[k];
        let mut hits = vec![0usize; n];
        for p in &pts {
            let s = ((p[k] - lo) / (hi - lo) * n as f64).floor();
            if !(0.0..n as f64).contains(&s) {
                return false;
            }
            hits[s as usize] += 1;
        }
        hits.iter().all(|&h| h == 1)
    })
}
