//! Smooth nonlinear program with a separable quadratic objective and
//! constraint blocks that supply analytic first and second derivatives.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::terms::{branch_end, mutual_term, p_coeffs, q_coeffs, self_term, Grad4, Hess4};
use super::OpfLayout;

/// `Σ a_i x_i² + b_i x_i + c`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Objective {
    pub terms: Vec<(usize, f64, f64)>,
    pub constant: f64,
}

impl Objective {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a, b)| (a * x[i] + b) * x[i]).sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(i, a, b) in &self.terms {
            out[i] += 2.0 * a * x[i] + b;
        }
    }

    pub fn add_hessian(&self, scale: f64, hess: &mut DMatrix<f64>) {
        for &(i, a, _) in &self.terms {
            hess[(i, i)] += 2.0 * a * scale;
        }
    }
}

/// Nodal balance `P_i(θ, v) - Σ p_g + p_d = 0` for every bus, followed by the
/// reactive rows in the same bus order.
#[derive(Clone, Debug)]
pub struct PowerBalance {
    pub theta_off: usize,
    pub v_off: usize,
    /// Admittance rows in local bus indices.
    pub y_rows: Vec<Vec<(usize, Complex64)>>,
    /// Per bus, variable indices of active injections entering the bus.
    pub p_inj: Vec<Vec<usize>>,
    pub q_inj: Vec<Vec<usize>>,
    /// Per-unit demand.
    pub p_d: Vec<f64>,
    pub q_d: Vec<f64>,
}

/// One branch in local bus indices with per-unit π-model admittances.
#[derive(Clone, Debug)]
pub struct FlowBranch {
    pub f: usize,
    pub t: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
    /// Squared apparent power limit, p.u.².
    pub s2_max: f64,
}

/// `|S_from|² - s_max² ≤ 0` and `|S_to|² - s_max² ≤ 0` per branch.
#[derive(Clone, Debug)]
pub struct FlowLimits {
    pub theta_off: usize,
    pub v_off: usize,
    pub branches: Vec<FlowBranch>,
}

/// Sparse affine rows `a·x - rhs`.
#[derive(Clone, Debug, Default)]
pub struct LinearRows {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl LinearRows {
    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }
}

/// `zᵀ A z + bᵀ z + c + Σ l_k x_k` with `z = x[vars]`.
#[derive(Clone, Debug)]
pub struct QuadraticRow {
    pub vars: Vec<usize>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: f64,
    pub linear: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub enum Block {
    Balance(PowerBalance),
    FlowLimits(FlowLimits),
    Linear(LinearRows),
    Quadratic(Vec<QuadraticRow>),
}

impl Block {
    pub fn len(&self) -> usize {
        match self {
            Block::Balance(b) => 2 * b.y_rows.len(),
            Block::FlowLimits(f) => 2 * f.branches.len(),
            Block::Linear(l) => l.rows.len(),
            Block::Quadratic(q) => q.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes values into `out[..len]`, first derivatives through `jac`
    /// (row, column, value) and, when `lambda` is given, adds
    /// `Σ λ_r ∇² c_r` through `hess` (both triangles).
    pub fn evaluate(
        &self,
        x: &[f64],
        out: &mut [f64],
        jac: &mut dyn FnMut(usize, usize, f64),
        lambda: Option<(&[f64], &mut dyn FnMut(usize, usize, f64))>,
    ) {
        match self {
            Block::Balance(b) => eval_balance(b, x, out, jac, lambda),
            Block::FlowLimits(f) => eval_flows(f, x, out, jac, lambda),
            Block::Linear(l) => {
                for (r, (row, rhs)) in l.rows.iter().zip(&l.rhs).enumerate() {
                    out[r] = row.iter().map(|&(k, a)| a * x[k]).sum::<f64>() - rhs;
                    for &(k, a) in row {
                        jac(r, k, a);
                    }
                }
            }
            Block::Quadratic(rows) => {
                let mut lambda = lambda;
                for (r, q) in rows.iter().enumerate() {
                    let z: Vec<f64> = q.vars.iter().map(|&k| x[k]).collect();
                    let mut val = q.c;
                    for (i, zi) in z.iter().enumerate() {
                        let az: f64 = q.a[i].iter().zip(&z).map(|(a, zj)| a * zj).sum();
                        val += zi * az + q.b[i] * zi;
                        jac(r, q.vars[i], 2.0 * az + q.b[i]);
                    }
                    for &(k, l) in &q.linear {
                        val += l * x[k];
                        jac(r, k, l);
                    }
                    out[r] = val;
                    if let Some((lam, hess)) = lambda.as_mut() {
                        let w = lam[r];
                        if w != 0.0 {
                            for (i, &vi) in q.vars.iter().enumerate() {
                                for (j, &vj) in q.vars.iter().enumerate() {
                                    hess(vi, vj, 2.0 * w * q.a[i][j]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn local_vars(theta_off: usize, v_off: usize, i: usize, k: usize) -> [usize; 4] {
    [theta_off + i, theta_off + k, v_off + i, v_off + k]
}

fn push_grad(row: usize, vars: &[usize; 4], g: &Grad4, scale: f64, jac: &mut dyn FnMut(usize, usize, f64)) {
    for (v, d) in vars.iter().zip(g) {
        jac(row, *v, scale * d);
    }
}

fn push_hess(vars: &[usize; 4], h: &Hess4, w: f64, hess: &mut dyn FnMut(usize, usize, f64)) {
    for r in 0..4 {
        for c in 0..4 {
            if h[r][c] != 0.0 {
                hess(vars[r], vars[c], w * h[r][c]);
            }
        }
    }
}

fn eval_balance(
    b: &PowerBalance,
    x: &[f64],
    out: &mut [f64],
    jac: &mut dyn FnMut(usize, usize, f64),
    mut lambda: Option<(&[f64], &mut dyn FnMut(usize, usize, f64))>,
) {
    let n = b.y_rows.len();
    let th = |i: usize| x[b.theta_off + i];
    let vm = |i: usize| x[b.v_off + i];
    for i in 0..n {
        let (rp, rq) = (i, n + i);
        let mut p = b.p_d[i];
        let mut q = b.q_d[i];
        for &(k, y) in &b.y_rows[i] {
            if k == i {
                let vi = vm(i);
                let (pv, pg, ph) = self_term(y.re, vi);
                let (qv, qg, qh) = self_term(-y.im, vi);
                p += pv;
                q += qv;
                jac(rp, b.v_off + i, pg);
                jac(rq, b.v_off + i, qg);
                if let Some((lam, hess)) = lambda.as_mut() {
                    hess(b.v_off + i, b.v_off + i, lam[rp] * ph + lam[rq] * qh);
                }
                continue;
            }
            let vars = local_vars(b.theta_off, b.v_off, i, k);
            let dth = th(i) - th(k);
            let (pa, pb) = p_coeffs(y);
            let (qa, qb) = q_coeffs(y);
            let (pv, pg, ph) = mutual_term(pa, pb, vm(i), vm(k), dth);
            let (qv, qg, qh) = mutual_term(qa, qb, vm(i), vm(k), dth);
            p += pv;
            q += qv;
            push_grad(rp, &vars, &pg, 1.0, jac);
            push_grad(rq, &vars, &qg, 1.0, jac);
            if let Some((lam, hess)) = lambda.as_mut() {
                push_hess(&vars, &ph, lam[rp], *hess);
                push_hess(&vars, &qh, lam[rq], *hess);
            }
        }
        for &g in &b.p_inj[i] {
            p -= x[g];
            jac(rp, g, -1.0);
        }
        for &g in &b.q_inj[i] {
            q -= x[g];
            jac(rq, g, -1.0);
        }
        out[rp] = p;
        out[rq] = q;
    }
}

fn eval_flows(
    f: &FlowLimits,
    x: &[f64],
    out: &mut [f64],
    jac: &mut dyn FnMut(usize, usize, f64),
    mut lambda: Option<(&[f64], &mut dyn FnMut(usize, usize, f64))>,
) {
    let nb = f.branches.len();
    for (k, br) in f.branches.iter().enumerate() {
        let ends = [(k, br.f, br.t, br.yff, br.yft), (nb + k, br.t, br.f, br.ytt, br.ytf)];
        for (row, i, j, y_self, y_mut) in ends {
            let vars = local_vars(f.theta_off, f.v_off, i, j);
            let (vi, vj) = (x[f.v_off + i], x[f.v_off + j]);
            let dth = x[f.theta_off + i] - x[f.theta_off + j];
            let (pa, pb) = p_coeffs(y_mut);
            let (qa, qb) = q_coeffs(y_mut);
            let (p, pg, ph) = branch_end(y_self.re, pa, pb, vi, vj, dth);
            let (q, qg, qh) = branch_end(-y_self.im, qa, qb, vi, vj, dth);
            out[row] = p * p + q * q - br.s2_max;
            let mut g = [0.0; 4];
            for c in 0..4 {
                g[c] = 2.0 * (p * pg[c] + q * qg[c]);
            }
            push_grad(row, &vars, &g, 1.0, jac);
            if let Some((lam, hess)) = lambda.as_mut() {
                let w = lam[row];
                if w != 0.0 {
                    let mut h = [[0.0; 4]; 4];
                    for r in 0..4 {
                        for c in 0..4 {
                            h[r][c] = 2.0 * (pg[r] * pg[c] + p * ph[r][c] + qg[r] * qg[c] + q * qh[r][c]);
                        }
                    }
                    push_hess(&vars, &h, w, *hess);
                }
            }
        }
    }
}

/// A nonlinear program `min f(x)` s.t. `g(x) = 0`, `h(x) ≤ 0`, `lo ≤ x ≤ hi`.
#[derive(Clone, Debug)]
pub struct NlpProblem {
    pub n: usize,
    pub x0: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Objective,
    /// Multiplier applied to the objective inside the solver so that
    /// stationarity tolerances are meaningful for $/h-sized costs.
    pub cost_scale: f64,
    pub equalities: Vec<Block>,
    pub inequalities: Vec<Block>,
    /// Maps variables back to network quantities; empty for plain NLPs.
    pub layout: OpfLayout,
}

/// Values and sparse Jacobian rows of one family of constraints. Rows may
/// repeat a column; entries then add up.
pub struct ConstraintEval {
    pub values: Vec<f64>,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl ConstraintEval {
    pub fn dense_jacobian(&self, n: usize) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.rows.len(), n);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                j[(r, c)] += v;
            }
        }
        j
    }
}

impl NlpProblem {
    /// A problem over `n` free variables starting at `x0` with no constraints.
    pub fn new(x0: Vec<f64>, objective: Objective) -> Self {
        let n = x0.len();
        NlpProblem {
            n,
            x0,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            objective,
            cost_scale: 1.0,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            layout: OpfLayout::default(),
        }
    }

    /// Appends variables and returns the index of the first.
    pub fn add_variables(&mut self, x0: &[f64], lower: &[f64], upper: &[f64]) -> usize {
        let first = self.n;
        self.x0.extend_from_slice(x0);
        self.lower.extend_from_slice(lower);
        self.upper.extend_from_slice(upper);
        self.n += x0.len();
        first
    }

    pub fn n_eq(&self) -> usize {
        self.equalities.iter().map(Block::len).sum()
    }

    pub fn n_ineq(&self) -> usize {
        self.inequalities.iter().map(Block::len).sum()
    }

    fn eval_family(blocks: &[Block], x: &[f64], want_jac: bool) -> ConstraintEval {
        let m: usize = blocks.iter().map(Block::len).sum();
        let mut values = vec![0.0; m];
        let mut rows = vec![Vec::new(); if want_jac { m } else { 0 }];
        let mut off = 0;
        for b in blocks {
            let len = b.len();
            let mut push = |r: usize, c: usize, v: f64| {
                if want_jac {
                    rows[off + r].push((c, v));
                }
            };
            b.evaluate(x, &mut values[off..off + len], &mut push, None);
            off += len;
        }
        ConstraintEval { values, rows }
    }

    pub fn equality_values(&self, x: &[f64]) -> Vec<f64> {
        Self::eval_family(&self.equalities, x, false).values
    }

    pub fn inequality_values(&self, x: &[f64]) -> Vec<f64> {
        Self::eval_family(&self.inequalities, x, false).values
    }

    pub fn equalities_at(&self, x: &[f64]) -> ConstraintEval {
        Self::eval_family(&self.equalities, x, true)
    }

    pub fn inequalities_at(&self, x: &[f64]) -> ConstraintEval {
        Self::eval_family(&self.inequalities, x, true)
    }

    /// `obj_scale ∇²f + Σ λ_i ∇²g_i + Σ μ_j ∇²h_j`.
    pub fn lagrangian_hessian(&self, x: &[f64], obj_scale: f64, lambda: &[f64], mu: &[f64]) -> DMatrix<f64> {
        let mut hess = DMatrix::zeros(self.n, self.n);
        self.objective.add_hessian(obj_scale, &mut hess);
        for (blocks, mult) in [(&self.equalities, lambda), (&self.inequalities, mu)] {
            let mut off = 0;
            for b in blocks.iter() {
                let len = b.len();
                let mut scratch = vec![0.0; len];
                let mut push_h = |i: usize, j: usize, v: f64| hess[(i, j)] += v;
                b.evaluate(x, &mut scratch, &mut |_, _, _| {}, Some((&mult[off..off + len], &mut push_h)));
                off += len;
            }
        }
        hess
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_row_derivatives() {
        let row = QuadraticRow {
            vars: vec![0, 2],
            a: vec![vec![1.0, 0.5], vec![0.5, -2.0]],
            b: vec![0.3, -1.0],
            c: 0.7,
            linear: vec![(1, 1.0)],
        };
        let mut p = NlpProblem::new(vec![0.0; 3], Objective::default());
        p.equalities.push(Block::Quadratic(vec![row]));
        let x = [0.4, -0.3, 1.2];
        let e = p.equalities_at(&x);
        let jac = e.dense_jacobian(3);
        let expected = 0.4 * 0.4 + 2.0 * 0.5 * 0.4 * 1.2 - 2.0 * 1.44 + 0.3 * 0.4 - 1.2 + 0.7 - 0.3;
        assert!((e.values[0] - expected).abs() < 1e-14);
        assert!((jac[(0, 0)] - (2.0 * 0.4 + 1.2 + 0.3)).abs() < 1e-14);
        assert_eq!(jac[(0, 1)], 1.0);
        let h = p.lagrangian_hessian(&x, 1.0, &[2.0], &[]);
        assert_eq!(h[(0, 0)], 4.0);
        assert_eq!(h[(0, 2)], 2.0);
        assert_eq!(h[(2, 2)], -8.0);
    }
}
