//! AC optimal power flow: a generic interior-point NLP engine, assembly of
//! the standard integrated OPF and its PQ-chart extension, and KKT
//! diagnostics.

mod mips;
pub mod nlp;
mod standard;
mod terms;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{BusId, CostPoly, DsId};
use crate::powerflow::DsVector;

pub use mips::{solve_nlp, BoundRows, Conditions, NlpResult, SolveStatus, SolverOptions};
pub use nlp::NlpProblem;
pub use standard::{
    assemble_polygon_extension, assemble_standard, assemble_standard_with_charts, case_charts, OPF_COST_SCALE,
};
pub(crate) use standard::{assemble_network, GenSpec};

/// Position of one injection's variables.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSlot {
    pub id: u32,
    /// Local bus index.
    pub bus: usize,
    pub ds: Option<DsId>,
    pub p_var: usize,
    pub q_var: usize,
}

/// Variables that make up one DS operating vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DsSlot {
    pub ds: DsId,
    pub v_vars: Vec<usize>,
    pub p_vars: Vec<usize>,
    pub q_vars: Vec<usize>,
}

/// Maps NLP variables (per unit) to network quantities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OpfLayout {
    pub base_mva: f64,
    pub bus_ids: Vec<BusId>,
    pub theta_off: usize,
    pub v_off: usize,
    pub gens: Vec<GenSlot>,
    pub ds: Vec<DsSlot>,
}

impl OpfLayout {
    /// Writes solution quantities back into a variable vector.
    pub fn pack(&self, sol: &OpfSolution, x: &mut [f64]) -> Result<()> {
        let nb = self.bus_ids.len();
        if sol.v.len() != nb || sol.p_g.len() != self.gens.len() || sol.x_ds.len() != self.ds.len() {
            return Err(Error::Dimension("solution does not match problem layout".into()));
        }
        for i in 0..nb {
            x[self.theta_off + i] = sol.theta[i];
            x[self.v_off + i] = sol.v[i];
        }
        for (k, g) in self.gens.iter().enumerate() {
            x[g.p_var] = sol.p_g[k] / self.base_mva;
            x[g.q_var] = sol.q_g[k] / self.base_mva;
        }
        for (slot, (_, xd)) in self.ds.iter().zip(&sol.x_ds) {
            for (var, v) in slot.v_vars.iter().zip(&xd.v_pcc) {
                x[*var] = *v;
            }
            for (var, p) in slot.p_vars.iter().zip(&xd.p_dg) {
                x[*var] = p / self.base_mva;
            }
            for (var, q) in slot.q_vars.iter().zip(&xd.q_dg) {
                x[*var] = q / self.base_mva;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpfSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Injections in layout order, MW.
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    pub x_ds: Vec<(DsId, DsVector)>,
    /// $/h.
    pub objective: f64,
    pub status: SolveStatus,
    pub solve_time: f64,
    /// Largest equality residual or inequality excess at the returned point.
    pub constraint_violation: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub lambda: Vec<f64>,
    #[serde(skip)]
    pub mu: Vec<f64>,
}

/// Solves an OPF-shaped problem and maps the result back to the network.
pub fn solve_opf(problem: &NlpProblem, opts: &SolverOptions) -> OpfSolution {
    let res = solve_nlp(problem, opts);
    extract_solution(problem, &res)
}

pub(crate) fn extract_solution(problem: &NlpProblem, res: &NlpResult) -> OpfSolution {
    let l = &problem.layout;
    let nb = l.bus_ids.len();
    let base = l.base_mva;
    let x = &res.x;
    let bounds = BoundRows::of(problem);
    let pt = mips::evaluate_point(problem, &bounds, x);
    let violation = pt.g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(pt.h.iter().fold(0.0f64, |m, &v| m.max(v)));
    OpfSolution {
        v: (0..nb).map(|i| x[l.v_off + i]).collect(),
        theta: (0..nb).map(|i| x[l.theta_off + i]).collect(),
        p_g: l.gens.iter().map(|g| x[g.p_var] * base).collect(),
        q_g: l.gens.iter().map(|g| x[g.q_var] * base).collect(),
        x_ds: l
            .ds
            .iter()
            .map(|s| {
                (
                    s.ds,
                    DsVector {
                        v_pcc: s.v_vars.iter().map(|&k| x[k]).collect(),
                        p_dg: s.p_vars.iter().map(|&k| x[k] * base).collect(),
                        q_dg: s.q_vars.iter().map(|&k| x[k] * base).collect(),
                    },
                )
            })
            .collect(),
        objective: res.objective,
        status: res.status,
        solve_time: res.solve_time,
        constraint_violation: violation,
        iterations: res.iterations,
        lambda: res.lambda.clone(),
        mu: res.mu.clone(),
    }
}

/// `Σ a p² + b p + c` over generators, p in MW.
pub fn evaluate_cost(p: &[f64], costs: &[CostPoly]) -> Result<f64> {
    if p.len() != costs.len() {
        return Err(Error::Dimension(format!("{} outputs for {} cost functions", p.len(), costs.len())));
    }
    Ok(p.iter().zip(costs).map(|(&p, c)| c.eval(p)).sum())
}

/// First-order optimality residuals, scaled exactly like the solver's
/// termination tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    /// All inequality multipliers are non-negative.
    pub multipliers_nonnegative: bool,
}

/// Evaluates the KKT conditions at the point described by `solution`
/// using its multipliers.
pub fn kkt_report(solution: &OpfSolution, problem: &NlpProblem) -> Result<KktReport> {
    let mut x = problem.x0.clone();
    problem.layout.pack(solution, &mut x)?;
    let bounds = BoundRows::of(problem);
    let pt = mips::evaluate_point(problem, &bounds, &x);
    if solution.lambda.len() != pt.g.len() || solution.mu.len() != pt.h.len() {
        return Err(Error::Dimension("multipliers do not match problem".into()));
    }
    let slack: Vec<f64> = pt.h.iter().map(|h| (-h).max(0.0)).collect();
    let c = mips::conditions(&pt, &x, &solution.lambda, &solution.mu, &slack, pt.f);
    let x_norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let complementarity =
        solution.mu.iter().zip(&pt.h).map(|(m, h)| (m * h).abs()).sum::<f64>() / (1.0 + x_norm);
    Ok(KktReport {
        stationarity: c.grad,
        primal: c.feas,
        complementarity,
        multipliers_nonnegative: solution.mu.iter().all(|&m| m >= 0.0),
    })
}
