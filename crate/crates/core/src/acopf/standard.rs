use super::nlp::{Block, FlowBranch, FlowLimits, LinearRows, NlpProblem, Objective, PowerBalance};
use super::{DsSlot, GenSlot, OpfLayout};
use crate::error::{Error, Result};
use crate::netmodel::{BranchAdmittance, CostPoly, DsId, NetworkCase, PQChart};

/// Objective multiplier used for all OPF problems; keeps the scaled
/// gradient of $/h-sized costs near unity.
pub const OPF_COST_SCALE: f64 = 1e-4;

/// A dispatchable injection at one bus. Limits in MW/MVAr.
#[derive(Clone, Debug)]
pub(crate) struct GenSpec {
    pub id: u32,
    pub bus: usize,
    pub ds: Option<DsId>,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: CostPoly,
}

fn finite(value: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::MissingLimit(what()))
    }
}

/// Network part shared by the standard and privacy-preserving problems:
/// angles, magnitudes and the given injections, nodal balances, branch
/// limits, angle reference, and quadratic generation costs.
pub(crate) fn assemble_network(case: &NetworkCase, gens: &[GenSpec]) -> Result<NlpProblem> {
    let nb = case.n_buses();
    let ng = gens.len();
    let base = case.base_mva;

    let mut x0 = Vec::with_capacity(2 * nb + 2 * ng);
    let mut lower = Vec::with_capacity(x0.capacity());
    let mut upper = Vec::with_capacity(x0.capacity());
    for bus in &case.buses {
        x0.push(0.0);
        lower.push(finite(bus.theta_min, || format!("angle lower bound of bus {}", bus.id))?);
        upper.push(finite(bus.theta_max, || format!("angle upper bound of bus {}", bus.id))?);
    }
    for bus in &case.buses {
        let lo = finite(bus.v_min, || format!("voltage lower bound of bus {}", bus.id))?;
        let hi = finite(bus.v_max, || format!("voltage upper bound of bus {}", bus.id))?;
        x0.push(1.0f64.clamp(lo, hi));
        lower.push(lo);
        upper.push(hi);
    }
    let mut p_inj = vec![Vec::new(); nb];
    let mut q_inj = vec![Vec::new(); nb];
    let p_off = 2 * nb;
    let q_off = 2 * nb + ng;
    let mut slots = Vec::with_capacity(ng);
    for (k, g) in gens.iter().enumerate() {
        let p_lo = finite(g.p_min, || format!("p_min of generator {}", g.id))? / base;
        let p_hi = finite(g.p_max, || format!("p_max of generator {}", g.id))? / base;
        x0.push(0.5 * (p_lo + p_hi));
        lower.push(p_lo);
        upper.push(p_hi);
        p_inj[g.bus].push(p_off + k);
        q_inj[g.bus].push(q_off + k);
        slots.push(GenSlot { id: g.id, bus: g.bus, ds: g.ds, p_var: p_off + k, q_var: q_off + k });
    }
    for g in gens {
        let q_lo = finite(g.q_min, || format!("q_min of generator {}", g.id))? / base;
        let q_hi = finite(g.q_max, || format!("q_max of generator {}", g.id))? / base;
        x0.push(0.5 * (q_lo + q_hi));
        lower.push(q_lo);
        upper.push(q_hi);
    }

    let objective = Objective {
        terms: gens
            .iter()
            .enumerate()
            .map(|(k, g)| (p_off + k, g.cost.a * base * base, g.cost.b * base))
            .collect(),
        constant: gens.iter().map(|g| g.cost.c).sum(),
    };
    let mut problem = NlpProblem::new(x0, objective);
    problem.lower = lower;
    problem.upper = upper;
    problem.cost_scale = OPF_COST_SCALE;

    let y = case.admittance();
    problem.equalities.push(Block::Balance(PowerBalance {
        theta_off: 0,
        v_off: nb,
        y_rows: (0..nb).map(|i| y.row(i).to_vec()).collect(),
        p_inj,
        q_inj,
        p_d: case.buses.iter().map(|b| b.p_d / base).collect(),
        q_d: case.buses.iter().map(|b| b.q_d / base).collect(),
    }));

    let mut reference = LinearRows::default();
    let slacks = case.slack_indices();
    for &i in if slacks.is_empty() { &[0usize][..] } else { &slacks[..] } {
        reference.push(vec![(i, 1.0)], 0.0);
    }
    problem.equalities.push(Block::Linear(reference));

    let mut limited = Vec::new();
    for br in case.branches.iter().filter(|b| b.closed && b.has_limit()) {
        let y = BranchAdmittance::of(br)?;
        let s = br.s_max / base;
        limited.push(FlowBranch {
            f: case.index_of(br.from)?,
            t: case.index_of(br.to)?,
            yff: y.ff,
            yft: y.ft,
            ytf: y.tf,
            ytt: y.tt,
            s2_max: s * s,
        });
    }
    if !limited.is_empty() {
        problem.inequalities.push(Block::FlowLimits(FlowLimits { theta_off: 0, v_off: nb, branches: limited }));
    }

    problem.layout = OpfLayout {
        base_mva: base,
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
        theta_off: 0,
        v_off: nb,
        gens: slots,
        ds: Vec::new(),
    };
    Ok(problem)
}

/// Standard integrated AC-OPF over every bus and generator (DGs included).
pub fn assemble_standard(case: &NetworkCase) -> Result<NlpProblem> {
    let gens: Vec<GenSpec> = case
        .generators
        .iter()
        .map(|g| {
            Ok(GenSpec {
                id: g.id,
                bus: case.index_of(g.bus)?,
                ds: g.ds,
                p_min: g.p_min,
                p_max: g.p_max,
                q_min: g.q_min,
                q_max: g.q_max,
                cost: g.cost,
            })
        })
        .collect::<Result<_>>()?;
    let mut problem = assemble_network(case, &gens)?;
    let nb = case.n_buses();
    for ds in case.ds_ids() {
        let dgs = case.dgs_of(ds);
        let v_vars = match case.pcc_map.get(&ds) {
            Some(buses) => buses.iter().map(|b| case.index_of(*b).map(|i| nb + i)).collect::<Result<_>>()?,
            None => Vec::new(),
        };
        problem.layout.ds.push(DsSlot {
            ds,
            v_vars,
            p_vars: dgs.iter().map(|&g| problem.layout.gens[g].p_var).collect(),
            q_vars: dgs.iter().map(|&g| problem.layout.gens[g].q_var).collect(),
        });
    }
    Ok(problem)
}

/// Adds `A_PQ [p; q] ≤ b_PQ` for each `(generator position, chart)` pair.
pub fn assemble_polygon_extension(problem: &NlpProblem, charts: &[(usize, PQChart)]) -> Result<NlpProblem> {
    let mut out = problem.clone();
    if charts.is_empty() {
        return Ok(out);
    }
    let base = problem.layout.base_mva;
    let mut rows = LinearRows::default();
    let mut seen = std::collections::HashSet::new();
    for (g, chart) in charts {
        let slot = problem
            .layout
            .gens
            .get(*g)
            .filter(|s| s.ds.is_some())
            .ok_or_else(|| Error::Dimension(format!("chart refers to position {g}, which is not a DG")))?;
        if !seen.insert(*g) {
            return Err(Error::Dimension(format!("two charts for generator position {g}")));
        }
        for (a, b) in chart.a_pq.iter().zip(&chart.b_pq) {
            rows.push(vec![(slot.p_var, a[0]), (slot.q_var, a[1])], b / base);
        }
    }
    out.inequalities.push(Block::Linear(rows));
    Ok(out)
}

/// Explicit (non-rectangular) charts of a case keyed by generator position.
pub fn case_charts(case: &NetworkCase) -> Vec<(usize, PQChart)> {
    case.generators
        .iter()
        .enumerate()
        .filter_map(|(k, g)| case.charts.get(&g.id).map(|c| (k, c.clone())))
        .collect()
}

/// Standard OPF with the explicit DG charts of the case enforced.
pub fn assemble_standard_with_charts(case: &NetworkCase) -> Result<NlpProblem> {
    assemble_polygon_extension(&assemble_standard(case)?, &case_charts(case))
}
