//! Privacy-preserving OPF: the transmission network plus, per distribution
//! system, the operating vector constrained by the shared polytope and tied
//! to the PCC injections through the shared quadratic regressors.
//!
//! Assembly reads only the TS case and the [`SurrogateBundle`]s. The
//! integrated case enters only in [`verify_dispatch`], which plays the role
//! of ground truth.

use crate::acopf::nlp::{Block, LinearRows, NlpProblem, QuadraticRow};
use crate::acopf::{
    assemble_network, assemble_polygon_extension, assemble_standard, case_charts, extract_solution, solve_nlp, DsSlot,
    GenSpec, OpfSolution, SolverOptions,
};
use crate::error::{Error, Result};
use crate::netmodel::{BusKind, CostPoly, DsId, NetworkCase};
use crate::sampling::Label;
use crate::surrogate::{classify, SurrogateBundle};

mod verify;

pub use verify::{ds_to_ts_flows, verify_dispatch, zone_reports, VerificationReport, ZoneReport};

/// Generator ids given to the PCC injections; they never collide with ids
/// from a case file below this value.
pub const PCC_GEN_ID_BASE: u32 = 1_000_000;

/// A PCC injection of the TS model.
#[derive(Clone, Debug, PartialEq)]
pub struct PccInjection {
    pub ds: DsId,
    /// PCC order within the DS (0-based).
    pub order: usize,
    /// Position among the problem's injections (`layout.gens`).
    pub gen: usize,
}

#[derive(Clone, Debug)]
pub struct PpProblem {
    pub ts_case: NetworkCase,
    pub bundles: Vec<SurrogateBundle>,
    pub charts_enforced: bool,
    pub pcc: Vec<PccInjection>,
    pub nlp: NlpProblem,
}

impl PpProblem {
    /// Facet rows contributed by the bundles.
    pub fn n_facets(&self) -> usize {
        self.bundles.iter().map(|b| b.fr.n_h()).sum()
    }
}

/// Half-width of the PCC injection box, MW: the DG capacity plus 150 % of
/// the regressed exchange at the box center, plus 1 MW. The bundle carries
/// no loads, so the regressor stands in for the DS load.
fn pcc_half_width(bundle: &SurrogateBundle, u: usize) -> f64 {
    let center: Vec<f64> = bundle.x_min.iter().zip(&bundle.x_max).map(|(a, b)| 0.5 * (a + b)).collect();
    let cap: f64 = bundle.charts.iter().map(|c| c.bbox.1.abs().max(c.bbox.0.abs()) + c.bbox.3.abs().max(c.bbox.2.abs())).sum();
    let m = &bundle.pcc[u];
    let exchange = (m.p.predict(&center).abs() + m.q.predict(&center).abs()) * bundle.base_mva;
    cap + 1.5 * exchange + 1.0
}

/// Builds the privacy-preserving OPF from the TS case and one bundle per
/// DS named in the TS `pcc_map`.
pub fn assemble_pp(ts_case: &NetworkCase, bundles: &[SurrogateBundle], charts_enforced: bool) -> Result<PpProblem> {
    if ts_case.generators.iter().any(|g| g.is_dg()) {
        return Err(Error::InvalidCase("TS case for the PP-OPF must not contain DGs".into()));
    }
    if bundles.len() != ts_case.pcc_map.len() {
        return Err(Error::Dimension(format!("{} bundles for {} distribution systems", bundles.len(), ts_case.pcc_map.len())));
    }
    let base = ts_case.base_mva;
    let mut gens: Vec<GenSpec> = Vec::new();
    for g in &ts_case.generators {
        gens.push(GenSpec {
            id: g.id,
            bus: ts_case.index_of(g.bus)?,
            ds: None,
            p_min: g.p_min,
            p_max: g.p_max,
            q_min: g.q_min,
            q_max: g.q_max,
            cost: g.cost,
        });
    }
    let mut pcc = Vec::new();
    let mut ordered: Vec<&SurrogateBundle> = Vec::new();
    for (ds, buses) in &ts_case.pcc_map {
        let bundle = bundles
            .iter()
            .find(|b| b.ds == *ds)
            .ok_or_else(|| Error::Dimension(format!("no bundle for DS {}", ds.0)))?;
        bundle.validate()?;
        if bundle.n_pcc != buses.len() {
            return Err(Error::Dimension(format!(
                "bundle for DS {} declares {} PCCs, TS case has {}",
                ds.0,
                bundle.n_pcc,
                buses.len()
            )));
        }
        for (u, bus) in buses.iter().enumerate() {
            let idx = ts_case.index_of(*bus)?;
            let b = &ts_case.buses[idx];
            if b.p_d != 0.0 || b.q_d != 0.0 || ts_case.generators.iter().any(|g| g.bus == *bus) {
                return Err(Error::PccBus { bus: bus.0, reason: "PCC bus of the TS model must be empty".into() });
            }
            let w = pcc_half_width(bundle, u);
            pcc.push(PccInjection { ds: *ds, order: u, gen: gens.len() });
            gens.push(GenSpec {
                id: PCC_GEN_ID_BASE + ds.0 * 100 + u as u32,
                bus: idx,
                ds: None,
                p_min: -w,
                p_max: w,
                q_min: -w,
                q_max: w,
                cost: CostPoly::default(),
            });
        }
        ordered.push(bundle);
    }
    let mut nlp = assemble_network(ts_case, &gens)?;

    let mut links = LinearRows::default();
    let mut couplings = Vec::new();
    let mut facets = LinearRows::default();
    let mut charts = LinearRows::default();
    for bundle in &ordered {
        let (n_pcc, n_dg) = (bundle.n_pcc, bundle.n_dg);
        let d = bundle.dim();
        // Variable k of x in NLP units is x_raw[k] / scale[k].
        let scale: Vec<f64> = (0..d).map(|k| if k < n_pcc { 1.0 } else { base }).collect();
        let lo: Vec<f64> = bundle.x_min.iter().zip(&scale).map(|(v, s)| v / s).collect();
        let hi: Vec<f64> = bundle.x_max.iter().zip(&scale).map(|(v, s)| v / s).collect();
        let x0: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let first = nlp.add_variables(&x0, &lo, &hi);
        let vars: Vec<usize> = (first..first + d).collect();

        let buses = &ts_case.pcc_map[&bundle.ds];
        for (u, bus) in buses.iter().enumerate() {
            let v_bus = nlp.layout.v_off + ts_case.index_of(*bus)?;
            links.push(vec![(vars[u], 1.0), (v_bus, -1.0)], 0.0);
        }

        // P_u(S z) · base_b / base + p̌ = 0 with z the NLP variables.
        let kappa = bundle.base_mva / base;
        for inj in pcc.iter().filter(|p| p.ds == bundle.ds) {
            let m = &bundle.pcc[inj.order];
            let slot = &nlp.layout.gens[inj.gen];
            for (model, var) in [(&m.p, slot.p_var), (&m.q, slot.q_var)] {
                couplings.push(QuadraticRow {
                    vars: vars.clone(),
                    a: (0..d).map(|i| (0..d).map(|j| kappa * scale[i] * model.a[i][j] * scale[j]).collect()).collect(),
                    b: (0..d).map(|i| kappa * scale[i] * model.b[i]).collect(),
                    c: kappa * model.c,
                    linear: vec![(var, 1.0)],
                });
            }
        }

        for (row, b) in bundle.fr.w.iter().zip(bundle.fr.b_fr()) {
            let scaled: Vec<f64> = row.iter().zip(&scale).map(|(a, s)| a * s).collect();
            let norm = scaled.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                if b < 0.0 {
                    return Err(Error::Invalid(format!("DS {} polytope has an empty facet row", bundle.ds.0)));
                }
                continue;
            }
            facets.push(vars.iter().zip(&scaled).map(|(&v, a)| (v, a / norm)).collect(), b / norm);
        }

        if charts_enforced {
            for (k, chart) in bundle.charts.iter().enumerate() {
                let (pv, qv) = (vars[n_pcc + k], vars[n_pcc + n_dg + k]);
                for (a, b) in chart.a_pq.iter().zip(&chart.b_pq) {
                    charts.push(vec![(pv, a[0]), (qv, a[1])], b / base);
                }
            }
        }

        for (k, cost) in bundle.costs.iter().enumerate() {
            nlp.objective.terms.push((vars[n_pcc + k], cost.a * base * base, cost.b * base));
            nlp.objective.constant += cost.c;
        }
        nlp.layout.ds.push(DsSlot {
            ds: bundle.ds,
            v_vars: vars[..n_pcc].to_vec(),
            p_vars: vars[n_pcc..n_pcc + n_dg].to_vec(),
            q_vars: vars[n_pcc + n_dg..].to_vec(),
        });
    }
    if !links.rows.is_empty() {
        nlp.equalities.push(Block::Linear(links));
    }
    if !couplings.is_empty() {
        nlp.equalities.push(Block::Quadratic(couplings));
    }
    if !facets.rows.is_empty() {
        nlp.inequalities.push(Block::Linear(facets));
    }
    if !charts.rows.is_empty() {
        nlp.inequalities.push(Block::Linear(charts));
    }
    Ok(PpProblem {
        ts_case: ts_case.clone(),
        bundles: ordered.into_iter().cloned().collect(),
        charts_enforced,
        pcc,
        nlp,
    })
}

/// Solves the PP-OPF. DG set-points are read directly from `x_ds`.
pub fn solve_pp(problem: &PpProblem, opts: &SolverOptions) -> OpfSolution {
    extract_solution(&problem.nlp, &solve_nlp(&problem.nlp, opts))
}

/// DS→TS exchange at each PCC implied by the PP solution, `(ds, p MW, q MVAr)`.
pub fn pp_pcc_flows(problem: &PpProblem, sol: &OpfSolution) -> Vec<(DsId, Vec<f64>, Vec<f64>)> {
    let mut out: Vec<(DsId, Vec<f64>, Vec<f64>)> = Vec::new();
    for inj in &problem.pcc {
        if out.last().map(|o| o.0) != Some(inj.ds) {
            out.push((inj.ds, Vec::new(), Vec::new()));
        }
        let last = out.last_mut().expect("pushed above");
        last.1.push(sol.p_g[inj.gen]);
        last.2.push(sol.q_g[inj.gen]);
    }
    out
}

/// Largest excess of `A_FR x − b_FR` over all bundles at the solution.
pub fn facet_violation(problem: &PpProblem, sol: &OpfSolution) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (bundle, (_, x)) in problem.bundles.iter().zip(&sol.x_ds) {
        worst = worst.max(bundle.fr.max_margin(&x.to_vec()).0);
    }
    worst
}

/// Whether the PP dispatch of each DS lies in its learned polytope.
pub fn dispatch_in_polytopes(problem: &PpProblem, sol: &OpfSolution, tol: f64) -> bool {
    problem
        .bundles
        .iter()
        .zip(&sol.x_ds)
        .all(|(b, (_, x))| classify(&b.fr, &x.to_vec(), tol) == Label::Feasible)
}

/// Integrated OPF with each DG pinned to `dispatch` (MW/MVAr per DG, in the
/// case's DG order per DS) and explicit charts enforced.
pub fn pinned_problem(integrated: &NetworkCase, dispatch: &[(DsId, Vec<f64>, Vec<f64>)]) -> Result<NlpProblem> {
    let mut pinned = integrated.clone();
    for (ds, p, q) in dispatch {
        let dgs = integrated.dgs_of(*ds);
        if dgs.len() != p.len() || dgs.len() != q.len() {
            return Err(Error::Dimension(format!("{} set-points for {} DGs of DS {}", p.len(), dgs.len(), ds.0)));
        }
        for (k, &g) in dgs.iter().enumerate() {
            let gen = &mut pinned.generators[g];
            gen.p_min = p[k];
            gen.p_max = p[k];
            gen.q_min = q[k];
            gen.q_max = q[k];
        }
    }
    let problem = assemble_standard(&pinned)?;
    assemble_polygon_extension(&problem, &case_charts(integrated))
}

/// Checks that a case is fit to be the TS side of a PP-OPF: no DS buses,
/// no DGs, and every PCC bus of kind `pcc`.
pub fn check_ts_only(ts_case: &NetworkCase) -> Result<()> {
    if let Some(b) = ts_case.buses.iter().find(|b| b.zone != 0) {
        return Err(Error::InvalidCase(format!("bus {} belongs to zone {}, expected a TS-only case", b.id.0, b.zone)));
    }
    if ts_case.generators.iter().any(|g| g.is_dg()) {
        return Err(Error::InvalidCase("TS case contains DGs".into()));
    }
    for (ds, buses) in &ts_case.pcc_map {
        for bus in buses {
            if ts_case.bus(*bus)?.kind != BusKind::PccEmpty {
                return Err(Error::PccBus { bus: bus.0, reason: format!("PCC of DS {} must have kind pcc", ds.0) });
            }
        }
    }
    Ok(())
}
