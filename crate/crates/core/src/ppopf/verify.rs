use serde::{Deserialize, Serialize};

use super::{pinned_problem, pp_pcc_flows, PpProblem};
use crate::acopf::{extract_solution, solve_nlp, OpfSolution, SolveStatus, SolverOptions};
use crate::error::Result;
use crate::netmodel::{DsId, NetworkCase};
use crate::powerflow::{branch_flows, FeasibilityReport, Violation, ViolationKind};

/// Feasibility of one zone (0 for the TS, otherwise the DS id).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneReport {
    pub zone: u32,
    pub report: FeasibilityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub feasible_true: bool,
    /// Status of the pinned re-solve; `None` when a chart pre-check failed.
    pub status: Option<SolveStatus>,
    pub violations: Vec<ZoneReport>,
    /// Pinned re-solve objective, $/h.
    pub verified_cost: Option<f64>,
    /// PP-OPF objective, $/h.
    pub raw_cost: f64,
    /// Largest |regressed − true| PCC exchange, MW or MVAr.
    pub pcc_flow_error: Option<f64>,
    pub solve_time: f64,
}

/// Voltage-band and branch-rating checks at a network state, grouped by
/// zone. Every zone of the case gets a report.
pub fn zone_reports(case: &NetworkCase, v: &[f64], theta: &[f64], tol: f64) -> Result<Vec<ZoneReport>> {
    let mut zones: Vec<u32> = case.buses.iter().map(|b| b.zone).collect();
    zones.sort_unstable();
    zones.dedup();
    let mut found: Vec<Vec<Violation>> = vec![Vec::new(); zones.len()];
    let slot = |z: u32| zones.binary_search(&z).unwrap_or(0);
    for (bus, &vi) in case.buses.iter().zip(v) {
        let viol = if vi < bus.v_min - tol {
            Some(Violation { kind: ViolationKind::VLow, element: bus.id.0, magnitude: bus.v_min - vi })
        } else if vi > bus.v_max + tol {
            Some(Violation { kind: ViolationKind::VHigh, element: bus.id.0, magnitude: vi - bus.v_max })
        } else {
            None
        };
        found[slot(bus.zone)].extend(viol);
    }
    for (k, (br, flow)) in case.branches.iter().zip(branch_flows(case, v, theta)?).enumerate() {
        if br.closed && br.has_limit() && flow.mva() > br.s_max + tol {
            found[slot(br.zone)].push(Violation {
                kind: ViolationKind::LineOverload,
                element: k as u32,
                magnitude: flow.mva() - br.s_max,
            });
        }
    }
    Ok(zones.into_iter().zip(found).map(|(zone, v)| ZoneReport { zone, report: FeasibilityReport::from_violations(v) }).collect())
}

/// DS→TS exchange at every PCC of an integrated case: the power leaving
/// each PCC bus into transmission (zone 0) branches, MW and MVAr.
pub fn ds_to_ts_flows(integrated: &NetworkCase, v: &[f64], theta: &[f64]) -> Result<Vec<(DsId, Vec<f64>, Vec<f64>)>> {
    let flows = branch_flows(integrated, v, theta)?;
    let mut out = Vec::new();
    for (ds, buses) in &integrated.pcc_map {
        let (mut p, mut q) = (Vec::new(), Vec::new());
        for bus in buses {
            let mut s = num_complex::Complex64::new(0.0, 0.0);
            for (br, f) in integrated.branches.iter().zip(&flows) {
                if br.zone != 0 || !br.closed {
                    continue;
                }
                if br.from == *bus {
                    s += f.s_from;
                } else if br.to == *bus {
                    s += f.s_to;
                }
            }
            p.push(s.re);
            q.push(s.im);
        }
        out.push((*ds, p, q));
    }
    Ok(out)
}

/// Checks a PP dispatch against the integrated network: DG set-points are
/// tested against their charts, then pinned, and the integrated OPF is
/// re-solved over the remaining TS variables. The dispatch is truly
/// feasible iff that re-solve is optimal and its point meets every limit.
pub fn verify_dispatch(
    integrated: &NetworkCase,
    problem: &PpProblem,
    pp: &OpfSolution,
    opts: &SolverOptions,
    tol: f64,
) -> Result<VerificationReport> {
    let dispatch: Vec<(DsId, Vec<f64>, Vec<f64>)> =
        pp.x_ds.iter().map(|(ds, x)| (*ds, x.p_dg.clone(), x.q_dg.clone())).collect();

    let mut chart_violations = Vec::new();
    for (ds, p, q) in &dispatch {
        for (k, &g) in integrated.dgs_of(*ds).iter().enumerate() {
            let chart = integrated.chart_for(g)?;
            let excess = chart.max_violation(p[k], q[k]);
            if excess > tol {
                chart_violations.push(ZoneReport {
                    zone: ds.0,
                    report: FeasibilityReport::from_violations(vec![Violation {
                        kind: ViolationKind::Chart,
                        element: integrated.generators[g].id,
                        magnitude: excess,
                    }]),
                });
            }
        }
    }
    if !chart_violations.is_empty() {
        return Ok(VerificationReport {
            feasible_true: false,
            status: None,
            violations: chart_violations,
            verified_cost: None,
            raw_cost: pp.objective,
            pcc_flow_error: None,
            solve_time: 0.0,
        });
    }

    let nlp = pinned_problem(integrated, &dispatch)?;
    let res = solve_nlp(&nlp, opts);
    let sol = extract_solution(&nlp, &res);
    let mut violations = zone_reports(integrated, &sol.v, &sol.theta, tol)?;
    if sol.status != SolveStatus::Optimal {
        let nc = Violation { kind: ViolationKind::NonConvergence, element: 0, magnitude: sol.constraint_violation };
        match violations.iter_mut().find(|z| z.zone == 0) {
            Some(ts) => ts.report = FeasibilityReport::from_violations([ts.report.violations.clone(), vec![nc]].concat()),
            None => violations.push(ZoneReport { zone: 0, report: FeasibilityReport::from_violations(vec![nc]) }),
        }
    }
    let truth = ds_to_ts_flows(integrated, &sol.v, &sol.theta)?;
    let regressed = pp_pcc_flows(problem, pp);
    let mut err = 0.0f64;
    for (ds, p, q) in &regressed {
        if let Some((_, tp, tq)) = truth.iter().find(|t| t.0 == *ds) {
            for u in 0..p.len().min(tp.len()) {
                err = err.max((p[u] - tp[u]).abs()).max((q[u] - tq[u]).abs());
            }
        }
    }
    let optimal = sol.status == SolveStatus::Optimal;
    Ok(VerificationReport {
        feasible_true: optimal && violations.iter().all(|z| z.report.feasible),
        status: Some(sol.status),
        violations,
        verified_cost: optimal.then_some(sol.objective),
        raw_cost: pp.objective,
        pcc_flow_error: Some(err),
        solve_time: sol.solve_time,
    })
}
