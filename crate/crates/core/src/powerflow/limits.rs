use serde::{Deserialize, Serialize};

use super::{line_flows, PowerFlowSolution};
use crate::error::Result;
use crate::netmodel::NetworkCase;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    VLow,
    VHigh,
    LineOverload,
    NonConvergence,
    /// DG set-point outside its PQ chart.
    Chart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Bus id for voltage violations, branch position for overloads,
    /// generator id for chart violations.
    pub element: u32,
    /// Amount beyond the limit (p.u. for voltages, MVA for flows).
    pub magnitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        FeasibilityReport { feasible: violations.is_empty(), violations }
    }

    pub fn non_converged() -> Self {
        Self::from_violations(vec![Violation { kind: ViolationKind::NonConvergence, element: 0, magnitude: f64::NAN }])
    }
}

/// Tests every bus magnitude against `v_band` and every limited branch
/// against its `s_max`, each with slack `tol`.
pub fn check_limits(
    sol: &PowerFlowSolution,
    case: &NetworkCase,
    v_band: (f64, f64),
    tol: f64,
) -> Result<FeasibilityReport> {
    if !sol.converged {
        return Ok(FeasibilityReport::non_converged());
    }
    let mut violations = Vec::new();
    for (bus, &v) in case.buses.iter().zip(&sol.v) {
        if v < v_band.0 - tol {
            violations.push(Violation { kind: ViolationKind::VLow, element: bus.id.0, magnitude: v_band.0 - v });
        } else if v > v_band.1 + tol {
            violations.push(Violation { kind: ViolationKind::VHigh, element: bus.id.0, magnitude: v - v_band.1 });
        }
    }
    for (k, (br, flow)) in case.branches.iter().zip(line_flows(sol, case)?).enumerate() {
        if br.closed && br.has_limit() {
            let s = flow.mva();
            if s > br.s_max + tol {
                violations.push(Violation {
                    kind: ViolationKind::LineOverload,
                    element: k as u32,
                    magnitude: s - br.s_max,
                });
            }
        }
    }
    Ok(FeasibilityReport::from_violations(violations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_case;
    use crate::powerflow::{load_controls, solve_powerflow, PowerFlowOptions};

    const CASE: &str = "bus\n1 slack 0 0 0 0 0.9 1.1 0\n2 pq 30 10 0 0 0.9 1.1 0\n3 pq 40 10 0 0 0.9 1.1 0\nbranch\n1 2 0.02 0.1 0.02 0 1 1 0\n2 3 0.02 0.2 0 0 1 1 0\n1 3 0.01 0.15 0.01 0 1 1 0\n";

    #[test]
    fn trivial_case_is_feasible() {
        let case = parse_case("bus\n1 slack 0 0 0 0 0.9 1.1 0\n").unwrap();
        let sol = solve_powerflow(&case, &load_controls(&case), &PowerFlowOptions::default()).unwrap();
        assert!(check_limits(&sol, &case, (0.95, 1.05), 1e-9).unwrap().feasible);
    }

    #[test]
    fn forced_overload_reported() {
        let case = parse_case(CASE).unwrap();
        let sol = solve_powerflow(&case, &load_controls(&case), &PowerFlowOptions::default()).unwrap();
        let base = line_flows(&sol, &case).unwrap()[2].mva();
        let mut branches = case.branches.clone();
        branches[2].s_max = 0.5 * base;
        let tight = case.rebuild(case.buses.clone(), branches, vec![]).unwrap();
        let report = check_limits(&sol, &tight, (0.0, 2.0), 1e-9).unwrap();
        assert!(!report.feasible);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::LineOverload);
        assert_eq!(report.violations[0].element, 2);
    }

    #[test]
    fn non_converged_gives_single_violation() {
        let case = parse_case(CASE).unwrap();
        let mut sol = solve_powerflow(&case, &load_controls(&case), &PowerFlowOptions::default()).unwrap();
        sol.converged = false;
        let report = check_limits(&sol, &case, (0.95, 1.05), 0.0).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::NonConvergence);
    }
}
