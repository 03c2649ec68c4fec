//! Newton–Raphson AC power flow in polar coordinates, branch flows, limit
//! checks, and the distribution-system response used to label samples.

mod ds;
mod limits;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::netmodel::{BranchAdmittance, NetworkCase};

pub use ds::{ds_layout, ds_response, DsResponse, DsVector, ResponseOptions};
pub use limits::{check_limits, FeasibilityReport, Violation, ViolationKind};

/// What is held fixed at a bus. Powers are net injections in MW/MVAr
/// (generation minus demand); magnitudes in p.u.; angles in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BusControl {
    /// Angle reference: magnitude and angle fixed.
    Reference { v: f64, theta: f64 },
    /// Magnitude and active injection fixed.
    Voltage { v: f64, p: f64 },
    /// Active and reactive injection fixed.
    Load { p: f64, q: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct PowerFlowOptions {
    /// Largest admissible mismatch, p.u.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions { tol: 1e-8, max_iter: 30 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Net bus injections at the final iterate, MW.
    pub p_inj: Vec<f64>,
    /// Net bus injections at the final iterate, MVAr.
    pub q_inj: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest mismatch at the final iterate, p.u.
    pub max_mismatch: f64,
}

/// Controls derived from bus kinds: slack buses become references at
/// 1.0 p.u., every other bus is a fixed injection equal to minus its demand.
pub fn load_controls(case: &NetworkCase) -> Vec<BusControl> {
    case.buses
        .iter()
        .map(|b| match b.kind {
            crate::netmodel::BusKind::Slack => BusControl::Reference { v: 1.0, theta: 0.0 },
            _ => BusControl::Load { p: -b.p_d, q: -b.q_d },
        })
        .collect()
}

/// Complex bus injections `S = V conj(Y V)` in p.u.
pub fn bus_injections(case: &NetworkCase, v: &[f64], theta: &[f64]) -> Vec<Complex64> {
    let y = case.admittance();
    let volts: Vec<Complex64> = v.iter().zip(theta).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    (0..y.dim())
        .map(|i| {
            let current: Complex64 = y.row(i).iter().map(|&(k, yik)| yik * volts[k]).sum();
            volts[i] * current.conj()
        })
        .collect()
}

/// The reduced polar Newton system for a fixed set of controls.
pub struct NrSystem<'a> {
    case: &'a NetworkCase,
    /// Buses whose angle is unknown.
    angle_buses: Vec<usize>,
    /// Buses whose magnitude is unknown.
    mag_buses: Vec<usize>,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    v_fixed: Vec<f64>,
    theta_fixed: Vec<f64>,
}

impl<'a> NrSystem<'a> {
    pub fn new(case: &'a NetworkCase, controls: &[BusControl]) -> Result<Self> {
        let n = case.n_buses();
        if controls.len() != n {
            return Err(Error::Dimension(format!("{} controls for {n} buses", controls.len())));
        }
        let base = case.base_mva;
        let mut sys = NrSystem {
            case,
            angle_buses: Vec::new(),
            mag_buses: Vec::new(),
            p_spec: vec![0.0; n],
            q_spec: vec![0.0; n],
            v_fixed: vec![1.0; n],
            theta_fixed: vec![0.0; n],
        };
        let mut n_ref = 0;
        for (i, c) in controls.iter().enumerate() {
            match *c {
                BusControl::Reference { v, theta } => {
                    sys.v_fixed[i] = v;
                    sys.theta_fixed[i] = theta;
                    n_ref += 1;
                }
                BusControl::Voltage { v, p } => {
                    sys.v_fixed[i] = v;
                    sys.p_spec[i] = p / base;
                    sys.angle_buses.push(i);
                }
                BusControl::Load { p, q } => {
                    sys.p_spec[i] = p / base;
                    sys.q_spec[i] = q / base;
                    sys.angle_buses.push(i);
                    sys.mag_buses.push(i);
                }
            }
        }
        if n_ref == 0 {
            return Err(Error::InvalidCase("power flow needs at least one reference bus".into()));
        }
        Ok(sys)
    }

    pub fn n_unknowns(&self) -> usize {
        self.angle_buses.len() + self.mag_buses.len()
    }

    /// Flat start: fixed magnitudes where given, 1.0 elsewhere; reference
    /// angles where given, 0 elsewhere.
    pub fn flat_start(&self) -> (Vec<f64>, Vec<f64>) {
        let mut v = self.v_fixed.clone();
        for &i in &self.mag_buses {
            v[i] = 1.0;
        }
        (v, self.theta_fixed.clone())
    }

    pub fn unknowns(&self, v: &[f64], theta: &[f64]) -> Vec<f64> {
        self.angle_buses.iter().map(|&i| theta[i]).chain(self.mag_buses.iter().map(|&i| v[i])).collect()
    }

    pub fn set_unknowns(&self, z: &[f64], v: &mut [f64], theta: &mut [f64]) {
        let na = self.angle_buses.len();
        for (k, &i) in self.angle_buses.iter().enumerate() {
            theta[i] = z[k];
        }
        for (k, &i) in self.mag_buses.iter().enumerate() {
            v[i] = z[na + k];
        }
    }

    /// Mismatch `[P_calc - P_spec (angle buses); Q_calc - Q_spec (magnitude buses)]`.
    pub fn mismatch(&self, v: &[f64], theta: &[f64]) -> DVector<f64> {
        let s = bus_injections(self.case, v, theta);
        let na = self.angle_buses.len();
        let mut f = DVector::zeros(self.n_unknowns());
        for (k, &i) in self.angle_buses.iter().enumerate() {
            f[k] = s[i].re - self.p_spec[i];
        }
        for (k, &i) in self.mag_buses.iter().enumerate() {
            f[na + k] = s[i].im - self.q_spec[i];
        }
        f
    }

    /// Jacobian of [`NrSystem::mismatch`] with respect to the unknowns.
    pub fn jacobian(&self, v: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let n = self.case.n_buses();
        let y = self.case.admittance();
        let s = bus_injections(self.case, v, theta);
        // Column positions of each bus in the unknown vector.
        let na = self.angle_buses.len();
        let mut col_theta = vec![usize::MAX; n];
        let mut col_v = vec![usize::MAX; n];
        for (k, &i) in self.angle_buses.iter().enumerate() {
            col_theta[i] = k;
        }
        for (k, &i) in self.mag_buses.iter().enumerate() {
            col_v[i] = na + k;
        }
        let m = self.n_unknowns();
        let mut jac = DMatrix::zeros(m, m);
        let mut fill = |row: usize, i: usize, want_q: bool| {
            for &(k, yik) in y.row(i) {
                let (g, b) = (yik.re, yik.im);
                let (dp_dt, dp_dv, dq_dt, dq_dv) = if k == i {
                    let vi = v[i];
                    (
                        -s[i].im - b * vi * vi,
                        s[i].re / vi + g * vi,
                        s[i].re - g * vi * vi,
                        s[i].im / vi - b * vi,
                    )
                } else {
                    let a = theta[i] - theta[k];
                    let (sn, cs) = a.sin_cos();
                    let vi = v[i];
                    let vk = v[k];
                    (
                        vi * vk * (g * sn - b * cs),
                        vi * (g * cs + b * sn),
                        -vi * vk * (g * cs + b * sn),
                        vi * (g * sn - b * cs),
                    )
                };
                let (d_t, d_v) = if want_q { (dq_dt, dq_dv) } else { (dp_dt, dp_dv) };
                if col_theta[k] != usize::MAX {
                    jac[(row, col_theta[k])] += d_t;
                }
                if col_v[k] != usize::MAX {
                    jac[(row, col_v[k])] += d_v;
                }
            }
        };
        for (r, &i) in self.angle_buses.iter().enumerate() {
            fill(r, i, false);
        }
        for (r, &i) in self.mag_buses.iter().enumerate() {
            fill(na + r, i, true);
        }
        jac
    }
}

/// Solves the power flow from a flat start.
///
/// Returns `Err(SingularJacobian)` when the Newton matrix cannot be
/// factorized; failure to reach `tol` within `max_iter` iterations is
/// reported through `converged = false`.
pub fn solve_powerflow(
    case: &NetworkCase,
    controls: &[BusControl],
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution> {
    let sys = NrSystem::new(case, controls)?;
    let (mut v, mut theta) = sys.flat_start();
    let mut z = sys.unknowns(&v, &theta);
    let mut f = sys.mismatch(&v, &theta);
    let mut norm = f.amax();
    let mut iterations = 0;
    while !(norm < opts.tol) && iterations < opts.max_iter && norm.is_finite() {
        iterations += 1;
        let jac = sys.jacobian(&v, &theta);
        let step = jac.lu().solve(&(-&f)).ok_or(Error::SingularJacobian { iteration: iterations })?;
        for (zi, di) in z.iter_mut().zip(step.iter()) {
            *zi += di;
        }
        sys.set_unknowns(&z, &mut v, &mut theta);
        f = sys.mismatch(&v, &theta);
        norm = f.amax();
    }
    let s = bus_injections(case, &v, &theta);
    let base = case.base_mva;
    Ok(PowerFlowSolution {
        p_inj: s.iter().map(|x| x.re * base).collect(),
        q_inj: s.iter().map(|x| x.im * base).collect(),
        v,
        theta,
        iterations,
        converged: norm < opts.tol,
        max_mismatch: norm,
    })
}

/// Complex power entering a branch at each end, MVA.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchFlow {
    pub s_from: Complex64,
    pub s_to: Complex64,
}

impl BranchFlow {
    /// Larger of the two end magnitudes, MVA.
    pub fn mva(&self) -> f64 {
        self.s_from.norm().max(self.s_to.norm())
    }

    /// Active power lost in the branch, MW.
    pub fn loss(&self) -> f64 {
        self.s_from.re + self.s_to.re
    }
}

/// Per-branch π-model flows. Open branches carry nothing.
pub fn line_flows(sol: &PowerFlowSolution, case: &NetworkCase) -> Result<Vec<BranchFlow>> {
    branch_flows(case, &sol.v, &sol.theta)
}

/// Branch end flows at an arbitrary state, MVA; zero for open branches.
pub fn branch_flows(case: &NetworkCase, v: &[f64], theta: &[f64]) -> Result<Vec<BranchFlow>> {
    let zero = Complex64::new(0.0, 0.0);
    case.branches
        .iter()
        .map(|br| {
            if !br.closed {
                return Ok(BranchFlow { s_from: zero, s_to: zero });
            }
            let f = case.index_of(br.from)?;
            let t = case.index_of(br.to)?;
            let y = BranchAdmittance::of(br)?;
            let vf = Complex64::from_polar(v[f], theta[f]);
            let vt = Complex64::from_polar(v[t], theta[t]);
            let i_f = y.ff * vf + y.ft * vt;
            let i_t = y.tf * vf + y.tt * vt;
            Ok(BranchFlow {
                s_from: vf * i_f.conj() * case.base_mva,
                s_to: vt * i_t.conj() * case.base_mva,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{parse_case, Branch, Bus, BusKind};
    use std::collections::BTreeMap;

    fn two_bus(x: f64, load: f64) -> NetworkCase {
        NetworkCase::new(
            "two",
            100.0,
            vec![Bus::new(1, BusKind::Slack, 0.0, 0.0, 0.9, 1.1), Bus::new(2, BusKind::Pq, load, 0.0, 0.9, 1.1)],
            vec![Branch::line(1, 2, 0.0, x)],
            vec![],
            BTreeMap::new(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn flat_start_is_solution_without_load() {
        let case = two_bus(0.1, 0.0);
        let sol = solve_powerflow(&case, &load_controls(&case), &PowerFlowOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.v, vec![1.0, 1.0]);
        assert_eq!(sol.theta, vec![0.0, 0.0]);
    }

    #[test]
    fn two_bus_flow_matches_closed_form() {
        let case = two_bus(0.1, 50.0);
        let sol = solve_powerflow(&case, &load_controls(&case), &PowerFlowOptions::default()).unwrap();
        assert!(sol.converged);
        let flows = line_flows(&sol, &case).unwrap();
        let d = sol.theta[0] - sol.theta[1];
        let (v1, v2, x) = (sol.v[0], sol.v[1], 0.1);
        let p12 = v1 * v2 * d.sin() / x * 100.0;
        let q12 = (v1 * v1 - v1 * v2 * d.cos()) / x * 100.0;
        assert!((flows[0].s_from.re - p12).abs() < 1e-9);
        assert!((flows[0].s_from.im - q12).abs() < 1e-9);
        assert!((flows[0].s_from.re - 50.0).abs() < 1e-6);
    }

    #[test]
    fn unsupportable_transfer_does_not_converge() {
        let case = two_bus(50.0, 100.0);
        let sol = solve_powerflow(&case, &load_controls(&case), &PowerFlowOptions::default()).unwrap();
        assert!(!sol.converged);
    }

    #[test]
    fn isolated_bus_gives_singular_jacobian() {
        let text = "bus\n1 slack 0 0 0 0 0.9 1.1 0\n2 pq 1 0 0 0 0.9 1.1 0\n3 pq 1 0 0 0 0.9 1.1 0\nbranch\n1 2 0.01 0.1 0 0 1 1 0\n2 3 0.01 0.1 0 0 1 0 0\n";
        let case = parse_case(text).unwrap();
        let err = solve_powerflow(&case, &load_controls(&case), &PowerFlowOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SingularJacobian { iteration: 1 }));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let text = "bus\n1 slack 0 0 0 0 0.9 1.1 0\n2 pv 20 0 0 5 0.9 1.1 0\n3 pq 40 10 1 0 0.9 1.1 0\n4 pq 10 5 0 0 0.9 1.1 0\nbranch\n1 2 0.01 0.1 0.02 0 1 1 0\n2 3 0.02 0.2 0 0 0.95 1 0\n1 3 0.01 0.15 0.01 0 1 1 0\n3 4 0.03 0.1 0 0 1 1 0\n";
        let case = parse_case(text).unwrap();
        let controls = [
            BusControl::Reference { v: 1.02, theta: 0.0 },
            BusControl::Voltage { v: 1.01, p: 10.0 },
            BusControl::Load { p: -40.0, q: -10.0 },
            BusControl::Load { p: -10.0, q: -5.0 },
        ];
        let sys = NrSystem::new(&case, &controls).unwrap();
        let v0 = [1.02, 1.01, 0.97, 0.99];
        let t0 = [0.0, -0.05, -0.1, -0.12];
        let z0 = sys.unknowns(&v0, &t0);
        let jac = sys.jacobian(&v0, &t0);
        let h = 1e-6;
        for c in 0..z0.len() {
            let eval = |delta: f64| {
                let mut z = z0.clone();
                z[c] += delta;
                let (mut v, mut t) = (v0.to_vec(), t0.to_vec());
                sys.set_unknowns(&z, &mut v, &mut t);
                sys.mismatch(&v, &t)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            for r in 0..z0.len() {
                assert!((fd[r] - jac[(r, c)]).abs() < 1e-6 * (1.0 + jac[(r, c)].abs()), "entry ({r},{c})");
            }
        }
    }

    #[test]
    fn losses_equal_injection_total() {
        let text = "bus\n1 slack 0 0 0 0 0.9 1.1 0\n2 pq 30 10 0 0 0.9 1.1 0\n3 pq 40 10 0 0 0.9 1.1 0\nbranch\n1 2 0.02 0.1 0.02 0 1 1 0\n2 3 0.02 0.2 0 0 1 1 0\n1 3 0.01 0.15 0.01 0 1 1 0\n";
        let case = parse_case(text).unwrap();
        let sol = solve_powerflow(&case, &load_controls(&case), &PowerFlowOptions::default()).unwrap();
        let flows = line_flows(&sol, &case).unwrap();
        let loss: f64 = flows.iter().map(BranchFlow::loss).sum();
        let net: f64 = sol.p_inj.iter().sum();
        assert!(loss > 0.0);
        assert!((loss - net).abs() < 1e-6);
    }
}
