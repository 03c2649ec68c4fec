use serde::{Deserialize, Serialize};

use super::{check_limits, solve_powerflow, BusControl, FeasibilityReport, PowerFlowOptions, PowerFlowSolution};
use crate::error::{Error, Result};
use crate::netmodel::{BusId, DsId, NetworkCase};

/// Operating vector of one distribution system: PCC magnitudes (p.u.)
/// followed by DG active (MW) and reactive (MVAr) set-points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsVector {
    pub v_pcc: Vec<f64>,
    pub p_dg: Vec<f64>,
    pub q_dg: Vec<f64>,
}

impl DsVector {
    pub fn from_slice(x: &[f64], n_pcc: usize, n_dg: usize) -> Result<Self> {
        if x.len() != n_pcc + 2 * n_dg {
            return Err(Error::Dimension(format!(
                "vector of length {} for {n_pcc} PCCs and {n_dg} DGs",
                x.len()
            )));
        }
        Ok(DsVector {
            v_pcc: x[..n_pcc].to_vec(),
            p_dg: x[n_pcc..n_pcc + n_dg].to_vec(),
            q_dg: x[n_pcc + n_dg..].to_vec(),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend_from_slice(&self.v_pcc);
        x.extend_from_slice(&self.p_dg);
        x.extend_from_slice(&self.q_dg);
        x
    }

    pub fn len(&self) -> usize {
        self.v_pcc.len() + self.p_dg.len() + self.q_dg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ResponseOptions {
    /// Admissible DS voltage band, p.u.
    pub v_band: (f64, f64),
    /// Slack on voltage (p.u.) and flow (MVA) limits.
    pub tol: f64,
    pub pf: PowerFlowOptions,
}

impl Default for ResponseOptions {
    fn default() -> Self {
        ResponseOptions { v_band: (0.95, 1.05), tol: 1e-6, pf: PowerFlowOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct DsResponse {
    /// Active power delivered from the DS into the TS at each PCC, MW.
    /// Empty when the power flow failed.
    pub p_pcc: Vec<f64>,
    /// Reactive counterpart, MVAr.
    pub q_pcc: Vec<f64>,
    pub report: FeasibilityReport,
    pub solution: Option<PowerFlowSolution>,
}

/// The DS side of a standalone DS case: its id, ordered PCC buses and DG
/// generator indices.
pub fn ds_layout(ds_case: &NetworkCase) -> Result<(DsId, Vec<BusId>, Vec<usize>)> {
    let mut entries = ds_case.pcc_map.iter();
    match (entries.next(), entries.next()) {
        (Some((ds, pccs)), None) => Ok((*ds, pccs.clone(), ds_case.dgs_of(*ds))),
        _ => Err(Error::InvalidCase(format!(
            "DS case '{}' must declare PCC buses for exactly one DS",
            ds_case.name
        ))),
    }
}

/// Solves the DS power flow with every PCC held at its sampled magnitude and
/// zero angle and every DG injecting its set-point, then checks DS limits.
pub fn ds_response(ds_case: &NetworkCase, x: &DsVector, opts: &ResponseOptions) -> Result<DsResponse> {
    let (_, pccs, dgs) = ds_layout(ds_case)?;
    if x.v_pcc.len() != pccs.len() || x.p_dg.len() != dgs.len() || x.q_dg.len() != dgs.len() {
        return Err(Error::Dimension(format!(
            "DS vector has {}/{}/{} entries, case has {} PCCs and {} DGs",
            x.v_pcc.len(),
            x.p_dg.len(),
            x.q_dg.len(),
            pccs.len(),
            dgs.len()
        )));
    }
    let mut controls: Vec<BusControl> =
        ds_case.buses.iter().map(|b| BusControl::Load { p: -b.p_d, q: -b.q_d }).collect();
    for (k, &g) in dgs.iter().enumerate() {
        let idx = ds_case.index_of(ds_case.generators[g].bus)?;
        if let BusControl::Load { p, q } = &mut controls[idx] {
            *p += x.p_dg[k];
            *q += x.q_dg[k];
        }
    }
    let mut pcc_idx = Vec::with_capacity(pccs.len());
    for (k, bus) in pccs.iter().enumerate() {
        let idx = ds_case.index_of(*bus)?;
        if ds_case.generators.iter().any(|g| g.bus == *bus) {
            return Err(Error::PccBus { bus: bus.0, reason: "carries a generator".into() });
        }
        controls[idx] = BusControl::Reference { v: x.v_pcc[k], theta: 0.0 };
        pcc_idx.push(idx);
    }

    let sol = match solve_powerflow(ds_case, &controls, &opts.pf) {
        Ok(sol) => sol,
        Err(Error::SingularJacobian { .. }) => {
            return Ok(DsResponse {
                p_pcc: vec![],
                q_pcc: vec![],
                report: FeasibilityReport::non_converged(),
                solution: None,
            })
        }
        Err(e) => return Err(e),
    };
    if !sol.converged {
        return Ok(DsResponse { p_pcc: vec![], q_pcc: vec![], report: FeasibilityReport::non_converged(), solution: Some(sol) });
    }
    let report = check_limits(&sol, ds_case, opts.v_band, opts.tol)?;
    // The source at a PCC covers the injection into the DS network plus the
    // demand of the PCC bus itself; the DS delivers the negative of that.
    let p_pcc = pcc_idx.iter().map(|&i| -(sol.p_inj[i] + ds_case.buses[i].p_d)).collect();
    let q_pcc = pcc_idx.iter().map(|&i| -(sol.q_inj[i] + ds_case.buses[i].q_d)).collect();
    Ok(DsResponse { p_pcc, q_pcc, report, solution: Some(sol) })
}
