//! Network data model: buses, branches, generators, PQ charts and the
//! assembled case with its cached bus admittance matrix.
//!
//! Quantities are stored in engineering units (MW, MVAr, MVA) except branch
//! impedances, which are per unit on the system base. Solvers convert to per
//! unit with [`NetworkCase::base_mva`].

mod admittance;
mod chart;
mod integrate;
mod parse;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use admittance::{build_admittance, Admittance, BranchAdmittance};
pub use chart::{polygon_contains, polygon_from_vertices, PQChart};
pub use integrate::{build_integrated, DS_ID_STRIDE};
pub use parse::{parse_case, serialize_case};

/// Default angle box applied when a case omits angle limits.
pub const DEFAULT_ANGLE_LIMIT: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of a distribution system attached to the transmission grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DsId(pub u32);

impl fmt::Display for DsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
    /// Transmission bus reserved for a distribution system: no load, no generator.
    PccEmpty,
}

impl BusKind {
    pub fn token(self) -> &'static str {
        match self {
            BusKind::Slack => "slack",
            BusKind::Pv => "pv",
            BusKind::Pq => "pq",
            BusKind::PccEmpty => "pcc",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "slack" => Some(BusKind::Slack),
            "pv" => Some(BusKind::Pv),
            "pq" => Some(BusKind::Pq),
            "pcc" => Some(BusKind::PccEmpty),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Demand, MW.
    pub p_d: f64,
    /// Demand, MVAr.
    pub q_d: f64,
    /// Shunt conductance, MW consumed at 1 p.u.
    pub g_s: f64,
    /// Shunt susceptance, MVAr injected at 1 p.u.
    pub b_s: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Angle bounds, radians.
    pub theta_min: f64,
    pub theta_max: f64,
    /// 0 for transmission, `j` for buses owned by distribution system `j`.
    pub zone: u32,
}

impl Bus {
    pub fn new(id: u32, kind: BusKind, p_d: f64, q_d: f64, v_min: f64, v_max: f64) -> Self {
        Bus {
            id: BusId(id),
            kind,
            p_d,
            q_d,
            g_s: 0.0,
            b_s: 0.0,
            v_min,
            v_max,
            theta_min: -DEFAULT_ANGLE_LIMIT,
            theta_max: DEFAULT_ANGLE_LIMIT,
            zone: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b_sh: f64,
    /// Off-nominal turns ratio; 1.0 for lines.
    pub tap: f64,
    /// Apparent power limit, MVA; 0 means unlimited.
    pub s_max: f64,
    pub closed: bool,
    pub zone: u32,
}

impl Branch {
    pub fn line(from: u32, to: u32, r: f64, x: f64) -> Self {
        Branch {
            from: BusId(from),
            to: BusId(to),
            r,
            x,
            b_sh: 0.0,
            tap: 1.0,
            s_max: 0.0,
            closed: true,
            zone: 0,
        }
    }

    pub fn has_limit(&self) -> bool {
        self.s_max > 0.0
    }
}

/// Quadratic generation cost `a p² + b p + c` with `p` in MW.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostPoly {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CostPoly {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        CostPoly { a, b, c }
    }

    pub fn eval(&self, p: f64) -> f64 {
        (self.a * p + self.b) * p + self.c
    }

    pub fn derivative(&self, p: f64) -> f64 {
        2.0 * self.a * p + self.b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: u32,
    pub bus: BusId,
    /// Owning distribution system for DGs; `None` for transmission units.
    pub ds: Option<DsId>,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: CostPoly,
}

impl Generator {
    pub fn is_dg(&self) -> bool {
        self.ds.is_some()
    }
}

/// Immutable network case. Construct through [`NetworkCase::new`], which
/// validates references and caches the admittance matrix.
#[derive(Clone, Debug)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    /// Explicit PQ charts keyed by generator id. DGs without an entry use
    /// their rectangular box.
    pub charts: BTreeMap<u32, PQChart>,
    /// Ordered PCC buses per distribution system, in this case's numbering.
    pub pcc_map: BTreeMap<DsId, Vec<BusId>>,
    bus_index: HashMap<BusId, usize>,
    admittance: Admittance,
}

impl PartialEq for NetworkCase {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.base_mva == other.base_mva
            && self.buses == other.buses
            && self.branches == other.branches
            && self.generators == other.generators
            && self.charts == other.charts
            && self.pcc_map == other.pcc_map
    }
}

impl NetworkCase {
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        charts: BTreeMap<u32, PQChart>,
        pcc_map: BTreeMap<DsId, Vec<BusId>>,
    ) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(Error::InvalidCase("base_mva must be positive".into()));
        }
        let mut bus_index = HashMap::with_capacity(buses.len());
        for (idx, bus) in buses.iter().enumerate() {
            if bus_index.insert(bus.id, idx).is_some() {
                return Err(Error::DuplicateId { kind: "bus", id: bus.id.0 });
            }
            if !(bus.v_min < bus.v_max) {
                return Err(Error::InvalidCase(format!("bus {}: v_min must be below v_max", bus.id)));
            }
            if !(bus.theta_min <= bus.theta_max) {
                return Err(Error::InvalidCase(format!("bus {}: inverted angle limits", bus.id)));
            }
            if !bus.p_d.is_finite() || !bus.q_d.is_finite() {
                return Err(Error::InvalidCase(format!("bus {}: demand is not finite", bus.id)));
            }
        }
        for br in &branches {
            for end in [br.from, br.to] {
                if !bus_index.contains_key(&end) {
                    return Err(Error::UnknownBus(end.0));
                }
            }
            if br.r < 0.0 {
                return Err(Error::InvalidCase(format!("branch {}-{}: negative resistance", br.from, br.to)));
            }
            if !(br.tap > 0.0) {
                return Err(Error::InvalidCase(format!("branch {}-{}: tap must be positive", br.from, br.to)));
            }
        }
        let mut gen_ids = HashSet::new();
        for gen in &generators {
            if !gen_ids.insert(gen.id) {
                return Err(Error::DuplicateId { kind: "generator", id: gen.id });
            }
            if !bus_index.contains_key(&gen.bus) {
                return Err(Error::UnknownBus(gen.bus.0));
            }
            if gen.p_min > gen.p_max || gen.q_min > gen.q_max {
                return Err(Error::InvalidCase(format!("generator {}: inverted limits", gen.id)));
            }
        }
        for (gen_id, chart) in &charts {
            let gen = generators
                .iter()
                .find(|g| g.id == *gen_id)
                .ok_or_else(|| Error::InvalidCase(format!("chart for unknown generator {gen_id}")))?;
            if !gen.is_dg() {
                return Err(Error::InvalidCase(format!("chart attached to non-DG generator {gen_id}")));
            }
            if chart.vertices.len() < 3 {
                return Err(Error::InvalidCase(format!("chart of generator {gen_id} is degenerate")));
            }
        }
        for (ds, buses_of) in &pcc_map {
            if buses_of.is_empty() {
                return Err(Error::InvalidCase(format!("DS {ds} has no PCC buses")));
            }
            for bus in buses_of {
                let idx = *bus_index.get(bus).ok_or(Error::UnknownBus(bus.0))?;
                let b = &buses[idx];
                if b.kind == BusKind::PccEmpty {
                    if b.p_d != 0.0 || b.q_d != 0.0 {
                        return Err(Error::PccBus { bus: bus.0, reason: "carries load".into() });
                    }
                    if generators.iter().any(|g| g.bus == *bus) {
                        return Err(Error::PccBus { bus: bus.0, reason: "carries a generator".into() });
                    }
                }
            }
        }
        for bus in buses.iter().filter(|b| b.kind == BusKind::PccEmpty) {
            if bus.p_d != 0.0 || bus.q_d != 0.0 {
                return Err(Error::PccBus { bus: bus.id.0, reason: "carries load".into() });
            }
            if generators.iter().any(|g| g.bus == bus.id) {
                return Err(Error::PccBus { bus: bus.id.0, reason: "carries a generator".into() });
            }
        }

        let mut case = NetworkCase {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
            charts,
            pcc_map,
            bus_index,
            admittance: Admittance::empty(),
        };
        case.admittance = build_admittance(&case)?;
        Ok(case)
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn index_of(&self, bus: BusId) -> Result<usize> {
        self.bus_index.get(&bus).copied().ok_or(Error::UnknownBus(bus.0))
    }

    pub fn bus(&self, bus: BusId) -> Result<&Bus> {
        Ok(&self.buses[self.index_of(bus)?])
    }

    pub fn admittance(&self) -> &Admittance {
        &self.admittance
    }

    /// Indices (into `generators`) of conventional transmission units.
    pub fn conventional_generators(&self) -> Vec<usize> {
        self.generators.iter().enumerate().filter(|(_, g)| !g.is_dg()).map(|(i, _)| i).collect()
    }

    /// Indices (into `generators`) of DGs owned by `ds`, in file order.
    pub fn dgs_of(&self, ds: DsId) -> Vec<usize> {
        self.generators.iter().enumerate().filter(|(_, g)| g.ds == Some(ds)).map(|(i, _)| i).collect()
    }

    /// All DG indices, grouped by distribution system in ascending id order.
    pub fn all_dgs(&self) -> Vec<usize> {
        self.ds_ids().into_iter().flat_map(|ds| self.dgs_of(ds)).collect()
    }

    /// Distribution systems referenced by DGs or PCC declarations.
    pub fn ds_ids(&self) -> Vec<DsId> {
        let mut ids: Vec<DsId> = self.pcc_map.keys().copied().collect();
        for g in &self.generators {
            if let Some(ds) = g.ds {
                if !ids.contains(&ds) {
                    ids.push(ds);
                }
            }
        }
        ids.sort();
        ids
    }

    /// Chart of a DG: the explicit polygon if present, otherwise its box.
    pub fn chart_for(&self, gen_idx: usize) -> Result<PQChart> {
        let gen = &self.generators[gen_idx];
        match self.charts.get(&gen.id) {
            Some(chart) => Ok(chart.clone()),
            None => PQChart::rectangle(gen.p_min, gen.p_max, gen.q_min, gen.q_max),
        }
    }

    /// Bus-by-generator incidence (`K` for conventional units, `H_j` for DGs).
    pub fn incidence(&self, gens: &[usize]) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; gens.len()]; self.n_buses()];
        for (col, &g) in gens.iter().enumerate() {
            let row = self.bus_index[&self.generators[g].bus];
            m[row][col] = 1.0;
        }
        m
    }

    pub fn total_load(&self) -> (f64, f64) {
        self.buses.iter().fold((0.0, 0.0), |(p, q), b| (p + b.p_d, q + b.q_d))
    }

    pub fn slack_indices(&self) -> Vec<usize> {
        self.buses.iter().enumerate().filter(|(_, b)| b.kind == BusKind::Slack).map(|(i, _)| i).collect()
    }

    /// Returns a copy with some fields replaced, re-running validation.
    pub fn rebuild(
        &self,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<NetworkCase> {
        NetworkCase::new(
            self.name.clone(),
            self.base_mva,
            buses,
            branches,
            generators,
            self.charts.clone(),
            self.pcc_map.clone(),
        )
    }

    /// Same case with every generator cost replaced, in generator order.
    pub fn with_costs(&self, costs: &[CostPoly]) -> Result<NetworkCase> {
        if costs.len() != self.generators.len() {
            return Err(Error::Dimension(format!(
                "{} cost entries for {} generators",
                costs.len(),
                self.generators.len()
            )));
        }
        let mut out = self.clone();
        for (g, c) in out.generators.iter_mut().zip(costs) {
            g.cost = *c;
        }
        Ok(out)
    }

    /// Closes every open branch (normally-open ties become part of a meshed grid).
    pub fn meshed(&self) -> Result<NetworkCase> {
        let mut branches = self.branches.clone();
        for b in &mut branches {
            b.closed = true;
        }
        self.rebuild(self.buses.clone(), branches, self.generators.clone())
    }
}
