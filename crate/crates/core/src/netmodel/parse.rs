//! Line-oriented case format.
//!
//! ```text
//! name ieee33
//! base_mva 100
//! base_kv 12.66          # required with `impedance ohm`
//! impedance ohm          # or `pu` (default)
//! bus
//! # id kind pd_mw qd_mvar gs_mw bs_mvar vmin vmax zone [thmin_rad thmax_rad]
//! branch
//! # from to r x b s_max_mva tap status zone
//! gen
//! # id bus ds pmin pmax qmin qmax cost_a cost_b cost_c
//! dgchart
//! # ds_id gen_id p1 q1 p2 q2 ...
//! pcc
//! # ds_id bus_id order
//! ```
//!
//! A line holding only a section name starts that section. `#` starts a
//! comment. Directives may appear anywhere outside data rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::{
    polygon_from_vertices, Branch, Bus, BusId, BusKind, CostPoly, DsId, Generator, NetworkCase, PQChart,
    DEFAULT_ANGLE_LIMIT,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Bus,
    Branch,
    Gen,
    DgChart,
    Pcc,
}

struct Row<'a> {
    line: usize,
    tokens: Vec<&'a str>,
}

impl Row<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line, message: message.into() }
    }

    fn expect_len(&self, min: usize, max: usize, what: &str) -> Result<()> {
        let n = self.tokens.len();
        if n < min || n > max {
            let want = if min == max { min.to_string() } else { format!("{min}-{max}") };
            return Err(self.err(format!("{what} row has {n} columns, expected {want}")));
        }
        Ok(())
    }

    fn num<T: FromStr>(&self, col: usize, name: &str) -> Result<T> {
        self.tokens[col]
            .parse()
            .map_err(|_| self.err(format!("invalid {name} '{}'", self.tokens[col])))
    }

    fn float(&self, col: usize, name: &str) -> Result<f64> {
        let v: f64 = self.num(col, name)?;
        if v.is_nan() {
            return Err(self.err(format!("{name} is NaN")));
        }
        Ok(v)
    }
}

/// Parses case text. Loads and limits stay in MW/MVAr; impedances are
/// converted to per unit when the file declares `impedance ohm`.
pub fn parse_case(text: &str) -> Result<NetworkCase> {
    let mut name = String::from("case");
    let mut base_mva = 100.0;
    let mut base_kv: Option<f64> = None;
    let mut ohms = false;
    let mut section = Section::None;

    let mut buses = Vec::new();
    let mut branches: Vec<(usize, Branch)> = Vec::new();
    let mut generators = Vec::new();
    let mut chart_rows: Vec<(usize, DsId, u32, Vec<[f64; 2]>)> = Vec::new();
    let mut pcc_rows: Vec<(usize, DsId, BusId, usize)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let row = Row { line, tokens: content.split_whitespace().collect() };
        let head = row.tokens[0];
        if row.tokens.len() == 1 {
            section = match head {
                "bus" => Section::Bus,
                "branch" => Section::Branch,
                "gen" => Section::Gen,
                "dgchart" => Section::DgChart,
                "pcc" => Section::Pcc,
                _ => return Err(row.err(format!("unknown section '{head}'"))),
            };
            continue;
        }
        match head {
            "name" => {
                row.expect_len(2, 2, "name")?;
                name = row.tokens[1].to_string();
                continue;
            }
            "base_mva" => {
                row.expect_len(2, 2, "base_mva")?;
                base_mva = row.float(1, "base_mva")?;
                continue;
            }
            "base_kv" => {
                row.expect_len(2, 2, "base_kv")?;
                base_kv = Some(row.float(1, "base_kv")?);
                continue;
            }
            "impedance" => {
                row.expect_len(2, 2, "impedance")?;
                ohms = match row.tokens[1] {
                    "ohm" => true,
                    "pu" => false,
                    other => return Err(row.err(format!("unknown impedance unit '{other}'"))),
                };
                continue;
            }
            _ => {}
        }
        match section {
            Section::None => return Err(row.err(format!("data row '{head}' outside any section"))),
            Section::Bus => {
                row.expect_len(9, 11, "bus")?;
                if row.tokens.len() == 10 {
                    return Err(row.err("bus row needs both angle limits or neither"));
                }
                let kind = BusKind::from_token(row.tokens[1])
                    .ok_or_else(|| row.err(format!("unknown bus kind '{}'", row.tokens[1])))?;
                let (theta_min, theta_max) = if row.tokens.len() == 11 {
                    (row.float(9, "thmin")?, row.float(10, "thmax")?)
                } else {
                    (-DEFAULT_ANGLE_LIMIT, DEFAULT_ANGLE_LIMIT)
                };
                let id = BusId(row.num(0, "bus id")?);
                if buses.iter().any(|b: &Bus| b.id == id) {
                    return Err(Error::DuplicateId { kind: "bus", id: id.0 });
                }
                buses.push(Bus {
                    id,
                    kind,
                    p_d: row.float(2, "pd")?,
                    q_d: row.float(3, "qd")?,
                    g_s: row.float(4, "gs")?,
                    b_s: row.float(5, "bs")?,
                    v_min: row.float(6, "vmin")?,
                    v_max: row.float(7, "vmax")?,
                    theta_min,
                    theta_max,
                    zone: row.num(8, "zone")?,
                });
            }
            Section::Branch => {
                row.expect_len(9, 9, "branch")?;
                let mut tap = row.float(6, "tap")?;
                if tap == 0.0 {
                    tap = 1.0;
                }
                let status: u8 = row.num(7, "status")?;
                if status > 1 {
                    return Err(row.err("status must be 0 or 1"));
                }
                branches.push((
                    line,
                    Branch {
                        from: BusId(row.num(0, "from bus")?),
                        to: BusId(row.num(1, "to bus")?),
                        r: row.float(2, "r")?,
                        x: row.float(3, "x")?,
                        b_sh: row.float(4, "b")?,
                        s_max: row.float(5, "s_max")?,
                        tap,
                        closed: status == 1,
                        zone: row.num(8, "zone")?,
                    },
                ));
            }
            Section::Gen => {
                row.expect_len(10, 10, "gen")?;
                let ds: u32 = row.num(2, "ds")?;
                generators.push(Generator {
                    id: row.num(0, "gen id")?,
                    bus: BusId(row.num(1, "gen bus")?),
                    ds: (ds != 0).then_some(DsId(ds)),
                    p_min: row.float(3, "pmin")?,
                    p_max: row.float(4, "pmax")?,
                    q_min: row.float(5, "qmin")?,
                    q_max: row.float(6, "qmax")?,
                    cost: CostPoly::new(row.float(7, "cost_a")?, row.float(8, "cost_b")?, row.float(9, "cost_c")?),
                });
            }
            Section::DgChart => {
                if row.tokens.len() < 8 || !row.tokens.len().is_multiple_of(2) {
                    return Err(row.err("dgchart row needs ds_id, gen_id and at least 3 (p, q) pairs"));
                }
                let ds = DsId(row.num(0, "ds id")?);
                let gen: u32 = row.num(1, "gen id")?;
                let mut verts = Vec::new();
                for k in (2..row.tokens.len()).step_by(2) {
                    verts.push([row.float(k, "p")?, row.float(k + 1, "q")?]);
                }
                chart_rows.push((line, ds, gen, verts));
            }
            Section::Pcc => {
                row.expect_len(3, 3, "pcc")?;
                let order: usize = row.num(2, "order")?;
                if order == 0 {
                    return Err(row.err("pcc order is 1-based"));
                }
                pcc_rows.push((line, DsId(row.num(0, "ds id")?), BusId(row.num(1, "bus id")?), order));
            }
        }
    }

    if ohms {
        let kv = base_kv.ok_or_else(|| Error::Parse { line: 0, message: "impedance ohm requires base_kv".into() })?;
        let z_base = kv * kv / base_mva;
        for (_, br) in &mut branches {
            br.r /= z_base;
            br.x /= z_base;
            br.b_sh *= z_base;
        }
    }

    // Reference checks with line numbers before handing off to the validator.
    let known: std::collections::HashSet<BusId> = buses.iter().map(|b: &Bus| b.id).collect();
    for (line, br) in &branches {
        for end in [br.from, br.to] {
            if !known.contains(&end) {
                return Err(Error::Parse { line: *line, message: format!("unknown bus {end}") });
            }
        }
    }
    for (line, _, bus, _) in &pcc_rows {
        if !known.contains(bus) {
            return Err(Error::Parse { line: *line, message: format!("unknown bus {bus}") });
        }
    }

    let mut charts = BTreeMap::new();
    for (line, ds, gen_id, verts) in chart_rows {
        let gen = generators
            .iter()
            .find(|g: &&Generator| g.id == gen_id)
            .ok_or_else(|| Error::Parse { line, message: format!("chart for unknown generator {gen_id}") })?;
        if gen.ds != Some(ds) {
            return Err(Error::Parse { line, message: format!("generator {gen_id} is not a DG of DS {ds}") });
        }
        let chart: PQChart =
            polygon_from_vertices(&verts).map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if charts.insert(gen_id, chart).is_some() {
            return Err(Error::Parse { line, message: format!("duplicate chart for generator {gen_id}") });
        }
    }

    let mut pcc_map: BTreeMap<DsId, Vec<(usize, BusId)>> = BTreeMap::new();
    for (line, ds, bus, order) in pcc_rows {
        let list = pcc_map.entry(ds).or_default();
        if list.iter().any(|(o, _)| *o == order) {
            return Err(Error::Parse { line, message: format!("duplicate PCC order {order} for DS {ds}") });
        }
        list.push((order, bus));
    }
    let mut ordered_pcc = BTreeMap::new();
    for (ds, mut list) in pcc_map {
        list.sort();
        if list.iter().enumerate().any(|(i, (o, _))| *o != i + 1) {
            return Err(Error::InvalidCase(format!("PCC orders of DS {ds} are not 1..r")));
        }
        ordered_pcc.insert(ds, list.into_iter().map(|(_, b)| b).collect());
    }

    NetworkCase::new(
        name,
        base_mva,
        buses,
        branches.into_iter().map(|(_, b)| b).collect(),
        generators,
        charts,
        ordered_pcc,
    )
}

/// Writes a case in the canonical per-unit form; `parse_case` of the output
/// reproduces the case field for field.
pub fn serialize_case(case: &NetworkCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name {}", case.name);
    let _ = writeln!(out, "base_mva {}", case.base_mva);
    let _ = writeln!(out, "impedance pu");
    let _ = writeln!(out, "bus");
    let _ = writeln!(out, "# id kind pd_mw qd_mvar gs_mw bs_mvar vmin vmax zone [thmin_rad thmax_rad]");
    for b in &case.buses {
        let _ = write!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            b.id,
            b.kind.token(),
            b.p_d,
            b.q_d,
            b.g_s,
            b.b_s,
            b.v_min,
            b.v_max,
            b.zone
        );
        if b.theta_min != -DEFAULT_ANGLE_LIMIT || b.theta_max != DEFAULT_ANGLE_LIMIT {
            let _ = write!(out, " {} {}", b.theta_min, b.theta_max);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "branch");
    let _ = writeln!(out, "# from to r x b s_max_mva tap status zone");
    for br in &case.branches {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b_sh,
            br.s_max,
            br.tap,
            u8::from(br.closed),
            br.zone
        );
    }
    if !case.generators.is_empty() {
        let _ = writeln!(out, "gen");
        let _ = writeln!(out, "# id bus ds pmin pmax qmin qmax cost_a cost_b cost_c");
        for g in &case.generators {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {}",
                g.id,
                g.bus,
                g.ds.map_or(0, |d| d.0),
                g.p_min,
                g.p_max,
                g.q_min,
                g.q_max,
                g.cost.a,
                g.cost.b,
                g.cost.c
            );
        }
    }
    if !case.charts.is_empty() {
        let _ = writeln!(out, "dgchart");
        let _ = writeln!(out, "# ds_id gen_id p1 q1 p2 q2 ...");
        for (gen_id, chart) in &case.charts {
            let ds = case.generators.iter().find(|g| g.id == *gen_id).and_then(|g| g.ds).map_or(0, |d| d.0);
            let _ = write!(out, "{ds} {gen_id}");
            for v in &chart.vertices {
                let _ = write!(out, " {} {}", v[0], v[1]);
            }
            out.push('\n');
        }
    }
    if !case.pcc_map.is_empty() {
        let _ = writeln!(out, "pcc");
        let _ = writeln!(out, "# ds_id bus_id order");
        for (ds, buses) in &case.pcc_map {
            for (k, bus) in buses.iter().enumerate() {
                let _ = writeln!(out, "{ds} {bus} {}", k + 1);
            }
        }
    }
    out
}
