use std::collections::{BTreeMap, HashMap, HashSet};

use super::{Bus, BusId, BusKind, DsId, NetworkCase};
use crate::error::{Error, Result};

/// Bus and generator ids of DS `j` are shifted by `j * DS_ID_STRIDE` in the
/// integrated case.
pub const DS_ID_STRIDE: u32 = 1000;

/// Attaches distribution systems to a transmission case.
///
/// Each DS file declares its own PCC buses (in DS numbering) under a single
/// `pcc` entry; the TS file declares the matching TS buses under the same DS
/// id and order. Paired buses are merged into the TS bus, which takes over
/// any DS-side load and shunt. Remaining DS buses, branches and DGs are
/// renumbered by [`DS_ID_STRIDE`] and tagged with the DS zone.
pub fn build_integrated(ts: &NetworkCase, ds_list: &[NetworkCase]) -> Result<NetworkCase> {
    if ds_list.is_empty() {
        return Ok(ts.clone());
    }
    let mut buses = ts.buses.clone();
    let mut branches = ts.branches.clone();
    let mut generators = ts.generators.clone();
    let mut charts = ts.charts.clone();
    let mut used_bus_ids: HashSet<BusId> = buses.iter().map(|b| b.id).collect();
    let mut used_gen_ids: HashSet<u32> = generators.iter().map(|g| g.id).collect();
    let mut seen_ds = HashSet::new();

    for ds_case in ds_list {
        let (ds, ds_pccs) = match ds_case.pcc_map.iter().next() {
            Some((ds, pccs)) if ds_case.pcc_map.len() == 1 => (*ds, pccs.clone()),
            _ => {
                return Err(Error::InvalidCase(format!(
                    "DS case '{}' must declare its PCC buses for exactly one DS id",
                    ds_case.name
                )))
            }
        };
        if !seen_ds.insert(ds) {
            return Err(Error::DuplicateId { kind: "distribution system", id: ds.0 });
        }
        let ts_pccs = ts
            .pcc_map
            .get(&ds)
            .ok_or_else(|| Error::InvalidCase(format!("transmission case declares no PCC for DS {ds}")))?;
        if ts_pccs.len() != ds_pccs.len() {
            return Err(Error::InvalidCase(format!(
                "DS {ds}: {} PCC buses on the DS side, {} on the TS side",
                ds_pccs.len(),
                ts_pccs.len()
            )));
        }
        let offset = ds.0.checked_mul(DS_ID_STRIDE).ok_or_else(|| Error::InvalidCase("DS id too large".into()))?;

        let mut bus_map: HashMap<BusId, BusId> = HashMap::new();
        for (ds_bus, ts_bus) in ds_pccs.iter().zip(ts_pccs) {
            let ts_idx = ts.index_of(*ts_bus)?;
            let target = &ts.buses[ts_idx];
            if target.p_d != 0.0 || target.q_d != 0.0 {
                return Err(Error::PccBus { bus: ts_bus.0, reason: "carries load".into() });
            }
            if ts.generators.iter().any(|g| g.bus == *ts_bus) {
                return Err(Error::PccBus { bus: ts_bus.0, reason: "carries a generator".into() });
            }
            bus_map.insert(*ds_bus, *ts_bus);
        }

        for bus in &ds_case.buses {
            if let Some(ts_bus) = bus_map.get(&bus.id) {
                let idx = buses.iter().position(|b| b.id == *ts_bus).expect("PCC bus present");
                let merged = &mut buses[idx];
                merged.kind = BusKind::Pq;
                merged.p_d += bus.p_d;
                merged.q_d += bus.q_d;
                merged.g_s += bus.g_s;
                merged.b_s += bus.b_s;
                merged.v_min = merged.v_min.max(bus.v_min);
                merged.v_max = merged.v_max.min(bus.v_max);
                continue;
            }
            if bus.kind == BusKind::Slack {
                return Err(Error::InvalidCase(format!(
                    "DS {ds}: slack bus {} is not a declared PCC",
                    bus.id
                )));
            }
            let new_id = BusId(offset + bus.id.0);
            if !used_bus_ids.insert(new_id) {
                return Err(Error::DuplicateId { kind: "bus", id: new_id.0 });
            }
            bus_map.insert(bus.id, new_id);
            buses.push(Bus { id: new_id, kind: BusKind::Pq, zone: ds.0, ..bus.clone() });
        }

        for br in &ds_case.branches {
            let mut br = br.clone();
            br.from = bus_map[&br.from];
            br.to = bus_map[&br.to];
            br.zone = ds.0;
            branches.push(br);
        }

        for gen in &ds_case.generators {
            if gen.ds != Some(ds) {
                return Err(Error::InvalidCase(format!(
                    "DS {ds}: generator {} is not a DG of this DS",
                    gen.id
                )));
            }
            let mut gen = gen.clone();
            let old_id = gen.id;
            gen.id = offset + old_id;
            gen.bus = bus_map[&gen.bus];
            if !used_gen_ids.insert(gen.id) {
                return Err(Error::DuplicateId { kind: "generator", id: gen.id });
            }
            if let Some(chart) = ds_case.charts.get(&old_id) {
                charts.insert(gen.id, chart.clone());
            }
            generators.push(gen);
        }
    }

    let pcc_map: BTreeMap<DsId, Vec<BusId>> = ts.pcc_map.clone();
    NetworkCase::new(format!("{}+ds", ts.name), ts.base_mva, buses, branches, generators, charts, pcc_map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_case;

    const TS: &str = "\
name ts
bus
1 slack 0 0 0 0 0.95 1.05 0
2 pq 20 5 0 0 0.95 1.05 0
3 pcc 0 0 0 0 0.95 1.05 0
branch
1 2 0.01 0.1 0 0 1 1 0
2 3 0.01 0.1 0 0 1 1 0
1 3 0.01 0.1 0 0 1 1 0
gen
1 1 0 0 100 -50 50 0.01 10 0
pcc
1 3 1
";

    const DS: &str = "\
name ds
bus
1 slack 0 0 0 0 0.95 1.05 0
2 pq 1 0.5 0 0 0.95 1.05 0
3 pq 2 0.5 0 0 0.95 1.05 0
branch
1 2 0.01 0.02 0 0 1 1 0
2 3 0.01 0.02 0 0 1 1 0
gen
5 3 1 0 2 0 2 0.01 10 0
pcc
1 1 1
";

    #[test]
    fn merges_pcc_bus() {
        let ts = parse_case(TS).unwrap();
        let ds = parse_case(DS).unwrap();
        let full = build_integrated(&ts, std::slice::from_ref(&ds)).unwrap();
        assert_eq!(full.n_buses(), 3 + 3 - 1);
        assert_eq!(full.n_branches(), 5);
        let (p_ts, _) = ts.total_load();
        let (p_ds, _) = ds.total_load();
        assert!((full.total_load().0 - p_ts - p_ds).abs() < 1e-12);
        let dg = &full.generators[1];
        assert_eq!(dg.id, DS_ID_STRIDE + 5);
        assert_eq!(dg.bus, BusId(DS_ID_STRIDE + 3));
        assert!(full.bus(BusId(DS_ID_STRIDE + 2)).unwrap().zone == 1);
    }

    #[test]
    fn empty_list_is_identity() {
        let ts = parse_case(TS).unwrap();
        assert_eq!(build_integrated(&ts, &[]).unwrap(), ts);
    }

    #[test]
    fn pcc_with_generator_rejected() {
        let ts_text = TS.replace("3 pcc 0 0", "3 pq 0 0").replace("gen\n1 1 0", "gen\n2 3 0 0 10 0 0 0 1 0\n1 1 0");
        let ts = parse_case(&ts_text).unwrap();
        let ds = parse_case(DS).unwrap();
        assert!(matches!(build_integrated(&ts, &[ds]), Err(Error::PccBus { bus: 3, .. })));
    }
}
