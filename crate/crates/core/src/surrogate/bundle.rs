use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlowTarget, PolytopeModel, QuadraticModel, TrainingMeta};
use crate::error::{Error, Result};
use crate::netmodel::{polygon_from_vertices, CostPoly, DsId, NetworkCase, PQChart};
use crate::powerflow::ds_layout;
use crate::sampling::sampling_bounds;

/// Regressors for one PCC. Targets are the negated DS→TS flows in per
/// unit on `base_mva`, so `P(x) + p_pcc = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PccModels {
    pub p: QuadraticModel,
    pub q: QuadraticModel,
}

/// Everything a DSO shares with the TSO: the feasibility polytope, PCC flow
/// regressors, the operating box, DG charts and DG costs, in the DG order
/// of the DS case.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateBundle {
    pub ds: DsId,
    pub n_pcc: usize,
    pub n_dg: usize,
    pub base_mva: f64,
    /// Box over `[v_pcc (p.u.); p_dg (MW); q_dg (MVAr)]`.
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub fr: PolytopeModel,
    pub pcc: Vec<PccModels>,
    pub charts: Vec<PQChart>,
    pub costs: Vec<CostPoly>,
    pub provenance: Option<String>,
}

impl SurrogateBundle {
    pub fn dim(&self) -> usize {
        self.n_pcc + 2 * self.n_dg
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let dims = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Dimension(format!("bundle for DS {}: {what} has {got} entries, expected {want}", self.ds.0)))
            }
        };
        dims("x_min", self.x_min.len(), d)?;
        dims("x_max", self.x_max.len(), d)?;
        dims("pcc", self.pcc.len(), self.n_pcc)?;
        dims("charts", self.charts.len(), self.n_dg)?;
        dims("costs", self.costs.len(), self.n_dg)?;
        self.fr.validate()?;
        if self.fr.n_h() > 0 {
            dims("facet rows", self.fr.dim(), d)?;
        }
        for (u, m) in self.pcc.iter().enumerate() {
            for (model, target) in [(&m.p, FlowTarget::Active), (&m.q, FlowTarget::Reactive)] {
                model.validate()?;
                dims("regressor", model.dim(), d)?;
                if model.target != target || model.pcc_index != u {
                    return Err(Error::Schema(format!("regressor {u} is labeled {:?}/{}", model.target, model.pcc_index)));
                }
            }
        }
        if self.x_min.iter().zip(&self.x_max).any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::Schema("x bounds must be finite with x_min ≤ x_max".into()));
        }
        if !(self.base_mva > 0.0) {
            return Err(Error::Schema("base_mva must be positive".into()));
        }
        Ok(())
    }
}

/// Charts of the DGs of a standalone DS case, in DG order; DGs without an
/// explicit chart get their rectangular box.
pub fn ds_charts(ds_case: &NetworkCase) -> Result<Vec<PQChart>> {
    let (_, _, dgs) = ds_layout(ds_case)?;
    dgs.iter().map(|&g| ds_case.chart_for(g)).collect()
}

/// Assembles the bundle a DSO exports: trained models plus the operating
/// box (PCC voltages over `v_band`, DG charts' bounding boxes), the charts
/// and the DG costs of `ds_case`.
pub fn build_bundle(
    ds_case: &NetworkCase,
    fr: PolytopeModel,
    pcc: Vec<PccModels>,
    v_band: (f64, f64),
) -> Result<SurrogateBundle> {
    let (ds, pccs, dgs) = ds_layout(ds_case)?;
    let charts = ds_charts(ds_case)?;
    let (x_min, x_max) = sampling_bounds(pccs.len(), &charts, v_band).into_iter().unzip();
    let bundle = SurrogateBundle {
        ds,
        n_pcc: pccs.len(),
        n_dg: dgs.len(),
        base_mva: ds_case.base_mva,
        x_min,
        x_max,
        fr,
        pcc,
        charts,
        costs: dgs.iter().map(|&g| ds_case.generators[g].cost).collect(),
        provenance: None,
    };
    bundle.validate()?;
    Ok(bundle)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PccFile {
    p: QuadraticFile,
    q: QuadraticFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FacetFile {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    #[serde(default)]
    training: TrainingMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    ds_id: u32,
    n_pcc: usize,
    n_dg: usize,
    base_mva: f64,
    x_min: Vec<f64>,
    x_max: Vec<f64>,
    fr: FacetFile,
    pcc: Vec<PccFile>,
    charts: Vec<Vec<[f64; 2]>>,
    costs: Vec<CostPoly>,
    meta: MetaFile,
}

/// Keys a bundle file may contain.
pub(crate) const BUNDLE_KEYS: &[&str] = &[
    "ds_id", "n_pcc", "n_dg", "base_mva", "x_min", "x_max", "fr", "W", "b", "pcc", "p", "q", "A", "c", "charts",
    "costs", "a", "meta", "training", "provenance", "n_h", "w_10", "w_01", "lr", "batch", "max_epochs", "best_epoch",
    "best_val_loss", "seed",
];

fn to_file(b: &SurrogateBundle) -> BundleFile {
    let quad = |m: &QuadraticModel| QuadraticFile { a: m.a.clone(), b: m.b.clone(), c: m.c };
    BundleFile {
        ds_id: b.ds.0,
        n_pcc: b.n_pcc,
        n_dg: b.n_dg,
        base_mva: b.base_mva,
        x_min: b.x_min.clone(),
        x_max: b.x_max.clone(),
        fr: FacetFile { w: b.fr.w.clone(), b: b.fr.b.clone() },
        pcc: b.pcc.iter().map(|m| PccFile { p: quad(&m.p), q: quad(&m.q) }).collect(),
        charts: b.charts.iter().map(|c| c.vertices.clone()).collect(),
        costs: b.costs.clone(),
        meta: MetaFile { training: b.fr.meta.clone(), provenance: b.provenance.clone() },
    }
}

fn from_file(f: BundleFile) -> Result<SurrogateBundle> {
    let quad = |q: QuadraticFile, target, u| QuadraticModel { a: q.a, b: q.b, c: q.c, target, pcc_index: u };
    let mut fr = PolytopeModel { w: f.fr.w, b: f.fr.b, meta: f.meta.training };
    fr.meta.n_h = fr.b.len();
    let bundle = SurrogateBundle {
        ds: DsId(f.ds_id),
        n_pcc: f.n_pcc,
        n_dg: f.n_dg,
        base_mva: f.base_mva,
        x_min: f.x_min,
        x_max: f.x_max,
        fr,
        pcc: f
            .pcc
            .into_iter()
            .enumerate()
            .map(|(u, m)| PccModels { p: quad(m.p, FlowTarget::Active, u), q: quad(m.q, FlowTarget::Reactive, u) })
            .collect(),
        charts: f.charts.iter().map(|v| polygon_from_vertices(v)).collect::<Result<_>>()?,
        costs: f.costs,
        provenance: f.meta.provenance,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn bundle_to_json(bundle: &SurrogateBundle) -> Result<String> {
    bundle.validate()?;
    Ok(serde_json::to_string_pretty(&to_file(bundle))?)
}

pub fn bundle_from_json(text: &str) -> Result<SurrogateBundle> {
    let file: BundleFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    from_file(file)
}

pub fn export_bundle(bundle: &SurrogateBundle, path: &Path) -> Result<()> {
    std::fs::write(path, bundle_to_json(bundle)?)?;
    Ok(())
}

pub fn import_bundle(path: &Path) -> Result<SurrogateBundle> {
    bundle_from_json(&std::fs::read_to_string(path)?)
}

/// Looks for DS network data in a document shared with the TSO: keys outside
/// the bundle schema, and numbers equal (to 1e-9 relative) to a branch
/// resistance, reactance or susceptance or a nonzero bus load of `ds_case`,
/// in per unit or in ohms. Integer fields are not compared. Values under [`SHARED_KEYS`] (DG charts and
/// costs, the operating box, training settings) are published on purpose,
/// are mostly round numbers, and are not compared. Ohm values are checked
/// when the case's `base_kv` is given.
pub fn scan_for_network_data(json: &str, ds_case: &NetworkCase, base_kv: Option<f64>) -> Result<Vec<String>> {
    let doc: serde_json::Value = serde_json::from_str(json)?;
    let mut secret: Vec<(f64, String)> = Vec::new();
    let z_base = base_kv.map(|kv| kv * kv / ds_case.base_mva);
    for br in &ds_case.branches {
        for (v, what) in [(br.r, "r"), (br.x, "x"), (br.b_sh, "b")] {
            if v != 0.0 {
                secret.push((v, format!("branch {}-{} {what}", br.from.0, br.to.0)));
                if let Some(z) = z_base {
                    secret.push((v * z, format!("branch {}-{} {what} (ohm)", br.from.0, br.to.0)));
                }
            }
        }
    }
    for bus in &ds_case.buses {
        for (v, what) in [(bus.p_d, "p_d"), (bus.q_d, "q_d")] {
            if v != 0.0 {
                secret.push((v, format!("bus {} {what}", bus.id.0)));
                secret.push((v / ds_case.base_mva, format!("bus {} {what} (p.u.)", bus.id.0)));
            }
        }
    }
    let mut findings = Vec::new();
    scan_value(&doc, "", &secret, &mut findings);
    Ok(findings)
}

/// Bundle fields exempt from the value comparison in [`scan_for_network_data`].
pub const SHARED_KEYS: &[&str] = &["charts", "costs", "x_min", "x_max", "meta"];

fn scan_value(v: &serde_json::Value, path: &str, secret: &[(f64, String)], out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                if !BUNDLE_KEYS.contains(&k.as_str()) {
                    out.push(format!("{path}/{k}: key outside the bundle schema"));
                }
                if !SHARED_KEYS.contains(&k.as_str()) {
                    scan_value(child, &format!("{path}/{k}"), secret, out);
                }
            }
        }
        serde_json::Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                scan_value(child, &format!("{path}/{i}"), secret, out);
            }
        }
        // Integers are counts and ids.
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                for (s, what) in secret {
                    if x != 0.0 && (x - s).abs() <= 1e-9 * s.abs() {
                        out.push(format!("{path}: value {x} equals {what}"));
                    }
                }
            }
        }
        _ => {}
    }
}
