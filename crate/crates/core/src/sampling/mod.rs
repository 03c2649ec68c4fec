//! Latin hypercube sampling of DS operating vectors, feasibility labeling
//! through the DS power flow, dataset splitting and CSV persistence.

mod csvio;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::netmodel::{serialize_case, NetworkCase, PQChart};
use crate::powerflow::{ds_layout, ds_response, DsVector, ResponseOptions};

pub use csvio::{csv_header, read_csv, write_csv};

/// Class label; infeasible points are the positive class of the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Feasible = 0,
    Infeasible = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[v_pcc; p_dg; q_dg]` in p.u., MW, MVAr.
    pub x: Vec<f64>,
    pub label: Label,
    /// DS→TS flows per PCC (MW, MVAr); present exactly for feasible rows.
    pub p_pcc: Option<Vec<f64>>,
    pub q_pcc: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    /// SHA-256 of the canonical serialization of the DS case.
    pub case_hash: String,
    pub n_feasible: usize,
    pub n_infeasible: usize,
    /// Infeasible rows decided by chart membership without a power flow.
    pub n_chart_rejected: usize,
    pub n_nonconverged: usize,
    pub v_band: (f64, f64),
    /// Producing command line, when written by a tool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub n_pcc: usize,
    pub n_dg: usize,
    pub rows: Vec<Sample>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn dim(&self) -> usize {
        self.n_pcc + 2 * self.n_dg
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let feasible = self.rows.iter().filter(|r| r.label == Label::Feasible).count();
        (feasible, self.rows.len() - feasible)
    }

    /// Copy holding the given rows, with class counts recomputed.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        let mut out = LabeledDataset {
            n_pcc: self.n_pcc,
            n_dg: self.n_dg,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            meta: self.meta.clone(),
        };
        out.refresh_counts();
        out
    }

    pub fn refresh_counts(&mut self) {
        let (f, i) = self.class_counts();
        self.meta.n_feasible = f;
        self.meta.n_infeasible = i;
    }

    /// Checks row lengths and the flows-present ⇔ feasible invariant.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (k, r) in self.rows.iter().enumerate() {
            if r.x.len() != d {
                return Err(Error::Dataset(format!("row {k}: {} features, expected {d}", r.x.len())));
            }
            let has = r.p_pcc.is_some() && r.q_pcc.is_some();
            if has != (r.label == Label::Feasible) {
                return Err(Error::Dataset(format!("row {k}: flows must be present exactly for feasible rows")));
            }
            if let (Some(p), Some(q)) = (&r.p_pcc, &r.q_pcc) {
                if p.len() != self.n_pcc || q.len() != self.n_pcc {
                    return Err(Error::Dataset(format!("row {k}: wrong number of PCC flows")));
                }
            }
        }
        Ok(())
    }
}

/// Latin hypercube design: `n` rows, one per stratum in every dimension.
pub fn lhs(n: usize, bounds: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Invalid("LHS needs at least one sample".into()));
    }
    if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi)) {
        return Err(Error::Invalid(format!("LHS bound ({lo}, {hi}) is empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![0.0; bounds.len()]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        perm.shuffle(&mut rng);
        let width = (hi - lo) / n as f64;
        for (row, &stratum) in out.iter_mut().zip(&perm) {
            // Offsets stay a hair away from the stratum edges so rounding
            // can never move a point into a neighbouring stratum.
            let u: f64 = rng.gen_range(1e-9..1.0 - 1e-9);
            row[d] = lo + (stratum as f64 + u) * width;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct SamplingOptions {
    pub response: ResponseOptions,
    /// Worker threads for labeling; results do not depend on it.
    pub jobs: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions { response: ResponseOptions::default(), jobs: 1 }
    }
}

/// SHA-256 of the case's canonical text, lowercase hex.
pub fn case_hash(case: &NetworkCase) -> String {
    Sha256::digest(serialize_case(case).as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// The sampling box: PCC magnitudes over the voltage band, DG set-points over
/// each chart's bounding rectangle.
pub fn sampling_bounds(n_pcc: usize, charts: &[PQChart], v_band: (f64, f64)) -> Vec<(f64, f64)> {
    let mut b = vec![v_band; n_pcc];
    b.extend(charts.iter().map(|c| (c.bbox.0, c.bbox.1)));
    b.extend(charts.iter().map(|c| (c.bbox.2, c.bbox.3)));
    b
}

/// Labels `n` LHS points of the DS operating space.
pub fn generate_dataset(
    ds_case: &NetworkCase,
    charts: &[PQChart],
    n: usize,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<LabeledDataset> {
    let (_, pccs, dgs) = ds_layout(ds_case)?;
    if charts.len() != dgs.len() {
        return Err(Error::Dimension(format!("{} charts for {} DGs", charts.len(), dgs.len())));
    }
    let (n_pcc, n_dg) = (pccs.len(), dgs.len());
    let v_band = opts.response.v_band;
    let points = lhs(n, &sampling_bounds(n_pcc, charts, v_band), seed)?;

    let label_one = |x: &Vec<f64>| -> Result<(Sample, bool, bool)> {
        let dv = DsVector::from_slice(x, n_pcc, n_dg)?;
        let outside = charts.iter().enumerate().any(|(k, c)| !c.contains(dv.p_dg[k], dv.q_dg[k], 0.0));
        if outside {
            return Ok((Sample { x: x.clone(), label: Label::Infeasible, p_pcc: None, q_pcc: None }, true, false));
        }
        let resp = ds_response(ds_case, &dv, &opts.response)?;
        let nonconv = resp.p_pcc.is_empty();
        let sample = if resp.report.feasible {
            Sample { x: x.clone(), label: Label::Feasible, p_pcc: Some(resp.p_pcc), q_pcc: Some(resp.q_pcc) }
        } else {
            Sample { x: x.clone(), label: Label::Infeasible, p_pcc: None, q_pcc: None }
        };
        Ok((sample, false, nonconv))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let labeled: Vec<(Sample, bool, bool)> =
        pool.install(|| points.par_iter().map(label_one).collect::<Result<Vec<_>>>())?;

    let mut meta = DatasetMeta {
        seed,
        case_hash: case_hash(ds_case),
        v_band,
        n_chart_rejected: labeled.iter().filter(|l| l.1).count(),
        n_nonconverged: labeled.iter().filter(|l| l.2).count(),
        ..Default::default()
    };
    let rows: Vec<Sample> = labeled.into_iter().map(|l| l.0).collect();
    meta.n_feasible = rows.iter().filter(|r| r.label == Label::Feasible).count();
    meta.n_infeasible = rows.len() - meta.n_feasible;
    Ok(LabeledDataset { n_pcc, n_dg, rows, meta })
}

/// Seeded shuffle followed by a `ratio` / `1 - ratio` split.
pub fn split_dataset(ds: &LabeledDataset, ratio: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = ds.len();
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Dataset(format!("split of {n} rows at {ratio} leaves one side empty")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((ds.subset(&idx[..n_train]), ds.subset(&idx[n_train..])))
}
