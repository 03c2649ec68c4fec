use minilp::{ComparisonOp, OptimizationDirection, Problem};

use super::{PolytopeModel, TrainingMeta};
use crate::error::{Error, Result};

/// Slack below which a row counts as implied by the others.
const REDUNDANCY_TOL: f64 = 1e-9;

/// Removes facets implied by the box and the remaining facets. Row `i` is
/// dropped when `max (a_i·x − b_fr_i) ≤ 0` over the box intersected with the
/// rows still kept, one LP per row; rows whose LP fails are kept.
pub fn prune_facets(model: &PolytopeModel, bounds: &[(f64, f64)]) -> Result<PolytopeModel> {
    let d = model.dim();
    if bounds.len() != d && model.n_h() > 0 {
        return Err(Error::Dimension(format!("{} bounds for a {d}-dimensional model", bounds.len())));
    }
    // Rows normalized so the tolerance is a distance.
    let rows: Vec<(Vec<f64>, f64)> = model
        .w
        .iter()
        .zip(model.b_fr())
        .map(|(a, b)| {
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            (a.iter().map(|v| v / norm).collect(), b / norm)
        })
        .collect();
    let mut keep = vec![true; rows.len()];
    for i in 0..rows.len() {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..d).map(|k| lp.add_var(rows[i].0[k], bounds[k])).collect();
        for (j, (a, b)) in rows.iter().enumerate() {
            if j != i && keep[j] {
                lp.add_constraint(vars.iter().zip(a).map(|(v, c)| (*v, *c)).collect::<Vec<_>>(), ComparisonOp::Le, *b);
            }
        }
        if let Ok(sol) = lp.solve() {
            if sol.objective() - rows[i].1 <= REDUNDANCY_TOL {
                keep[i] = false;
            }
        }
    }
    let mut out = PolytopeModel::new(
        model.w.iter().zip(&keep).filter(|(_, k)| **k).map(|(w, _)| w.clone()).collect(),
        model.b.iter().zip(&keep).filter(|(_, k)| **k).map(|(b, _)| *b).collect(),
    )?;
    out.meta = TrainingMeta { n_h: out.n_h(), ..model.meta.clone() };
    Ok(out)
}
