//! DS surrogates: the max-aggregator classifier whose weights form the
//! feasibility polytope, quadratic PCC-flow regressors, evaluation metrics
//! and the bundle handed from the DSO to the TSO.

mod bundle;
mod prune;
mod quadratic;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{Label, LabeledDataset};

pub use bundle::{
    build_bundle, bundle_from_json, bundle_to_json, ds_charts, export_bundle, import_bundle, scan_for_network_data, PccModels, SurrogateBundle,
    SHARED_KEYS,
};
pub use prune::prune_facets;
pub use quadratic::{
    fit_quadratic, flow_targets, quadratic_features, regression_metrics, train_pq, FlowTarget, QuadraticModel,
    RegressionMetrics,
};
pub use train::{train_fr, TrainOptions};

/// Pre-activations are clamped to this magnitude inside the loss.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_h: usize,
    pub w_10: f64,
    pub w_01: f64,
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub seed: u64,
}

/// Single affine layer `o = W x + b` followed by `max` and a sigmoid.
/// A point is feasible iff `max(W x + b) ≤ 0`, i.e. `A_FR x ≤ b_FR` with
/// `A_FR = W` and `b_FR = -b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeModel {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub meta: TrainingMeta,
}

impl PolytopeModel {
    pub fn new(w: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let model = PolytopeModel { meta: TrainingMeta { n_h: b.len(), ..Default::default() }, w, b };
        model.validate()?;
        Ok(model)
    }

    /// Builds the model from facets `A x ≤ b_fr`.
    pub fn from_facets(a_fr: Vec<Vec<f64>>, b_fr: &[f64]) -> Result<Self> {
        Self::new(a_fr, b_fr.iter().map(|v| -v).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.len() != self.b.len() {
            return Err(Error::Dimension(format!("{} weight rows, {} biases", self.w.len(), self.b.len())));
        }
        let d = self.w.first().map_or(0, Vec::len);
        if self.w.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged weight matrix".into()));
        }
        if self.w.iter().flatten().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite polytope coefficient".into()));
        }
        Ok(())
    }

    pub fn n_h(&self) -> usize {
        self.b.len()
    }

    /// Input dimension (0 for a model without rows).
    pub fn dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    pub fn a_fr(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn b_fr(&self) -> Vec<f64> {
        self.b.iter().map(|v| -v).collect()
    }

    /// `max_i (a_i·x − b_fr_i)` with the lowest maximizing index, or
    /// `(-inf, None)` when there are no rows.
    pub fn max_margin(&self, x: &[f64]) -> (f64, Option<usize>) {
        let mut best = (f64::NEG_INFINITY, None);
        for (i, (row, b)) in self.w.iter().zip(&self.b).enumerate() {
            let o = dot(row, x) + b;
            if o > best.0 {
                best = (o, Some(i));
            }
        }
        best
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^f)` without overflow.
fn softplus(f: f64) -> f64 {
    f.max(0.0) + (-f.abs()).exp().ln_1p()
}

/// `(f, y)` with `f = max(W x + b)` and `y = sigmoid(f)`, the predicted
/// probability of infeasibility.
pub fn nn_forward(model: &PolytopeModel, x: &[f64]) -> Result<(f64, f64)> {
    if x.len() != model.dim() {
        return Err(Error::Dimension(format!("input of length {} for a {}-dimensional model", x.len(), model.dim())));
    }
    let (f, _) = model.max_margin(x);
    Ok((f, sigmoid(f)))
}

/// Feasible iff `max(A_FR x − b_FR) ≤ tol`. A model without rows accepts
/// everything.
pub fn classify(model: &PolytopeModel, x: &[f64], tol: f64) -> Label {
    if model.max_margin(x).0 <= tol {
        Label::Feasible
    } else {
        Label::Infeasible
    }
}

/// Per-sample loss and `dL/df`, weighted by class.
fn sample_loss(f: f64, label: Label, w_10: f64, w_01: f64) -> (f64, f64) {
    let f = f.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    match label {
        // -ln σ(f) = softplus(-f)
        Label::Infeasible => (w_10 * softplus(-f), w_10 * (sigmoid(f) - 1.0)),
        // -ln(1 - σ(f)) = softplus(f)
        Label::Feasible => (w_01 * softplus(f), w_01 * sigmoid(f)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_w: Vec<Vec<f64>>,
    pub grad_b: Vec<f64>,
}

/// Batch-mean weighted binary cross-entropy with infeasible (class 1)
/// terms weighted by `w_10` and feasible terms by `w_01`. The max routes
/// the gradient to the lowest-index maximizing node.
pub fn loss_and_grad(model: &PolytopeModel, xs: &[Vec<f64>], labels: &[Label], w_10: f64, w_01: f64) -> Result<LossGrad> {
    if xs.len() != labels.len() || xs.is_empty() {
        return Err(Error::Dimension(format!("{} inputs, {} labels", xs.len(), labels.len())));
    }
    if !(w_10 > 0.0 && w_01 > 0.0) {
        return Err(Error::Invalid("class weights must be positive".into()));
    }
    let (n_h, d) = (model.n_h(), model.dim());
    if n_h == 0 {
        return Err(Error::Dimension("model has no hidden nodes".into()));
    }
    let mut out = LossGrad { loss: 0.0, grad_w: vec![vec![0.0; d]; n_h], grad_b: vec![0.0; n_h] };
    let scale = 1.0 / xs.len() as f64;
    for (x, &label) in xs.iter().zip(labels) {
        if x.len() != d {
            return Err(Error::Dimension(format!("input of length {} for a {d}-dimensional model", x.len())));
        }
        let (f, Some(k)) = model.max_margin(x) else { unreachable!() };
        let (l, g) = sample_loss(f, label, w_10, w_01);
        out.loss += l * scale;
        for (gw, xi) in out.grad_w[k].iter_mut().zip(x) {
            *gw += g * xi * scale;
        }
        out.grad_b[k] += g * scale;
    }
    Ok(out)
}

/// Mean weighted loss over a dataset.
pub fn dataset_loss(model: &PolytopeModel, data: &LabeledDataset, w_10: f64, w_01: f64) -> f64 {
    let total: f64 = data.rows.iter().map(|r| sample_loss(model.max_margin(&r.x).0, r.label, w_10, w_01).0).sum();
    total / data.len().max(1) as f64
}

/// Confusion counts and rates. `recall` is the share of feasible points
/// classified feasible; `specificity` the share of infeasible points
/// classified infeasible. A rate over an empty class is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub feasible_as_feasible: usize,
    pub feasible_as_infeasible: usize,
    pub infeasible_as_infeasible: usize,
    pub infeasible_as_feasible: usize,
}

impl ClassificationMetrics {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Result<Self> {
        let (mut ff, mut fi, mut ii, mut i_f) = (0, 0, 0, 0);
        for (truth, pred) in pairs {
            match (truth, pred) {
                (Label::Feasible, Label::Feasible) => ff += 1,
                (Label::Feasible, Label::Infeasible) => fi += 1,
                (Label::Infeasible, Label::Infeasible) => ii += 1,
                (Label::Infeasible, Label::Feasible) => i_f += 1,
            }
        }
        let n = ff + fi + ii + i_f;
        if n == 0 {
            return Err(Error::Dataset("metrics over an empty set".into()));
        }
        let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
        Ok(ClassificationMetrics {
            accuracy: (ff + ii) as f64 / n as f64,
            recall: ratio(ff, fi),
            specificity: ratio(ii, i_f),
            feasible_as_feasible: ff,
            feasible_as_infeasible: fi,
            infeasible_as_infeasible: ii,
            infeasible_as_feasible: i_f,
        })
    }
}

pub fn classification_metrics(model: &PolytopeModel, test: &LabeledDataset) -> Result<ClassificationMetrics> {
    if test.dim() != model.dim() {
        return Err(Error::Dimension(format!("dataset dimension {} vs model {}", test.dim(), model.dim())));
    }
    ClassificationMetrics::from_pairs(test.rows.iter().map(|r| (r.label, classify(model, &r.x, 0.0))))
}
