use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{sample_loss, PolytopeModel, TrainingMeta};
use crate::error::{Error, Result};
use crate::sampling::{Label, LabeledDataset};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub n_h: usize,
    /// Weight on infeasible samples (penalizes infeasible-as-feasible).
    pub w_10: f64,
    /// Weight on feasible samples.
    pub w_01: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Share of the training rows held out for early stopping.
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            n_h: 20,
            w_10: 1.0,
            w_01: 1.0,
            lr: 1e-3,
            max_epochs: 500,
            batch: 256,
            seed: 0,
            validation_fraction: 0.1,
            patience: 30,
        }
    }
}

const INIT_STD: f64 = 0.1;
const INIT_BIAS: f64 = -0.5;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Row-major parameters in standardized coordinates.
struct Params {
    d: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Params {
    fn max_node(&self, z: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, row) in self.w.chunks_exact(self.d).enumerate() {
            let mut o = self.b[k];
            for (a, x) in row.iter().zip(z) {
                o += a * x;
            }
            if o > best.0 {
                best = (o, k);
            }
        }
        best
    }

    fn mean_loss(&self, z: &[f64], labels: &[Label], idx: &[usize], w_10: f64, w_01: f64) -> f64 {
        let total: f64 = idx
            .iter()
            .map(|&i| sample_loss(self.max_node(&z[i * self.d..(i + 1) * self.d]).0, labels[i], w_10, w_01).0)
            .sum();
        total / idx.len().max(1) as f64
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pi, gi) in p.iter_mut().zip(g.iter()) {
                self.m[k] = BETA1 * self.m[k] + (1.0 - BETA1) * gi;
                self.v[k] = BETA2 * self.v[k] + (1.0 - BETA2) * gi * gi;
                *pi -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + ADAM_EPS);
                k += 1;
            }
        }
    }
}

/// Trains the max-aggregator classifier with Adam on standardized inputs,
/// keeping the parameters of the epoch with the lowest validation loss.
/// The returned facets act on raw inputs.
pub fn train_fr(train: &LabeledDataset, opts: &TrainOptions) -> Result<PolytopeModel> {
    let (n_feas, n_inf) = train.class_counts();
    if n_feas == 0 || n_inf == 0 {
        return Err(Error::Dataset(format!("training needs both classes ({n_feas} feasible, {n_inf} infeasible)")));
    }
    if opts.n_h == 0 || opts.batch == 0 {
        return Err(Error::Invalid("n_h and batch must be positive".into()));
    }
    if !(opts.w_10 > 0.0 && opts.w_01 > 0.0 && opts.lr > 0.0) {
        return Err(Error::Invalid("class weights and learning rate must be positive".into()));
    }
    let d = train.dim();
    let n = train.len();

    let mut mean = vec![0.0; d];
    for r in &train.rows {
        for (m, x) in mean.iter_mut().zip(&r.x) {
            *m += x / n as f64;
        }
    }
    let mut std = vec![0.0; d];
    for r in &train.rows {
        for k in 0..d {
            std[k] += (r.x[k] - mean[k]).powi(2) / n as f64;
        }
    }
    for s in &mut std {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let z: Vec<f64> =
        train.rows.iter().flat_map(|r| r.x.iter().enumerate().map(|(k, x)| (x - mean[k]) / std[k])).collect();
    let labels: Vec<Label> = train.rows.iter().map(|r| r.label).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = (opts.validation_fraction * n as f64).round() as usize;
    let (val_idx, fit_idx) = if n_val > 0 && n_val < n { order.split_at(n_val) } else { (&order[..], &order[..]) };
    let (val_idx, mut fit_idx) = (val_idx.to_vec(), fit_idx.to_vec());

    let normal = Normal::new(0.0, INIT_STD).expect("positive std");
    let mut p = Params { d, w: (0..opts.n_h * d).map(|_| normal.sample(&mut rng)).collect(), b: vec![INIT_BIAS; opts.n_h] };
    let mut adam = Adam::new(p.w.len() + p.b.len());
    let mut gw = vec![0.0; p.w.len()];
    let mut gb = vec![0.0; p.b.len()];

    let mut best = (p.mean_loss(&z, &labels, &val_idx, opts.w_10, opts.w_01), 0, p.w.clone(), p.b.clone());
    let mut stale = 0;
    for epoch in 1..=opts.max_epochs {
        fit_idx.shuffle(&mut rng);
        for chunk in fit_idx.chunks(opts.batch) {
            gw.iter_mut().for_each(|g| *g = 0.0);
            gb.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let zi = &z[i * d..(i + 1) * d];
                let (f, k) = p.max_node(zi);
                let g = sample_loss(f, labels[i], opts.w_10, opts.w_01).1 * scale;
                for (gwk, x) in gw[k * d..(k + 1) * d].iter_mut().zip(zi) {
                    *gwk += g * x;
                }
                gb[k] += g;
            }
            adam.step(&mut [&mut p.w, &mut p.b], &[&gw, &gb], opts.lr);
        }
        let val = p.mean_loss(&z, &labels, &val_idx, opts.w_10, opts.w_01);
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: validation loss {val:.6}");
        if val < best.0 {
            best = (val, epoch, p.w.clone(), p.b.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= opts.patience {
                break;
            }
        }
    }

    // Fold the standardization z = (x - mean) / std into the facets.
    let (best_val_loss, best_epoch, w_s, b_s) = best;
    let mut w = Vec::with_capacity(opts.n_h);
    let mut b = Vec::with_capacity(opts.n_h);
    for (row, bias) in w_s.chunks_exact(d).zip(&b_s) {
        let raw: Vec<f64> = row.iter().zip(&std).map(|(a, s)| a / s).collect();
        b.push(bias - raw.iter().zip(&mean).map(|(a, m)| a * m).sum::<f64>());
        w.push(raw);
    }
    let mut model = PolytopeModel::new(w, b)?;
    model.meta = TrainingMeta {
        n_h: opts.n_h,
        w_10: opts.w_10,
        w_01: opts.w_01,
        lr: opts.lr,
        batch: opts.batch,
        max_epochs: opts.max_epochs,
        best_epoch,
        best_val_loss,
        seed: opts.seed,
    };
    Ok(model)
}
