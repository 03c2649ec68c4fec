use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{Label, LabeledDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowTarget {
    Active,
    Reactive,
}

/// `y(x) = xᵀ A x + bᵀ x + c`, with `A` symmetric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: f64,
    pub target: FlowTarget,
    pub pcc_index: usize,
}

impl QuadraticModel {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.a.len() != d || self.a.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension(format!("quadratic term is not {d}x{d}")));
        }
        for i in 0..d {
            for k in 0..i {
                if (self.a[i][k] - self.a[k][i]).abs() > 1e-12 * (1.0 + self.a[i][k].abs()) {
                    return Err(Error::Invalid(format!("quadratic term not symmetric at ({i}, {k})")));
                }
            }
        }
        if self.a.iter().flatten().chain(&self.b).chain(std::iter::once(&self.c)).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite regression coefficient".into()));
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut y = self.c;
        for (i, xi) in x.iter().enumerate() {
            y += self.b[i] * xi;
            y += xi * self.a[i].iter().zip(x).map(|(a, xk)| a * xk).sum::<f64>();
        }
        y
    }

    /// `2 A x + b`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.b[i] + 2.0 * self.a[i].iter().zip(x).map(|(a, xk)| a * xk).sum::<f64>()).collect()
    }
}

/// Monomials `1, x_i, x_i x_k (i ≤ k)` in that order.
pub fn quadratic_features(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut f = Vec::with_capacity(1 + d + d * (d + 1) / 2);
    f.push(1.0);
    f.extend_from_slice(x);
    for i in 0..d {
        for k in i..d {
            f.push(x[i] * x[k]);
        }
    }
    f
}

const RANK_TOL: f64 = 1e-10;

/// Least-squares fit over quadratic monomials. Inputs are centered and
/// scaled before a QR solve, and the coefficients mapped back to raw
/// coordinates; a rank-deficient design falls back to the SVD minimum-norm
/// solution.
pub fn fit_quadratic(xs: &[Vec<f64>], ys: &[f64], target: FlowTarget, pcc_index: usize) -> Result<QuadraticModel> {
    let d = xs.first().map_or(0, Vec::len);
    let m = 1 + d + d * (d + 1) / 2;
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} inputs, {} targets", xs.len(), ys.len())));
    }
    if xs.len() < m {
        return Err(Error::Dataset(format!("{} rows for {m} quadratic features", xs.len())));
    }
    if xs.iter().any(|x| x.len() != d) {
        return Err(Error::Dimension("ragged inputs".into()));
    }
    let n = xs.len();
    let mut mean = vec![0.0; d];
    for x in xs {
        for (mu, v) in mean.iter_mut().zip(x) {
            *mu += v / n as f64;
        }
    }
    let mut scale = vec![0.0f64; d];
    for x in xs {
        for k in 0..d {
            scale[k] = scale[k].max((x[k] - mean[k]).abs());
        }
    }
    for s in &mut scale {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let design = DMatrix::from_fn(n, m, |r, c| {
        let z: Vec<f64> = (0..d).map(|k| (xs[r][k] - mean[k]) / scale[k]).collect();
        quadratic_features(&z)[c]
    });
    let rhs = DVector::from_column_slice(ys);

    let qr = design.clone().qr();
    let r = qr.r();
    let r_max = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let theta = if r.diagonal().iter().all(|v| v.abs() > RANK_TOL * r_max) {
        let qty = qr.q().transpose() * &rhs;
        r.solve_upper_triangular(&qty).ok_or_else(|| Error::Invalid("triangular solve failed".into()))?
    } else {
        log::warn!("rank-deficient regression design ({n} rows, {m} features); using minimum-norm solution");
        design.svd(true, true).solve(&rhs, RANK_TOL * r_max).map_err(|e| Error::Invalid(e.to_string()))?
    };

    // Coefficients on z = D (x - mean), D = diag(1/scale).
    let mut a_z = DMatrix::zeros(d, d);
    let mut k = 1 + d;
    for i in 0..d {
        for j in i..d {
            if i == j {
                a_z[(i, i)] = theta[k];
            } else {
                a_z[(i, j)] = theta[k] / 2.0;
                a_z[(j, i)] = theta[k] / 2.0;
            }
            k += 1;
        }
    }
    let b_z = DVector::from_fn(d, |i, _| theta[1 + i]);
    let dinv = DMatrix::from_diagonal(&DVector::from_fn(d, |i, _| 1.0 / scale[i]));
    let mu = DVector::from_column_slice(&mean);
    let a = &dinv * &a_z * &dinv;
    let b = &dinv * &b_z - 2.0 * &a * &mu;
    let c = theta[0] - b_z.dot(&(&dinv * &mu)) + mu.dot(&(&a * &mu));

    let model = QuadraticModel {
        a: (0..d).map(|i| (0..d).map(|j| 0.5 * (a[(i, j)] + a[(j, i)])).collect()).collect(),
        b: b.iter().copied().collect(),
        c,
        target,
        pcc_index,
    };
    model.validate()?;
    Ok(model)
}

/// Inputs and regression targets for one PCC flow: feasible rows only, with
/// target `−flow / base_mva` (per unit, negated DS→TS exchange).
pub fn flow_targets(data: &LabeledDataset, pcc: usize, target: FlowTarget, base_mva: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    data.rows
        .iter()
        .filter(|r| r.label == Label::Feasible)
        .filter_map(|r| {
            let flows = match target {
                FlowTarget::Active => r.p_pcc.as_ref(),
                FlowTarget::Reactive => r.q_pcc.as_ref(),
            }?;
            Some((r.x.clone(), -flows[pcc] / base_mva))
        })
        .unzip()
}

/// Active and reactive regressors for every PCC of the dataset.
pub fn train_pq(train: &LabeledDataset, base_mva: f64) -> Result<Vec<super::PccModels>> {
    (0..train.n_pcc)
        .map(|u| {
            let fit = |target| {
                let (xs, ys) = flow_targets(train, u, target, base_mva);
                fit_quadratic(&xs, &ys, target, u)
            };
            Ok(super::PccModels { p: fit(FlowTarget::Active)?, q: fit(FlowTarget::Reactive)? })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub mae: f64,
}

pub fn regression_metrics(model: &QuadraticModel, xs: &[Vec<f64>], ys: &[f64]) -> Result<RegressionMetrics> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} inputs, {} targets", xs.len(), ys.len())));
    }
    let n = xs.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let e = model.predict(x) - y;
        se += e * e;
        ae += e.abs();
    }
    Ok(RegressionMetrics { rmse: (se / n).sqrt(), mae: ae / n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|k| rng.gen_range(0.0..1.0) * (k + 1) as f64 + 0.9).collect()).collect()
    }

    #[test]
    fn recovers_known_quadratic() {
        let truth = QuadraticModel {
            a: vec![vec![0.5, -0.25, 0.0], vec![-0.25, 1.0, 0.1], vec![0.0, 0.1, -0.3]],
            b: vec![1.0, -2.0, 0.5],
            c: 3.0,
            target: FlowTarget::Active,
            pcc_index: 0,
        };
        let xs = points(200, 3, 1);
        let ys: Vec<f64> = xs.iter().map(|x| truth.predict(x)).collect();
        let fit = fit_quadratic(&xs, &ys, FlowTarget::Active, 0).unwrap();
        for i in 0..3 {
            assert!((fit.b[i] - truth.b[i]).abs() < 1e-8, "b[{i}]");
            for k in 0..3 {
                assert!((fit.a[i][k] - truth.a[i][k]).abs() < 1e-8, "a[{i}][{k}]");
            }
        }
        assert!((fit.c - truth.c).abs() < 1e-8);
    }

    #[test]
    fn constant_target() {
        let xs = points(50, 2, 2);
        let fit = fit_quadratic(&xs, &vec![4.25; 50], FlowTarget::Reactive, 1).unwrap();
        assert!(fit.a.iter().flatten().chain(&fit.b).all(|v| v.abs() < 1e-10));
        assert!((fit.c - 4.25).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_design_still_fits() {
        // Second coordinate duplicates the first.
        let xs: Vec<Vec<f64>> = points(40, 1, 3).into_iter().map(|x| vec![x[0], x[0]]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x[0] + x[0] * x[0]).collect();
        let fit = fit_quadratic(&xs, &ys, FlowTarget::Active, 0).unwrap();
        let m = regression_metrics(&fit, &xs, &ys).unwrap();
        assert!(m.rmse < 1e-8);
    }

    #[test]
    fn metrics_examples() {
        let zero = QuadraticModel { a: vec![vec![0.0]], b: vec![0.0], c: 1.0, target: FlowTarget::Active, pcc_index: 0 };
        assert_eq!(regression_metrics(&zero, &[vec![3.0]], &[1.0]).unwrap(), RegressionMetrics { rmse: 0.0, mae: 0.0 });
        let m = regression_metrics(&zero, &[vec![3.0]], &[1.5]).unwrap();
        assert_eq!((m.rmse, m.mae), (0.5, 0.5));
        assert!(fit_quadratic(&[vec![1.0]], &[1.0], FlowTarget::Active, 0).is_err());
    }
}
