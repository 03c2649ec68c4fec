use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Branch, NetworkCase};
use crate::error::{Error, Result};

/// π-model two-port admittances of one branch, per unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchAdmittance {
    pub ff: Complex64,
    pub ft: Complex64,
    pub tf: Complex64,
    pub tt: Complex64,
}

impl BranchAdmittance {
    pub fn of(branch: &Branch) -> Result<Self> {
        let z = Complex64::new(branch.r, branch.x);
        if z.norm() == 0.0 {
            return Err(Error::ZeroImpedance { from: branch.from.0, to: branch.to.0 });
        }
        let ys = z.inv();
        let half_charging = Complex64::new(0.0, branch.b_sh / 2.0);
        let tt = ys + half_charging;
        let tap = branch.tap;
        Ok(BranchAdmittance {
            ff: tt / (tap * tap),
            ft: -ys / tap,
            tf: -ys / tap,
            tt,
        })
    }
}

/// Sparse bus admittance matrix stored as per-row `(column, value)` lists
/// with columns in ascending order.
#[derive(Clone, Debug, Default)]
pub struct Admittance {
    n: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl Admittance {
    pub(crate) fn empty() -> Self {
        Admittance::default()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match self.rows[i].binary_search_by_key(&j, |(c, _)| *c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(self.n, self.n, Complex64::new(0.0, 0.0));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, y) in row {
                m[(i, j)] = y;
            }
        }
        m
    }

    fn add(&mut self, i: usize, j: usize, y: Complex64) {
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |(c, _)| *c) {
            Ok(pos) => row[pos].1 += y,
            Err(pos) => row.insert(pos, (j, y)),
        }
    }
}

/// Assembles the bus admittance matrix from closed branches and bus shunts.
pub fn build_admittance(case: &NetworkCase) -> Result<Admittance> {
    let n = case.n_buses();
    let mut y = Admittance { n, rows: vec![Vec::new(); n] };
    for branch in case.branches.iter().filter(|b| b.closed) {
        let f = case.index_of(branch.from)?;
        let t = case.index_of(branch.to)?;
        let stamp = BranchAdmittance::of(branch)?;
        y.add(f, f, stamp.ff);
        y.add(f, t, stamp.ft);
        y.add(t, f, stamp.tf);
        y.add(t, t, stamp.tt);
    }
    for (i, bus) in case.buses.iter().enumerate() {
        if bus.g_s != 0.0 || bus.b_s != 0.0 {
            y.add(i, i, Complex64::new(bus.g_s, bus.b_s) / case.base_mva);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Bus, BusKind};
    use std::collections::BTreeMap;

    fn two_bus(r: f64, x: f64) -> Result<NetworkCase> {
        NetworkCase::new(
            "two",
            100.0,
            vec![Bus::new(1, BusKind::Slack, 0.0, 0.0, 0.9, 1.1), Bus::new(2, BusKind::Pq, 0.0, 0.0, 0.9, 1.1)],
            vec![Branch::line(1, 2, r, x)],
            vec![],
            BTreeMap::new(),
            BTreeMap::new(),
        )
    }

    #[test]
    fn single_lossless_line() {
        let case = two_bus(0.0, 0.1).unwrap();
        let y = case.admittance().to_dense();
        let c = |re, im| Complex64::new(re, im);
        let expected = [[c(0.0, -10.0), c(0.0, 10.0)], [c(0.0, 10.0), c(0.0, -10.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((y[(i, j)] - expected[i][j]).norm() < 1e-12, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn zero_impedance_rejected() {
        assert!(matches!(two_bus(0.0, 0.0), Err(Error::ZeroImpedance { .. })));
    }

    #[test]
    fn open_branch_not_stamped() {
        let mut case = two_bus(0.01, 0.1).unwrap();
        case.branches[0].closed = false;
        let y = build_admittance(&case).unwrap();
        assert_eq!(y.row(0).len(), 0);
        assert_eq!(y.row(1).len(), 0);
    }
}
