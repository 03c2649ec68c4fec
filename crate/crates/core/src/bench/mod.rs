//! Paired benchmark of the standard integrated OPF against the
//! privacy-preserving OPF over random cost draws.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acopf::{assemble_standard_with_charts, solve_opf, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::netmodel::{CostPoly, NetworkCase};
use crate::ppopf::{assemble_pp, solve_pp, verify_dispatch};
use crate::surrogate::SurrogateBundle;

/// Uniform ranges for the quadratic and linear cost coefficients; the
/// constant term is always zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRanges {
    /// $/MW²h.
    pub a: (f64, f64),
    /// $/MWh.
    pub b: (f64, f64),
}

impl Default for CostRanges {
    fn default() -> Self {
        CostRanges { a: (0.01, 0.05), b: (5.0, 50.0) }
    }
}

impl CostRanges {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("a", self.a), ("b", self.b)] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Invalid(format!("cost range {name} = [{lo}, {hi}] must be positive and ordered")));
            }
        }
        Ok(())
    }
}

/// Seed of trial `trial` derived from the master seed, independent of the
/// order in which trials run.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_costs(n_gen: usize, seed: u64, ranges: &CostRanges) -> Vec<CostPoly> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_gen)
        .map(|_| {
            let a = rng.gen_range(ranges.a.0..=ranges.a.1);
            let b = rng.gen_range(ranges.b.0..=ranges.b.1);
            CostPoly::new(a, b, 0.0)
        })
        .collect()
}

/// One cost set per trial, one polynomial per generator of `case` in file
/// order (conventional units and DGs alike).
pub fn random_costs(case: &NetworkCase, n_trials: usize, seed: u64, ranges: &CostRanges) -> Result<Vec<Vec<CostPoly>>> {
    ranges.validate()?;
    Ok((0..n_trials).map(|t| draw_costs(case.generators.len(), trial_seed(seed, t), ranges)).collect())
}

/// Installs a cost set (in `integrated` generator order) on the integrated
/// case, the TS case and the bundles.
pub fn apply_costs(
    integrated: &NetworkCase,
    ts_case: &NetworkCase,
    bundles: &[SurrogateBundle],
    costs: &[CostPoly],
) -> Result<(NetworkCase, NetworkCase, Vec<SurrogateBundle>)> {
    if costs.len() != integrated.generators.len() {
        return Err(Error::Dimension(format!(
            "{} cost polynomials for {} generators",
            costs.len(),
            integrated.generators.len()
        )));
    }
    let mut full = integrated.clone();
    for (g, c) in full.generators.iter_mut().zip(costs) {
        g.cost = *c;
    }
    let mut ts = ts_case.clone();
    for g in &mut ts.generators {
        let k = integrated
            .generators
            .iter()
            .position(|h| h.id == g.id && !h.is_dg())
            .ok_or_else(|| Error::InvalidCase(format!("TS generator {} missing from the integrated case", g.id)))?;
        g.cost = costs[k];
    }
    let mut out = bundles.to_vec();
    for b in &mut out {
        let dgs = integrated.dgs_of(b.ds);
        if dgs.len() != b.n_dg {
            return Err(Error::Dimension(format!("DS {}: bundle has {} DGs, integrated case {}", b.ds, b.n_dg, dgs.len())));
        }
        b.costs = dgs.iter().map(|&g| costs[g]).collect();
    }
    Ok((full, ts, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub cost_seed: u64,
    /// $/h; `None` when the solve did not finish optimal.
    pub std_objective: Option<f64>,
    pub pp_raw_objective: Option<f64>,
    pub pp_verified_objective: Option<f64>,
    /// Solve-only wall clock, seconds.
    pub std_time: f64,
    pub pp_time: f64,
    pub feasible_true: bool,
    pub std_status: SolveStatus,
    pub pp_status: SolveStatus,
    pub verify_status: Option<SolveStatus>,
    /// Largest PCC exchange error of the regressors at the verified point,
    /// MW or MVAr.
    pub pcc_flow_error: Option<f64>,
}

impl TrialRecord {
    /// `(pp_verified − std) / std × 100`, when both are available.
    pub fn gap_pct(&self) -> Option<f64> {
        match (self.std_objective, self.pp_verified_objective) {
            (Some(s), Some(v)) => Some((v - s) / s * 100.0),
            _ => None,
        }
    }

    /// PP minus standard solve time, seconds.
    pub fn time_delta(&self) -> f64 {
        self.pp_time - self.std_time
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub n_trials: usize,
    /// Trials with a cost gap (both sides optimal).
    pub n_completed: usize,
    pub mean_gap_pct: Option<f64>,
    pub max_gap_pct: Option<f64>,
    pub p50_gap_pct: Option<f64>,
    pub p95_gap_pct: Option<f64>,
    pub count_over_2pct: usize,
    /// Share of trials whose PP dispatch verified feasible, percent.
    pub feasibility_ratio_pct: f64,
    pub mean_time_delta: f64,
    pub max_time_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub ranges: CostRanges,
    pub verify_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    pub config: BenchConfig,
    pub trials: Vec<TrialRecord>,
    pub summary: BenchSummary,
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub solver: SolverOptions,
    pub ranges: CostRanges,
    /// Tolerance for limit checks in verification (p.u. voltage, MVA).
    pub verify_tol: f64,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { solver: SolverOptions::default(), ranges: CostRanges::default(), verify_tol: 1e-4, jobs: 1 }
    }
}

fn run_trial(
    integrated: &NetworkCase,
    ts_case: &NetworkCase,
    bundles: &[SurrogateBundle],
    trial_id: usize,
    cost_seed: u64,
    opts: &BenchOptions,
) -> Result<TrialRecord> {
    let costs = draw_costs(integrated.generators.len(), cost_seed, &opts.ranges);
    let (full, ts, bundles) = apply_costs(integrated, ts_case, bundles, &costs)?;

    let std_problem = assemble_standard_with_charts(&full)?;
    let std_sol = solve_opf(&std_problem, &opts.solver);

    let pp = assemble_pp(&ts, &bundles, true)?;
    let pp_sol = solve_pp(&pp, &opts.solver);

    let (feasible_true, verified, verify_status, flow_err) = if pp_sol.status == SolveStatus::Optimal {
        let rep = verify_dispatch(&full, &pp, &pp_sol, &opts.solver, opts.verify_tol)?;
        (rep.feasible_true, rep.verified_cost.filter(|_| rep.feasible_true), rep.status, rep.pcc_flow_error)
    } else {
        (false, None, None, None)
    };
    let optimal = |s: SolveStatus, v: f64| (s == SolveStatus::Optimal).then_some(v);
    Ok(TrialRecord {
        trial_id,
        cost_seed,
        std_objective: optimal(std_sol.status, std_sol.objective),
        pp_raw_objective: optimal(pp_sol.status, pp_sol.objective),
        pp_verified_objective: verified,
        std_time: std_sol.solve_time,
        pp_time: pp_sol.solve_time,
        feasible_true,
        std_status: std_sol.status,
        pp_status: pp_sol.status,
        verify_status,
        pcc_flow_error: flow_err,
    })
}

/// Runs `n_trials` paired solves. Trials are independent jobs on a pool of
/// `opts.jobs` workers; records come back in trial order and do not depend
/// on the pool size (timings aside).
pub fn run_benchmark(
    integrated: &NetworkCase,
    ts_case: &NetworkCase,
    bundles: &[SurrogateBundle],
    n_trials: usize,
    seed: u64,
    opts: &BenchOptions,
) -> Result<BenchReport> {
    opts.ranges.validate()?;
    if n_trials == 0 {
        return Err(Error::Invalid("benchmark needs at least one trial".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let trials: Vec<TrialRecord> = pool.install(|| {
        (0..n_trials)
            .into_par_iter()
            .map(|t| {
                let rec = run_trial(integrated, ts_case, bundles, t, trial_seed(seed, t), opts);
                if let Ok(r) = &rec {
                    log::info!(
                        "trial {t}: std {:?} pp {:?} feasible {} gap {:?}",
                        r.std_status,
                        r.pp_status,
                        r.feasible_true,
                        r.gap_pct()
                    );
                }
                rec
            })
            .collect::<Result<_>>()
    })?;
    let summary = summarize(&trials)?;
    Ok(BenchReport {
        provenance: None,
        config: BenchConfig { n_trials, seed, ranges: opts.ranges, verify_tol: opts.verify_tol },
        trials,
        summary,
    })
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Statistics over the trial records. Gap statistics use trials with both
/// sides optimal and are `None` when there are none.
pub fn summarize(trials: &[TrialRecord]) -> Result<BenchSummary> {
    if trials.is_empty() {
        return Err(Error::Invalid("no trials to summarize".into()));
    }
    let mut gaps: Vec<f64> = trials.iter().filter_map(TrialRecord::gap_pct).collect();
    gaps.sort_by(f64::total_cmp);
    let n = trials.len();
    let deltas: Vec<f64> = trials.iter().map(TrialRecord::time_delta).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(BenchSummary {
        n_trials: n,
        n_completed: gaps.len(),
        mean_gap_pct: mean(&gaps),
        max_gap_pct: gaps.last().copied(),
        p50_gap_pct: percentile(&gaps, 50.0),
        p95_gap_pct: percentile(&gaps, 95.0),
        count_over_2pct: gaps.iter().filter(|g| **g > 2.0).count(),
        feasibility_ratio_pct: 100.0 * trials.iter().filter(|t| t.feasible_true).count() as f64 / n as f64,
        mean_time_delta: mean(&deltas).unwrap_or(0.0),
        max_time_delta: deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Equal-width bins over the range of `values`; the last bin is closed.
/// A zero-width range gets a single unit-width bin centered on the value.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![(lo - 0.5, lo + 0.5, values.len())];
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let k = (((v - lo) / w) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts.into_iter().enumerate().map(|(k, c)| (lo + k as f64 * w, if k + 1 == bins { hi } else { lo + (k + 1) as f64 * w }, c)).collect()
}

/// Writes `series,bin_lo,bin_hi,count` rows for the cost gap (percent) and
/// the solve-time delta (seconds).
pub fn emit_histogram(report: &BenchReport, bins: usize, path: &Path) -> Result<()> {
    let gaps: Vec<f64> = report.trials.iter().filter_map(TrialRecord::gap_pct).collect();
    let deltas: Vec<f64> = report.trials.iter().map(TrialRecord::time_delta).collect();
    let mut out = String::new();
    if let Some(p) = &report.provenance {
        out.push_str(&format!("# {p}\n"));
    }
    out.push_str("series,bin_lo,bin_hi,count\n");
    for (name, values) in [("gap_pct", &gaps), ("time_delta_s", &deltas)] {
        for (lo, hi, c) in histogram(values, bins) {
            out.push_str(&format!("{name},{lo},{hi},{c}\n"));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_report(report: &BenchReport, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<BenchReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn record(id: usize, std: f64, verified: f64, std_time: f64, pp_time: f64) -> TrialRecord {
        TrialRecord {
            trial_id: id,
            cost_seed: 0,
            std_objective: Some(std),
            pp_raw_objective: Some(verified),
            pp_verified_objective: Some(verified),
            std_time,
            pp_time,
            feasible_true: true,
            std_status: SolveStatus::Optimal,
            pp_status: SolveStatus::Optimal,
            verify_status: Some(SolveStatus::Optimal),
            pcc_flow_error: Some(0.0),
        }
    }

    #[test]
    fn cost_draws() {
        let case = fixtures::integrated().unwrap();
        let r = CostRanges::default();
        let a = random_costs(&case, 2, 9, &r).unwrap();
        assert_eq!(a, random_costs(&case, 2, 9, &r).unwrap());
        assert_ne!(a[0], a[1]);
        assert_eq!(a[0].len(), 6 + 11);
        let many = random_costs(&case, 1000, 1, &r).unwrap();
        assert_eq!(many.len(), 1000);
        for c in many.iter().flatten() {
            assert!((0.01..=0.05).contains(&c.a) && (5.0..=50.0).contains(&c.b) && c.c == 0.0);
        }
        assert!(random_costs(&case, 1, 0, &CostRanges { a: (-1.0, 1.0), b: (5.0, 50.0) }).is_err());
    }

    #[test]
    fn single_trial_summary() {
        let s = summarize(&[record(0, 100.0, 101.0, 0.5, 0.1)]).unwrap();
        assert!((s.mean_gap_pct.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s.mean_gap_pct, s.max_gap_pct);
        assert_eq!(s.feasibility_ratio_pct, 100.0);
        assert!((s.mean_time_delta + 0.4).abs() < 1e-12);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn failed_trials_counted_but_not_in_gap() {
        let mut bad = record(1, 100.0, 0.0, 0.2, 0.2);
        bad.pp_verified_objective = None;
        bad.feasible_true = false;
        let s = summarize(&[record(0, 100.0, 103.0, 0.1, 0.1), bad]).unwrap();
        assert_eq!((s.n_trials, s.n_completed, s.count_over_2pct), (2, 1, 1));
        assert_eq!(s.feasibility_ratio_pct, 50.0);
    }

    #[test]
    fn histogram_counts() {
        assert_eq!(histogram(&[1.5], 10), vec![(1.0, 2.0, 1)]);
        let v: Vec<f64> = (0..37).map(|k| (k as f64).sin()).collect();
        let h = histogram(&v, 8);
        assert_eq!(h.len(), 8);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 37);
    }

    #[test]
    fn report_round_trip_and_idempotent_histogram() {
        let trials = vec![record(0, 100.0, 101.0, 0.5, 0.1), record(1, 200.0, 201.0, 0.4, 0.2)];
        let report = BenchReport {
            provenance: Some("test".into()),
            config: BenchConfig { n_trials: 2, seed: 1, ranges: CostRanges::default(), verify_tol: 1e-6 },
            summary: summarize(&trials).unwrap(),
            trials,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_report(&report, &path).unwrap();
        let back = read_report(&path).unwrap();
        assert_eq!(back, report);
        assert_eq!(summarize(&back.trials).unwrap(), report.summary);
        let h = dir.path().join("h.csv");
        emit_histogram(&report, 5, &h).unwrap();
        let first = std::fs::read(&h).unwrap();
        emit_histogram(&back, 5, &h).unwrap();
        assert_eq!(first, std::fs::read(&h).unwrap());
    }
}
