use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde_json::{json, Value};

use gridveil::acopf::{assemble_standard, assemble_standard_with_charts, solve_opf, OpfSolution, SolverOptions};
use gridveil::bench::{
    emit_histogram, read_report, run_benchmark, summarize, write_report, BenchOptions, CostRanges,
};
use gridveil::netmodel::{build_integrated, parse_case, NetworkCase};
use gridveil::ppopf::{assemble_pp, solve_pp, verify_dispatch};
use gridveil::sampling::{generate_dataset, read_csv, split_dataset, write_csv, LabeledDataset, SamplingOptions};
use gridveil::surrogate::{
    build_bundle, classification_metrics, ds_charts, export_bundle, flow_targets, import_bundle, regression_metrics,
    train_fr, train_pq, FlowTarget, PccModels, PolytopeModel, SurrogateBundle, TrainOptions,
};

use crate::args::*;

/// Command line and seed, embedded in every artifact.
fn provenance(seed: Option<u64>) -> String {
    let argv: Vec<String> = std::env::args().collect();
    match seed {
        Some(s) => format!("{} [seed {s}]", argv.join(" ")),
        None => argv.join(" "),
    }
}

fn read_case(path: &Path) -> Result<NetworkCase> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_case(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_cases(paths: &[std::path::PathBuf]) -> Result<Vec<NetworkCase>> {
    paths.iter().map(|p| read_case(p)).collect()
}

fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    read_csv(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn read_bundles(paths: &[std::path::PathBuf]) -> Result<Vec<SurrogateBundle>> {
    paths.iter().map(|p| import_bundle(p).with_context(|| format!("reading bundle {}", p.display()))).collect()
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn field<T: serde::de::DeserializeOwned>(v: &Value, key: &str, path: &Path) -> Result<T> {
    let raw = v.get(key).with_context(|| format!("{}: missing '{key}'", path.display()))?;
    serde_json::from_value(raw.clone()).with_context(|| format!("{}: bad '{key}'", path.display()))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(a) => sample(a),
        Command::TrainFr(a) => train_fr_cmd(a),
        Command::TrainPq(a) => train_pq_cmd(a),
        Command::Bundle(a) => bundle(a),
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
    }
}

fn sample(a: SampleArgs) -> Result<()> {
    let case = read_case(&a.case)?;
    let charts = ds_charts(&case)?;
    let mut opts = SamplingOptions { jobs: a.jobs.jobs, ..Default::default() };
    opts.response.v_band = (a.v_min, a.v_max);
    let mut data = generate_dataset(&case, &charts, a.n, a.seed, &opts)?;
    data.meta.provenance = Some(provenance(Some(a.seed)));
    println!(
        "{} samples: {} feasible, {} infeasible ({} outside a chart, {} non-converged)",
        data.len(),
        data.meta.n_feasible,
        data.meta.n_infeasible,
        data.meta.n_chart_rejected,
        data.meta.n_nonconverged
    );
    match (a.split, &a.test_out) {
        (Some(ratio), Some(test_out)) => {
            let (mut train, mut test) = split_dataset(&data, ratio, a.seed)?;
            train.meta = data.meta.clone();
            train.refresh_counts();
            test.meta = data.meta.clone();
            test.refresh_counts();
            write_csv(&train, &a.out)?;
            write_csv(&test, test_out)?;
            println!("split {} / {} rows", train.len(), test.len());
        }
        _ => write_csv(&data, &a.out)?,
    }
    Ok(())
}

fn train_fr_cmd(a: TrainFrArgs) -> Result<()> {
    let train = read_dataset(&a.data)?;
    let opts = TrainOptions {
        n_h: a.n_h,
        w_10: a.w10,
        w_01: a.w01,
        lr: a.lr,
        max_epochs: a.epochs,
        batch: a.batch,
        seed: a.seed,
        validation_fraction: a.val_fraction,
        patience: a.patience,
    };
    let model = train_fr(&train, &opts)?;
    let train_metrics = classification_metrics(&model, &train)?;
    let test_metrics = match &a.test {
        Some(p) => Some(classification_metrics(&model, &read_dataset(p)?)?),
        None => None,
    };
    println!("train {train_metrics:?}");
    if let Some(m) = &test_metrics {
        println!("test {m:?}");
    }
    write_json(
        &a.out,
        &json!({
            "provenance": provenance(Some(a.seed)),
            "model": model,
            "train_metrics": train_metrics,
            "test_metrics": test_metrics,
        }),
    )
}

fn train_pq_cmd(a: TrainPqArgs) -> Result<()> {
    let case = read_case(&a.case)?;
    let train = read_dataset(&a.data)?;
    let models = train_pq(&train, case.base_mva)?;
    let mut metrics = Vec::new();
    if let Some(p) = &a.test {
        let test = read_dataset(p)?;
        for (u, m) in models.iter().enumerate() {
            let (xp, yp) = flow_targets(&test, u, FlowTarget::Active, case.base_mva);
            let (xq, yq) = flow_targets(&test, u, FlowTarget::Reactive, case.base_mva);
            let (mp, mq) = (regression_metrics(&m.p, &xp, &yp)?, regression_metrics(&m.q, &xq, &yq)?);
            println!("pcc {u}: p {mp:?} q {mq:?}");
            metrics.push(json!({ "pcc": u, "p": mp, "q": mq }));
        }
    }
    write_json(
        &a.out,
        &json!({ "provenance": provenance(None), "base_mva": case.base_mva, "models": models, "test_metrics": metrics }),
    )
}

fn bundle(a: BundleArgs) -> Result<()> {
    let case = read_case(&a.case)?;
    let fr: PolytopeModel = field(&read_json(&a.fr)?, "model", &a.fr)?;
    let pq_file = read_json(&a.pq)?;
    let pq: Vec<PccModels> = field(&pq_file, "models", &a.pq)?;
    let pq_base: f64 = field(&pq_file, "base_mva", &a.pq)?;
    ensure!(pq_base == case.base_mva, "regressors were fitted on base {pq_base} MVA, case uses {}", case.base_mva);
    let mut b = build_bundle(&case, fr, pq, (a.v_min, a.v_max))?;
    b.provenance = Some(provenance(None));
    export_bundle(&b, &a.out)?;
    println!("bundle for DS {}: {} PCC, {} DG, {} facets", b.ds, b.n_pcc, b.n_dg, b.fr.n_h());
    Ok(())
}

fn solver_options(max_iter: usize) -> SolverOptions {
    SolverOptions { max_iter, ..Default::default() }
}

fn print_solution(sol: &OpfSolution) {
    println!(
        "{:?}: objective {:.4} $/h, {} iterations, {:.3} s",
        sol.status, sol.objective, sol.iterations, sol.solve_time
    );
}

fn solve(a: SolveArgs) -> Result<()> {
    let ts = read_case(&a.case)?;
    let opts = solver_options(a.max_iter);
    let charts = !a.no_charts;
    let sol = match a.mode {
        Mode::Standard => {
            let full = build_integrated(&ts, &read_cases(&a.ds)?)?;
            let nlp = if charts { assemble_standard_with_charts(&full)? } else { assemble_standard(&full)? };
            solve_opf(&nlp, &opts)
        }
        Mode::Pp => {
            let bundles = read_bundles(&a.bundle)?;
            let pp = assemble_pp(&ts, &bundles, charts)?;
            solve_pp(&pp, &opts)
        }
    };
    print_solution(&sol);
    write_json(
        &a.out,
        &json!({
            "provenance": provenance(None),
            "mode": match a.mode { Mode::Standard => "standard", Mode::Pp => "pp" },
            "charts_enforced": charts,
            "solution": sol,
        }),
    )
}

fn verify(a: VerifyArgs) -> Result<()> {
    let ts = read_case(&a.case)?;
    let full = build_integrated(&ts, &read_cases(&a.ds)?)?;
    let file = read_json(&a.solution)?;
    let mode: String = field(&file, "mode", &a.solution)?;
    if mode != "pp" {
        bail!("{} holds a {mode} solution; verify expects one from `solve --mode pp`", a.solution.display());
    }
    let charts: bool = field(&file, "charts_enforced", &a.solution)?;
    let sol: OpfSolution = field(&file, "solution", &a.solution)?;
    let pp = assemble_pp(&ts, &read_bundles(&a.bundle)?, charts)?;
    let rep = verify_dispatch(&full, &pp, &sol, &SolverOptions::default(), a.tol)?;
    println!(
        "feasible: {} (re-solve {:?}, verified cost {:?}, PCC flow error {:?})",
        rep.feasible_true, rep.status, rep.verified_cost, rep.pcc_flow_error
    );
    for z in rep.violations.iter().filter(|z| !z.report.feasible) {
        println!("zone {}: {:?}", z.zone, z.report.violations);
    }
    write_json(&a.out, &json!({ "provenance": provenance(None), "report": rep }))
}

fn range(v: &[f64]) -> (f64, f64) {
    (v[0], v[1])
}

fn bench(a: BenchArgs) -> Result<()> {
    let ts = read_case(&a.case)?;
    let full = build_integrated(&ts, &read_cases(&a.ds)?)?;
    let bundles = read_bundles(&a.bundle)?;
    let opts = BenchOptions {
        ranges: CostRanges { a: range(&a.cost_a), b: range(&a.cost_b) },
        verify_tol: a.tol,
        jobs: a.jobs.jobs,
        ..Default::default()
    };
    let mut rep = run_benchmark(&full, &ts, &bundles, a.trials, a.seed, &opts)?;
    rep.provenance = Some(provenance(Some(a.seed)));
    write_report(&rep, &a.out)?;
    if let Some(h) = &a.hist {
        emit_histogram(&rep, a.bins, h)?;
    }
    println!("{}", serde_json::to_string_pretty(&rep.summary)?);
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let rep = read_report(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let summary = summarize(&rep.trials)?;
    ensure!(summary == rep.summary, "stored summary does not match the trial records");
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(h) = &a.hist {
        emit_histogram(&rep, a.bins, h)?;
    }
    Ok(())
}
