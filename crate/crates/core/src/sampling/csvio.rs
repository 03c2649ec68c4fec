use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{DatasetMeta, Label, LabeledDataset, Sample};
use crate::error::{Error, Result};

/// Column names for a DS with `n_pcc` PCCs and `n_dg` DGs.
pub fn csv_header(n_pcc: usize, n_dg: usize) -> Vec<String> {
    let mut h = Vec::new();
    h.extend((1..=n_pcc).map(|k| format!("v_pcc_{k}")));
    h.extend((1..=n_dg).map(|k| format!("p_dg_{k}")));
    h.extend((1..=n_dg).map(|k| format!("q_dg_{k}")));
    h.push("label".into());
    h.extend((1..=n_pcc).map(|k| format!("p_pcc_{k}")));
    h.extend((1..=n_pcc).map(|k| format!("q_pcc_{k}")));
    h
}

fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the dataset as CSV plus a `<path>.meta.json` sidecar. Numbers use
/// the shortest representation that reads back to the same bits.
pub fn write_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut file = std::io::BufWriter::new(File::create(path)?);
    if let Some(p) = &ds.meta.provenance {
        writeln!(file, "# {}", p.replace('\n', " "))?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut file);
        w.write_record(csv_header(ds.n_pcc, ds.n_dg))?;
        for r in &ds.rows {
            let mut rec: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
            rec.push((r.label as u8).to_string());
            for flows in [&r.p_pcc, &r.q_pcc] {
                match flows {
                    Some(f) => rec.extend(f.iter().map(|v| v.to_string())),
                    None => rec.extend(std::iter::repeat_n(String::new(), ds.n_pcc)),
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    file.flush()?;
    std::fs::write(meta_path(path), serde_json::to_string_pretty(&ds.meta)?)?;
    Ok(())
}

/// Reads a dataset written by [`write_csv`]. The sidecar is optional; class
/// counts are always recomputed from the rows.
pub fn read_csv(path: &Path) -> Result<LabeledDataset> {
    // Leading `#` lines carry provenance and are skipped by line count so
    // reported line numbers match the file.
    let mut comment_lines = 0;
    let mut provenance = None;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        match line.strip_prefix('#') {
            Some(rest) => {
                comment_lines += 1;
                provenance.get_or_insert_with(|| rest.trim().to_string());
            }
            None => break,
        }
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let n_pcc = header.iter().filter(|h| h.starts_with("v_pcc_")).count();
    let n_dg = header.iter().filter(|h| h.starts_with("p_dg_")).count();
    if header != csv_header(n_pcc, n_dg) || n_pcc == 0 {
        return Err(Error::Dataset(format!("unexpected header: {}", header.join(","))));
    }
    let d = n_pcc + 2 * n_dg;
    let line_err = |line: u64, msg: String| Error::Parse { line: line as usize + comment_lines, message: msg };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| line_err(line, format!("column {}: invalid number '{}'", header[i], &rec[i])))
        };
        let x = (0..d).map(num).collect::<Result<Vec<_>>>()?;
        let label = match &rec[d] {
            "0" => Label::Feasible,
            "1" => Label::Infeasible,
            other => return Err(line_err(line, format!("invalid label '{other}'"))),
        };
        let flow_cells = (d + 1)..(d + 1 + 2 * n_pcc);
        let present = flow_cells.clone().filter(|&i| !rec[i].is_empty()).count();
        let (p_pcc, q_pcc) = match (label, present) {
            (Label::Feasible, n) if n == 2 * n_pcc => {
                let p = (d + 1..d + 1 + n_pcc).map(num).collect::<Result<Vec<_>>>()?;
                let q = (d + 1 + n_pcc..d + 1 + 2 * n_pcc).map(num).collect::<Result<Vec<_>>>()?;
                (Some(p), Some(q))
            }
            (Label::Infeasible, 0) => (None, None),
            (Label::Feasible, _) => return Err(line_err(line, "feasible row without PCC flows".into())),
            (Label::Infeasible, _) => return Err(line_err(line, "infeasible row with PCC flows".into())),
        };
        rows.push(Sample { x, label, p_pcc, q_pcc });
    }
    let meta = match std::fs::read_to_string(meta_path(path)) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => DatasetMeta { provenance, ..Default::default() },
    };
    let mut ds = LabeledDataset { n_pcc, n_dg, rows, meta };
    ds.refresh_counts();
    Ok(ds)
}
