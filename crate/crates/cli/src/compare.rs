//! Column-wise comparison of two runs.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::CliError;
use crate::manifest::Manifest;

/// Largest difference found for one column (CSV) or key (key = value file).
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDiff {
    pub file: String,
    pub column: String,
    /// Infinite when the entries cannot be compared numerically and differ.
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub columns: Vec<ColumnDiff>,
}

impl Report {
    pub fn worst(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| c.max_abs_diff)
            .fold(0.0, f64::max)
    }

    pub fn render(&self, tolerance: f64) -> String {
        let mut s = String::from("file,column,max_abs_diff,status\n");
        for c in &self.columns {
            let status = if c.max_abs_diff <= tolerance {
                "ok"
            } else {
                "EXCEEDS"
            };
            s.push_str(&format!(
                "{},{},{:.3e},{status}\n",
                c.file, c.column, c.max_abs_diff
            ));
        }
        s
    }
}

fn cell_diff(a: &str, b: &str) -> f64 {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) if x == y => 0.0,
        (Ok(x), Ok(y)) => (x - y).abs(),
        _ if a.trim() == b.trim() => 0.0,
        _ => f64::INFINITY,
    }
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| CliError::Io(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((header, rows))
}

fn compare_csv(name: &str, a: &Path, b: &Path) -> Result<Vec<ColumnDiff>, CliError> {
    let (ha, ra) = read_table(a)?;
    let (hb, rb) = read_table(b)?;
    if ha != hb || ra.len() != rb.len() {
        return Ok(vec![ColumnDiff {
            file: name.into(),
            column: "(shape)".into(),
            max_abs_diff: f64::INFINITY,
        }]);
    }
    let mut out: Vec<ColumnDiff> = ha
        .iter()
        .map(|h| ColumnDiff {
            file: name.into(),
            column: h.clone(),
            max_abs_diff: 0.0,
        })
        .collect();
    for (x, y) in ra.iter().zip(&rb) {
        for (j, col) in out.iter_mut().enumerate() {
            let d = cell_diff(&x[j], &y[j]);
            col.max_abs_diff = col.max_abs_diff.max(d);
        }
    }
    Ok(out)
}

fn read_kv(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

fn compare_kv(name: &str, a: &Path, b: &Path) -> Result<Vec<ColumnDiff>, CliError> {
    let (ka, kb) = (read_kv(a)?, read_kv(b)?);
    let mut keys: Vec<&String> = ka.keys().chain(kb.keys()).collect();
    keys.sort();
    keys.dedup();
    Ok(keys
        .into_iter()
        .map(|k| ColumnDiff {
            file: name.into(),
            column: k.clone(),
            max_abs_diff: match (ka.get(k), kb.get(k)) {
                (Some(x), Some(y)) => cell_diff(x, y),
                _ => f64::INFINITY,
            },
        })
        .collect())
}

/// Compare every output listed in run `a` against the same file in run `b`.
pub fn compare_runs(a: &Path, b: &Path) -> Result<Report, CliError> {
    let (ma, da) = Manifest::load(a)?;
    let (mb, db) = Manifest::load(b)?;
    if let Some(name) = mb.outputs.iter().find(|o| !ma.outputs.contains(o)) {
        return Err(CliError::MissingOutput(format!(
            "{name} is listed only in {}",
            b.display()
        )));
    }
    let mut report = Report::default();
    for name in &ma.outputs {
        if !mb.outputs.contains(name) {
            return Err(CliError::MissingOutput(format!(
                "{name} is listed only in {}",
                a.display()
            )));
        }
        let (pa, pb) = (da.join(name), db.join(name));
        for p in [&pa, &pb] {
            if !p.is_file() {
                return Err(CliError::MissingOutput(p.display().to_string()));
            }
        }
        let cols = if name.ends_with(".csv") {
            compare_csv(name, &pa, &pb)?
        } else {
            compare_kv(name, &pa, &pb)?
        };
        report.columns.extend(cols);
    }
    Ok(report)
}
