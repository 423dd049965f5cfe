//! Plot-ready tables in the coordinates where the decay laws are straight
//! lines: `log(1/ε)` against `log(−log p)`, and `λ²` against `log p`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::output::Sink;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Smallball,
    Tail,
    Fit,
}

impl PlotKind {
    fn inputs(self) -> &'static [&'static str] {
        match self {
            PlotKind::Smallball => &["eps", "log_p", "se_log"],
            PlotKind::Tail => &["lambda", "p", "ci_low", "ci_high"],
            PlotKind::Fit => &["eps", "fitted", "fitted_lo", "fitted_hi"],
        }
    }

    fn outputs(self) -> [&'static str; 4] {
        match self {
            PlotKind::Smallball | PlotKind::Fit => ["log_inv_eps", "loglog_p", "ci_lo", "ci_hi"],
            PlotKind::Tail => ["lambda_sq", "log_p", "ci_lo", "ci_hi"],
        }
    }

    fn name(self) -> &'static str {
        match self {
            PlotKind::Smallball => "smallball",
            PlotKind::Tail => "tail",
            PlotKind::Fit => "fit",
        }
    }
}

/// `log(−log p)`, or `-inf` once `log p` reaches 0.
fn loglog(log_p: f64) -> f64 {
    if log_p < 0.0 {
        (-log_p).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Converts one row of input values (in [`PlotKind::inputs`] order).
fn convert(kind: PlotKind, v: &[f64]) -> Option<[f64; 4]> {
    match kind {
        PlotKind::Smallball => {
            let (eps, log_p, se) = (v[0], v[1], v[2]);
            if !(log_p.is_finite() && log_p < 0.0) {
                return None;
            }
            // Larger log p means smaller −log p.
            Some([
                (1.0 / eps).ln(),
                loglog(log_p),
                loglog(log_p + 1.96 * se),
                loglog(log_p - 1.96 * se),
            ])
        }
        PlotKind::Tail => {
            let (lambda, p, lo, hi) = (v[0], v[1], v[2], v[3]);
            if !(p > 0.0) {
                return None;
            }
            Some([lambda * lambda, p.ln(), lo.ln(), hi.ln()])
        }
        PlotKind::Fit => {
            let (eps, fitted, lo, hi) = (v[0], v[1], v[2], v[3]);
            Some([(1.0 / eps).ln(), loglog(fitted), loglog(hi), loglog(lo)])
        }
    }
}

/// Reads `input` and returns the converted rows. A zero-byte or header-only
/// input gives no rows.
pub fn plot_rows(input: &Path, kind: PlotKind) -> CliResult<Vec<[f64; 4]>> {
    let meta = fs::metadata(input).map_err(|e| CliError::io(format!("reading {}", input.display()), e))?;
    if meta.len() == 0 {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(input)?;
    let headers = r.headers()?.clone();
    let mut idx = Vec::new();
    let mut missing = Vec::new();
    for &name in kind.inputs() {
        match headers.iter().position(|h| h == name) {
            Some(i) => idx.push(i),
            None => missing.push(name),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Schema(format!(
            "{} plot data needs columns missing from {}: {}",
            kind.name(),
            input.display(),
            missing.join(", ")
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let raw = rec.get(i).unwrap_or("");
                raw.trim().parse::<f64>().map_err(|_| {
                    CliError::Schema(format!("row {}: column {} is not a number: {raw:?}", line + 1, &headers[i]))
                })
            })
            .collect::<CliResult<_>>()?;
        if let Some(row) = convert(kind, &vals) {
            out.push(row);
        }
    }
    Ok(out)
}

pub fn emit_plotdata(input: &Path, kind: PlotKind, sink: &mut Sink) -> CliResult<()> {
    let rows = plot_rows(input, kind)?;
    sink.table(&format!("plot_{}", kind.name()), &rows, &kind.outputs())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::OutputFormat;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn smallball_columns() {
        let dir = tempfile::tempdir().unwrap();
        let input = write(
            dir.path(),
            "sb.csv",
            "eps,method,p_hat,log_p,se_log,replicas,seed\n0.5,direct,0.5,-0.6931471805599453,0.01,100,1\n0.2,direct,0,-inf,inf,100,1\n",
        );
        let mut sink = Sink::new(dir.path(), OutputFormat::Csv).unwrap();
        emit_plotdata(&input, PlotKind::Smallball, &mut sink).unwrap();
        let text = fs::read_to_string(dir.path().join("plot_smallball.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("log_inv_eps,loglog_p,ci_lo,ci_hi"));
        let vals: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert!((vals[0] - 2f64.ln()).abs() < 1e-15);
        assert!((vals[1] - 2f64.ln().ln()).abs() < 1e-15);
        assert!(vals[2] < vals[1] && vals[1] < vals[3]);
        assert!(lines.next().is_none());
    }

    #[test]
    fn tail_columns() {
        let dir = tempfile::tempdir().unwrap();
        let input = write(dir.path(), "t.csv", "lambda,p,se,ci_low,ci_high,replicas,seed\n2,0.25,0.01,0.2,0.3,10,1\n");
        let rows = plot_rows(&input, PlotKind::Tail).unwrap();
        assert_eq!(rows, vec![[4.0, 0.25f64.ln(), 0.2f64.ln(), 0.3f64.ln()]]);
    }

    #[test]
    fn empty_input_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        for (i, text) in ["", "eps,method,p_hat,log_p,se_log,replicas,seed\n"].iter().enumerate() {
            let input = write(dir.path(), &format!("e{i}.csv"), text);
            let mut sink = Sink::new(dir.path(), OutputFormat::Csv).unwrap();
            emit_plotdata(&input, PlotKind::Smallball, &mut sink).unwrap();
            let out = fs::read_to_string(dir.path().join("plot_smallball.csv")).unwrap();
            assert_eq!(out, "log_inv_eps,loglog_p,ci_lo,ci_hi\n");
        }
    }

    #[test]
    fn schema_mismatch_names_columns() {
        let dir = tempfile::tempdir().unwrap();
        let input = write(dir.path(), "bad.csv", "eps,p_hat\n0.5,0.1\n");
        let err = plot_rows(&input, PlotKind::Smallball).unwrap_err().to_string();
        assert!(err.contains("log_p") && err.contains("se_log"), "{err}");
    }
}
