//! Experiment artifacts: a CSV table of per-sample rows, a JSON summary with
//! provenance, and optional SVG plots.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plot::{emit_plots, Series};

/// Shortest round-trip representation, '.' as decimal separator.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Resource(format!("csv: {other:?}")),
    }
}

/// Pass/fail of one checkable claim.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Everything one subcommand produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub table: Table,
    pub summary: Value,
    pub series: Vec<Series>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Clone, Debug)]
pub struct Provenance {
    pub command: String,
    pub config_text: String,
    pub seed: u64,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub struct Written {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Write `<command>.csv`, `<command>.summary.json` and, with `plots`, one
/// SVG per series. The wall-clock field is the only non-deterministic value
/// and is written last.
pub fn write_outcome(
    dir: &Path,
    prov: &Provenance,
    outcome: &Outcome,
    wall_clock: f64,
    plots: bool,
) -> Result<Written> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", prov.command));
    outcome.table.write(&csv)?;
    let doc = json!({
        "command": prov.command,
        "provenance": {
            "config_sha256": sha256_hex(&prov.config_text),
            "seed": prov.seed,
            "version": env!("CARGO_PKG_VERSION"),
        },
        "results": outcome.summary,
        "checks": outcome.checks,
        "pass": outcome.pass(),
    });
    // serde_json keeps insertion order only with a feature; emit the timing
    // by hand so it is always the last line.
    let mut text =
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Resource(e.to_string()))?;
    text.truncate(text.trim_end().len() - 1);
    text.push_str(&format!(
        ",\n  \"wall_clock_seconds\": {wall_clock:.3}\n}}\n"
    ));
    let summary = dir.join(format!("{}.summary.json", prov.command));
    std::fs::write(&summary, text)?;
    let plots = if plots {
        emit_plots(dir, &outcome.series)?
    } else {
        Vec::new()
    };
    Ok(Written {
        csv,
        summary,
        plots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_is_valid_json_with_timing_last() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = Outcome {
            table: Table::new(&["a", "b"]),
            summary: json!({"x": 1.5}),
            ..Default::default()
        };
        o.table.push(vec![num(0.1), num(1e-7)]);
        o.checks.push(Check::new("c", true, "ok"));
        let prov = Provenance {
            command: "t".into(),
            config_text: "env = 1".into(),
            seed: 3,
        };
        let w = write_outcome(dir.path(), &prov, &o, 1.25, false).unwrap();
        let text = std::fs::read_to_string(&w.summary).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["pass"], true);
        assert_eq!(v["provenance"]["seed"], 3);
        assert!(text
            .trim_end()
            .ends_with("\"wall_clock_seconds\": 1.250\n}"));
        assert_eq!(std::fs::read_to_string(&w.csv).unwrap(), "a,b\n0.1,1e-7\n");
    }
}
