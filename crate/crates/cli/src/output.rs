//! CSV datasets, plot scripts and the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiments::{Curve, Rows};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub curves: Vec<CurveEntry>,
    pub plot_script: Option<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEntry {
    pub name: String,
    pub kind: CurveKind,
    pub points: usize,
    pub rows: usize,
    pub wall_time_s: f64,
    #[serde(flatten)]
    pub status: CurveStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CurveStatus {
    Ok { file: String, sha256: String },
    Failed { error: String },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn csv_name(cfg: &ExperimentConfig, curve: &str) -> String {
    format!("{}__{curve}.csv", cfg.experiment.stem())
}

pub fn manifest_name(cfg: &ExperimentConfig) -> String {
    format!("{}.manifest.json", cfg.experiment.stem())
}

pub fn plot_name(cfg: &ExperimentConfig) -> String {
    format!("{}_plot.py", cfg.experiment.stem())
}

/// 17 significant digits; round-trips every f64.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text: `#` metadata lines holding the full configuration, a header
/// row, then one row per line. LF line endings throughout.
pub fn render_csv(cfg: &ExperimentConfig, curve: &Curve, rows: &Rows) -> String {
    let mut s = String::new();
    s.push_str(&format!("# ea-lab {VERSION}\n"));
    s.push_str(&format!("# curve = {}\n", curve.name));
    let kind = if curve.is_monte_carlo() { "monte_carlo" } else { "analytic" };
    s.push_str(&format!("# kind = {kind}\n"));
    for line in cfg.to_text().lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str("point");
    for c in &curve.columns {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{}", r[0] as u64));
        for v in &r[1..] {
            s.push(',');
            s.push_str(&fmt_num(*v));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ParsedCsv {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// The embedded configuration text.
    pub fn config_text(&self) -> String {
        self.metadata
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "curve" | "kind"))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv, String> {
    let mut metadata = Vec::new();
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(m) = line.strip_prefix('#') {
            if let Some((k, v)) = m.split_once('=') {
                metadata.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if header.is_none() {
            header = Some(line.split(',').map(str::to_string).collect::<Vec<_>>());
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|e| format!("line {}: {e}", i + 1))?;
        rows.push(row);
    }
    Ok(ParsedCsv {
        metadata,
        header: header.ok_or("missing header row")?,
        rows,
    })
}

const PLOT_TEMPLATE: &str = r##"#!/usr/bin/env python3
"""Plots the CSV datasets of one ea-lab run. Usage: python3 {script} [out.png]"""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
TITLE = "{title}"
CURVES = [
{curves}]


def load(name):
    with open(os.path.join(HERE, name), newline="") as f:
        rows = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(rows))


def main():
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for c in CURVES:
        rows = load(c["file"])
        x = [float(r[c["x"]]) for r in rows]
        for y in c["y"]:
            vals = [float(r[y]) for r in rows]
            err = [float(r[c["se"]]) for r in rows] if c.get("se") else None
            label = c["name"] if len(c["y"]) == 1 else c["name"] + ": " + y
            if err:
                ax.errorbar(x, vals, yerr=err, fmt="o", ms=3, label=label)
            else:
                ax.plot(x, vals, label=label)
        ax.set_xlabel(c["x"])
        if c["log_x"]:
            ax.set_xscale("log")
        if c["log_y"]:
            ax.set_yscale("log")
    ax.set_title(TITLE, fontsize="small")
    ax.legend(fontsize="small")
    fig.tight_layout()
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, "{stem}.png")
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    main()
"##;

fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

pub fn render_plot_script(cfg: &ExperimentConfig, curves: &[(&Curve, String)]) -> String {
    let mut entries = String::new();
    for (c, file) in curves {
        let ys: Vec<String> = c.plot.y.iter().map(|y| format!("\"{y}\"")).collect();
        let se = c
            .mc
            .iter()
            .find(|(v, _)| c.plot.y.contains(v))
            .map_or("None".to_string(), |(_, se)| format!("\"{se}\""));
        entries.push_str(&format!(
            "    {{\"name\": \"{}\", \"file\": \"{file}\", \"x\": \"{}\", \"y\": [{}], \"se\": {se}, \"log_x\": {}, \"log_y\": {}}},\n",
            c.name,
            c.plot.x,
            ys.join(", "),
            py_bool(c.plot.log_x),
            py_bool(c.plot.log_y),
        ));
    }
    PLOT_TEMPLATE
        .replace("{script}", &plot_name(cfg))
        .replace("{title}", &format!("{}\\n{}", cfg.experiment.name(), cfg.experiment.description()))
        .replace("{stem}", &cfg.experiment.stem())
        .replace("{curves}", &entries)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Manifest {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(m).map_err(|e| CliError::Manifest {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
