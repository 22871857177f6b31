//! `run` and `verify`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiments::{curves, Curve, Rows};
use crate::output::{
    csv_name, manifest_name, parse_csv, plot_name, render_csv, render_plot_script, sha256_hex, write_atomic,
    write_manifest, CurveEntry, CurveKind, CurveStatus, FileEntry, Manifest, VERSION,
};

/// Relative tolerance for analytic values on re-evaluation.
pub const ANALYTIC_RTOL: f64 = 1e-12;
/// Monte Carlo values must agree within this many combined standard errors.
pub const MC_SIGMAS: f64 = 3.0;
/// Fraction of grid points re-evaluated per curve.
pub const VERIFY_FRACTION: f64 = 0.01;

/// Columns that hold inputs rather than results.
const PARAM_COLUMNS: [&str; 10] = [
    "kappa", "n_b", "n_s", "m", "delta", "epsilon", "eta", "slices", "progress", "crlb",
];

#[derive(Debug)]
pub struct RunSummary {
    pub manifest: PathBuf,
    pub written: Vec<PathBuf>,
    pub failed: Vec<(String, String)>,
}

fn eval_all(cfg: &ExperimentConfig, curve: &Curve) -> ea_core::Result<Rows> {
    let per_point: Vec<Rows> = (0..curve.points.len())
        .into_par_iter()
        .map(|i| curve.evaluate(cfg, i, cfg.seed))
        .collect::<ea_core::Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let all = curves(cfg);
    let mut entries = Vec::new();
    let mut written = Vec::new();
    let mut failed = Vec::new();
    let mut plotted = Vec::new();
    for curve in &all {
        let t = Instant::now();
        let kind = if curve.is_monte_carlo() { CurveKind::MonteCarlo } else { CurveKind::Analytic };
        let (status, rows) = match eval_all(cfg, curve) {
            Ok(rows) => {
                let file = csv_name(cfg, &curve.name);
                let text = render_csv(cfg, curve, &rows);
                let path = out_dir.join(&file);
                write_atomic(&path, text.as_bytes())?;
                written.push(path);
                plotted.push((curve, file.clone()));
                (
                    CurveStatus::Ok {
                        file,
                        sha256: sha256_hex(text.as_bytes()),
                    },
                    rows.len(),
                )
            }
            Err(e) => {
                failed.push((curve.name.clone(), e.to_string()));
                (CurveStatus::Failed { error: e.to_string() }, 0)
            }
        };
        entries.push(CurveEntry {
            name: curve.name.clone(),
            kind,
            points: curve.points.len(),
            rows,
            wall_time_s: t.elapsed().as_secs_f64(),
            status,
        });
    }
    let plot_script = if plotted.is_empty() {
        None
    } else {
        let text = render_plot_script(cfg, &plotted);
        let file = plot_name(cfg);
        let path = out_dir.join(&file);
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
        Some(FileEntry {
            file,
            sha256: sha256_hex(text.as_bytes()),
        })
    };
    let manifest = Manifest {
        tool: "ea-lab".into(),
        version: VERSION.into(),
        experiment: cfg.experiment.name().into(),
        config: cfg.to_text(),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        curves: entries,
        plot_script,
    };
    let manifest_path = out_dir.join(manifest_name(cfg));
    write_manifest(&manifest_path, &manifest)?;
    Ok(RunSummary {
        manifest: manifest_path,
        written,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass { checked: usize, points: usize },
    Stale,
    Mismatch(String),
    Failed(String),
    Numerical(String),
}

#[derive(Debug)]
pub struct VerifyReport {
    pub items: Vec<(String, Outcome)>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.items
            .iter()
            .filter(|(_, o)| !matches!(o, Outcome::Pass { .. }))
            .count()
    }

    pub fn has_numerical(&self) -> bool {
        self.items.iter().any(|(_, o)| matches!(o, Outcome::Numerical(_)))
    }

    pub fn lines(&self) -> Vec<String> {
        self.items
            .iter()
            .map(|(name, o)| match o {
                Outcome::Pass { checked, points } => format!("PASS {name}: {checked} of {points} point(s) re-evaluated"),
                Outcome::Stale => format!("STALE {name}: sha256 mismatch, file changed after the run"),
                Outcome::Mismatch(m) => format!("FAIL {name}: {m}"),
                Outcome::Failed(m) => format!("FAIL {name}: curve failed during the run ({m})"),
                Outcome::Numerical(m) => format!("ERROR {name}: re-evaluation failed ({m})"),
            })
            .collect()
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= ANALYTIC_RTOL * a.abs().max(b.abs()) || (a.is_nan() && b.is_nan())
}

fn compare_point(curve: &Curve, stored: &[&Vec<f64>], fresh: &Rows, same_seed: bool) -> Result<(), String> {
    if stored.len() != fresh.len() {
        return Err(format!("{} stored rows vs {} recomputed", stored.len(), fresh.len()));
    }
    let mc_pairs: Vec<(usize, usize)> = curve
        .mc
        .iter()
        .filter_map(|(v, se)| Some((curve.column_index(v)?, curve.column_index(se)?)))
        .collect();
    for (s, f) in stored.iter().zip(fresh) {
        if s.len() != f.len() {
            return Err(format!("row has {} columns, expected {}", s.len(), f.len()));
        }
        for (j, name) in curve.columns.iter().enumerate() {
            let col = j + 1;
            let (a, b) = (s[col], f[col]);
            if let Some(&(_, se_col)) = mc_pairs.iter().find(|(v, _)| *v == col) {
                let tol = MC_SIGMAS * (s[se_col].powi(2) + f[se_col].powi(2)).sqrt();
                if (a - b).abs() > tol && !(tol == 0.0 && a == b) {
                    return Err(format!(
                        "point {}: {name} = {a:e} stored vs {b:e} recomputed exceeds {MC_SIGMAS} SE ({tol:e})",
                        s[0]
                    ));
                }
                continue;
            }
            let statistical = curve.is_monte_carlo() && !PARAM_COLUMNS.contains(name);
            if statistical && !same_seed {
                continue;
            }
            if !close(a, b) {
                return Err(format!("point {}: {name} = {a:e} stored vs {b:e} recomputed", s[0]));
            }
        }
    }
    Ok(())
}

fn verify_curve(dir: &Path, entry: &CurveEntry, seed_override: Option<u64>) -> Outcome {
    let (file, sha) = match &entry.status {
        CurveStatus::Ok { file, sha256 } => (file, sha256),
        CurveStatus::Failed { error } => return Outcome::Failed(error.clone()),
    };
    let bytes = match fs::read(dir.join(file)) {
        Ok(b) => b,
        Err(e) => return Outcome::Mismatch(format!("cannot read: {e}")),
    };
    if &sha256_hex(&bytes) != sha {
        return Outcome::Stale;
    }
    let text = String::from_utf8_lossy(&bytes);
    let parsed = match parse_csv(&text) {
        Ok(p) => p,
        Err(e) => return Outcome::Mismatch(format!("unreadable CSV: {e}")),
    };
    if parsed.meta("curve") != Some(entry.name.as_str()) {
        return Outcome::Mismatch(format!("file does not hold curve `{}`", entry.name));
    }
    let cfg = match ExperimentConfig::parse(&parsed.config_text()) {
        Ok(c) => c,
        Err(e) => return Outcome::Mismatch(format!("metadata does not parse: {e}")),
    };
    let Some(curve) = curves(&cfg).into_iter().find(|c| c.name == entry.name) else {
        return Outcome::Mismatch(format!("no curve `{}` in {}", entry.name, cfg.experiment));
    };
    let header: Vec<&str> = std::iter::once("point").chain(curve.columns.iter().copied()).collect();
    if parsed.header != header {
        return Outcome::Mismatch("header does not match the curve definition".into());
    }
    let n = curve.points.len();
    let k = ((n as f64 * VERIFY_FRACTION).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chosen: Vec<usize> = sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    let seed = seed_override.unwrap_or(cfg.seed);
    for idx in chosen {
        let fresh = match curve.evaluate(&cfg, idx, seed) {
            Ok(r) => r,
            Err(e) => return Outcome::Numerical(e.to_string()),
        };
        let stored: Vec<&Vec<f64>> = parsed.rows.iter().filter(|r| r[0] == idx as f64).collect();
        if let Err(m) = compare_point(&curve, &stored, &fresh, seed == cfg.seed) {
            return Outcome::Mismatch(m);
        }
    }
    Outcome::Pass { checked: k, points: n }
}

pub fn verify(manifest_path: &Path, seed_override: Option<u64>) -> Result<VerifyReport, CliError> {
    let manifest = crate::output::read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut items: Vec<(String, Outcome)> = manifest
        .curves
        .par_iter()
        .map(|e| {
            let label = match &e.status {
                CurveStatus::Ok { file, .. } => file.clone(),
                CurveStatus::Failed { .. } => e.name.clone(),
            };
            (label, verify_curve(dir, e, seed_override))
        })
        .collect();
    if let Some(p) = &manifest.plot_script {
        let outcome = match fs::read(dir.join(&p.file)) {
            Ok(b) if sha256_hex(&b) == p.sha256 => Outcome::Pass { checked: 0, points: 0 },
            Ok(_) => Outcome::Stale,
            Err(e) => Outcome::Mismatch(format!("cannot read: {e}")),
        };
        items.push((p.file.clone(), outcome));
    }
    Ok(VerifyReport { items })
}
