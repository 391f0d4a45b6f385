//! `report`: collect per-metric evaluation reports across experiment
//! configurations into one table (methods as rows, metrics as columns),
//! emitted as markdown and CSV that agree cell for cell.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use id_distill_core::metrics::MetricReport;

/// Metrics where lower is better; everything else is higher-is-better.
const LOWER_IS_BETTER: &[&str] = &["fid"];

/// One method's row: label plus `metric -> (mean, std)`.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub label: String,
    pub config_hash: String,
    pub values: BTreeMap<String, (f64, f64)>,
}

/// Read every `runs/<hash>/metrics/*.csv` under the output root (or the
/// requested subset of hashes).
pub fn collect_rows(out_root: &Path, hashes: Option<&[String]>) -> Result<Vec<ReportRow>> {
    let runs_dir = out_root.join("runs");
    let mut dirs: Vec<PathBuf> = Vec::new();
    match hashes {
        Some(list) => {
            for h in list {
                let d = runs_dir.join(h);
                if !d.exists() {
                    bail!("no run directory for config hash {h}");
                }
                dirs.push(d);
            }
        }
        None => {
            if runs_dir.exists() {
                for entry in std::fs::read_dir(&runs_dir)? {
                    let p = entry?.path();
                    if p.is_dir() {
                        dirs.push(p);
                    }
                }
                dirs.sort();
            }
        }
    }

    let mut rows = Vec::new();
    for dir in dirs {
        let hash = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let metrics_dir = dir.join("metrics");
        if !metrics_dir.exists() {
            continue;
        }
        let label = std::fs::read_to_string(dir.join("label.txt"))
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|_| hash.clone());
        let mut values = BTreeMap::new();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&metrics_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
            .collect();
        files.sort();
        for f in files {
            let report = MetricReport::read_csv(&f, &hash)
                .map_err(|e| anyhow::anyhow!("reading {}: {e}", f.display()))?;
            report.validate().map_err(|e| anyhow::anyhow!("validating {}: {e}", f.display()))?;
            values.insert(report.metric.clone(), (report.mean, report.std));
        }
        if !values.is_empty() {
            rows.push(ReportRow {
                label,
                config_hash: hash,
                values,
            });
        }
    }
    if rows.is_empty() {
        bail!("no metric reports found under {}", runs_dir.display());
    }
    Ok(rows)
}

fn cell_text(mean: f64, std: f64) -> String {
    format!("{mean:.2}±{std:.2}")
}

/// Render the rows into `(markdown, csv)` with identical cell text; the best
/// value in each column is marked with a `*`.
pub fn render_tables(rows: &[ReportRow]) -> (String, String) {
    let mut metrics: Vec<String> = Vec::new();
    for row in rows {
        for m in row.values.keys() {
            if !metrics.contains(m) {
                metrics.push(m.clone());
            }
        }
    }
    metrics.sort();

    // Best value per column.
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for m in &metrics {
        let lower = LOWER_IS_BETTER.contains(&m.as_str());
        let mut candidate: Option<f64> = None;
        for row in rows {
            if let Some(&(mean, _)) = row.values.get(m) {
                candidate = Some(match candidate {
                    None => mean,
                    Some(b) if lower => b.min(mean),
                    Some(b) => b.max(mean),
                });
            }
        }
        if let Some(b) = candidate {
            best.insert(m, b);
        }
    }
    let cell = |row: &ReportRow, m: &str| -> String {
        match row.values.get(m) {
            None => "—".to_string(),
            Some(&(mean, std)) => {
                let text = cell_text(mean, std);
                if best.get(m).map(|&b| b == mean).unwrap_or(false) {
                    format!("*{text}")
                } else {
                    text
                }
            }
        }
    };

    let mut md = String::new();
    md.push_str("| method |");
    for m in &metrics {
        let arrow = if LOWER_IS_BETTER.contains(&m.as_str()) { "↓" } else { "↑" };
        md.push_str(&format!(" {m} ({arrow}) |"));
    }
    md.push('\n');
    md.push_str("|---|");
    for _ in &metrics {
        md.push_str("---|");
    }
    md.push('\n');
    for row in rows {
        md.push_str(&format!("| {} |", row.label));
        for m in &metrics {
            md.push_str(&format!(" {} |", cell(row, m)));
        }
        md.push('\n');
    }

    let mut csv = String::new();
    csv.push_str("method");
    for m in &metrics {
        csv.push(',');
        csv.push_str(m);
    }
    csv.push('\n');
    for row in rows {
        csv.push_str(&row.label);
        for m in &metrics {
            csv.push(',');
            csv.push_str(&cell(row, m));
        }
        csv.push('\n');
    }
    (md, csv)
}

/// Write `report.md` and `report.csv` under `<root>/reports/`.
pub fn cmd_report(out_root: &Path, hashes: Option<&[String]>) -> Result<(PathBuf, PathBuf)> {
    let rows = collect_rows(out_root, hashes)?;
    let (md, csv) = render_tables(&rows);
    let dir = out_root.join("reports");
    std::fs::create_dir_all(&dir).context("creating reports directory")?;
    let md_path = dir.join("report.md");
    let csv_path = dir.join("report.csv");
    std::fs::write(&md_path, &md)?;
    std::fs::write(&csv_path, &csv)?;
    println!("{md}");
    Ok((md_path, csv_path))
}
