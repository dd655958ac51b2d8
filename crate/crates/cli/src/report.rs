//! Aggregation of long-format metrics into per-cell summaries and figures.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmark::{FailureRow, MetricsRow};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot::{grouped_bars, BarGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub method: String,
    pub n: usize,
    pub failures: usize,
    #[serde(rename = "MCC")]
    pub mcc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub bias: f64,
    #[serde(rename = "RMSE")]
    pub rmse: f64,
}

pub const SUMMARY_HEADER: [&str; 10] =
    ["condition", "T", "method", "n", "failures", "MCC", "sensitivity", "specificity", "bias", "RMSE"];

type Key = (String, usize, String);

fn key_of(condition: &str, t: usize, method: &str) -> Key {
    (condition.to_string(), t, method.to_string())
}

/// Cells in order of first appearance.
fn cells(rows: &[MetricsRow]) -> Vec<(Key, Vec<&MetricsRow>)> {
    let mut out: Vec<(Key, Vec<&MetricsRow>)> = Vec::new();
    for r in rows {
        let k = key_of(&r.condition, r.t, &r.method);
        match out.iter_mut().find(|(existing, _)| *existing == k) {
            Some((_, v)) => v.push(r),
            None => out.push((k, vec![r])),
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn summarize_means(rows: &[MetricsRow], failures: &[FailureRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = cells(rows)
        .into_iter()
        .map(|((condition, t, method), rs)| {
            let col = |f: fn(&MetricsRow) -> f64| mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let failures = failures.iter().filter(|f| key_of(&f.condition, f.t, &f.method) == (condition.clone(), t, method.clone())).count();
            SummaryRow {
                n: rs.len(),
                failures,
                mcc: col(|r| r.mcc),
                sensitivity: col(|r| r.sensitivity),
                specificity: col(|r| r.specificity),
                bias: col(|r| r.bias),
                rmse: col(|r| r.rmse),
                condition,
                t,
                method,
            }
        })
        .collect();
    // Cells where every replication failed still get a row.
    for f in failures {
        if !out.iter().any(|s| s.condition == f.condition && s.t == f.t && s.method == f.method) {
            let n_fail = failures.iter().filter(|g| g.condition == f.condition && g.t == f.t && g.method == f.method).count();
            out.push(SummaryRow {
                condition: f.condition.clone(),
                t: f.t,
                method: f.method.clone(),
                n: 0,
                failures: n_fail,
                mcc: f64::NAN,
                sensitivity: f64::NAN,
                specificity: f64::NAN,
                bias: f64::NAN,
                rmse: f64::NAN,
            });
        }
    }
    out
}

pub const METRICS: [&str; 5] = ["MCC", "sensitivity", "specificity", "bias", "RMSE"];

fn metric(r: &MetricsRow, name: &str) -> f64 {
    match name {
        "MCC" => r.mcc,
        "sensitivity" => r.sensitivity,
        "specificity" => r.specificity,
        "bias" => r.bias,
        _ => r.rmse,
    }
}

/// Mean and quartiles of every metric for one (condition, T, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub condition: String,
    pub t: usize,
    pub method: String,
    pub n: usize,
    /// `[mean, q25, median, q75]` per entry of [`METRICS`].
    pub stats: Vec<[f64; 4]>,
}

pub fn aggregate(rows: &[MetricsRow]) -> Vec<ReportRow> {
    cells(rows)
        .into_iter()
        .map(|((condition, t, method), rs)| {
            let stats = METRICS
                .iter()
                .map(|m| {
                    let v: Vec<f64> = rs.iter().map(|r| metric(r, m)).collect();
                    [mean(&v), quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75)]
                })
                .collect();
            ReportRow { condition, t, method, n: rs.len(), stats }
        })
        .collect()
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut header = vec!["condition".to_string(), "T".into(), "method".into(), "n".into()];
    for m in METRICS {
        for s in ["mean", "q25", "median", "q75"] {
            header.push(format!("{m}_{s}"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let mut fields = vec![r.condition.clone(), r.t.to_string(), r.method.clone(), r.n.to_string()];
        fields.extend(r.stats.iter().flat_map(|s| s.iter().map(|v| v.to_string())));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn read_metrics(path: &Path) -> CliResult<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != crate::benchmark::METRICS_HEADER {
        return Err(CliError::validation(format!(
            "{}: schema mismatch, expected columns {:?}, found {header:?}",
            path.display(),
            crate::benchmark::METRICS_HEADER
        )));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(n, r)| r.map_err(|e| CliError::validation(format!("{}:{}: {e}", path.display(), n + 2))))
        .collect()
}

/// Summarises one or more metrics CSVs into `report.csv` (and SVG panels
/// per metric when figures are on).
pub fn cmd_report(cfg: &RunConfig, inputs: &[PathBuf]) -> CliResult<Vec<ReportRow>> {
    if inputs.is_empty() {
        return Err(CliError::validation("no metrics files given"));
    }
    let mut rows = Vec::new();
    for p in inputs {
        rows.extend(read_metrics(p)?);
    }
    if rows.is_empty() {
        return Err(CliError::validation("metrics files contain no rows"));
    }
    let report = aggregate(&rows);
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("report.csv"), report_csv(&report))?;
    if cfg.figures {
        let mut methods: Vec<String> = Vec::new();
        let mut groups: Vec<(String, usize)> = Vec::new();
        for r in &report {
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
            if !groups.contains(&(r.condition.clone(), r.t)) {
                groups.push((r.condition.clone(), r.t));
            }
        }
        for (mi, m) in METRICS.iter().enumerate() {
            let bars: Vec<BarGroup> = groups
                .iter()
                .map(|(c, t)| BarGroup {
                    label: format!("{c} T={t}"),
                    values: methods
                        .iter()
                        .map(|meth| report.iter().find(|r| &r.condition == c && r.t == *t && &r.method == meth).map(|r| r.stats[mi][0]))
                        .collect(),
                })
                .collect();
            let hi = if *m == "bias" || *m == "RMSE" {
                report.iter().map(|r| r.stats[mi][0]).fold(0.0, f64::max).max(1e-12) * 1.1
            } else {
                1.0
            };
            fs::write(cfg.out.join(format!("report_{m}.svg")), grouped_bars(&format!("mean {m}"), &methods, &bars, 0.0, hi))?;
        }
    }
    Ok(report)
}
