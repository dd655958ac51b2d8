//! Monte Carlo study: simulate, fit every method, score against the truth.

use std::fs;
use std::path::Path;

use log::warn;
use multivar_core::estimate::estimate;
use multivar_core::{Method, MetricsReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{summarize_means, SummaryRow};
use crate::simulate::generate;

/// One long-format result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub condition: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub method: String,
    pub replication: usize,
    #[serde(rename = "MCC")]
    pub mcc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub bias: f64,
    #[serde(rename = "RMSE")]
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub condition: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub method: String,
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<FailureRow>,
    pub summary: Vec<SummaryRow>,
}

/// Dataset seed for one (design, length, replication) cell, independent of
/// the method list so that methods are compared on the same data.
pub fn dataset_seed(base: u64, design: usize, t: usize, rep: usize) -> u64 {
    let mut z = base;
    for part in [design as u64, t as u64, rep as u64] {
        z = z.wrapping_add(part).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// Runs `f` on a pool with `workers` threads (rayon's default when `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(CliError::runtime)?;
    Ok(pool.install(f))
}

type Outcome = Result<MetricsRow, FailureRow>;

/// Runs the whole study in memory. Output order does not depend on scheduling.
pub fn run_benchmark(cfg: &RunConfig) -> CliResult<BenchmarkOutput> {
    cfg.validate()?;
    let designs = cfg.designs()?;
    let est_cfg = cfg.estimation();
    let mut jobs = Vec::new();
    for di in 0..designs.len() {
        for &t in &cfg.t {
            for rep in 1..=cfg.reps {
                jobs.push((di, t, rep));
            }
        }
    }
    let run_job = |&(di, t, rep): &(usize, usize, usize)| -> Vec<(usize, Outcome)> {
        let design = &designs[di];
        let label = design.label();
        let fail = |m: Method, error: String| FailureRow { condition: label.clone(), t, method: m.name().into(), replication: rep, error };
        let ds = match generate(design, t, dataset_seed(cfg.seed, di, t, rep)) {
            Ok(ds) => ds,
            Err(e) => return cfg.methods.iter().enumerate().map(|(mi, &m)| (mi, Err(fail(m, e.to_string())))).collect(),
        };
        let truth = ds.true_phis();
        cfg.methods
            .iter()
            .enumerate()
            .map(|(mi, &m)| {
                let scored = estimate(&ds.series, m, &est_cfg)
                    .and_then(|est| MetricsReport::compute(&truth, &est.totals, m.zero_tol()));
                let outcome = match scored {
                    Ok(r) => Ok(MetricsRow {
                        condition: label.clone(),
                        t,
                        method: m.name().into(),
                        replication: rep,
                        mcc: r.mcc,
                        sensitivity: r.sensitivity,
                        specificity: r.specificity,
                        bias: r.bias,
                        rmse: r.rmse,
                    }),
                    Err(e) => Err(fail(m, e.to_string())),
                };
                (mi, outcome)
            })
            .collect()
    };
    let results: Vec<Vec<(usize, Outcome)>> = with_workers(cfg.workers, || jobs.par_iter().map(run_job).collect())?;

    let mut keyed: Vec<((usize, usize, usize, usize), Outcome)> = Vec::new();
    for (&(di, t, rep), outcomes) in jobs.iter().zip(results) {
        for (mi, o) in outcomes {
            keyed.push(((di, t, mi, rep), o));
        }
    }
    keyed.sort_by_key(|(k, _)| *k);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (_, o) in keyed {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => {
                warn!("{} T={} {} replication {} failed: {}", f.condition, f.t, f.method, f.replication, f.error);
                failures.push(f);
            }
        }
    }
    let summary = summarize_means(&rows, &failures);
    Ok(BenchmarkOutput { rows, failures, summary })
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S], header: &[&str]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(CliError::runtime)?;
    w.write_record(header).map_err(CliError::runtime)?;
    for r in rows {
        w.serialize(r).map_err(CliError::runtime)?;
    }
    w.flush()?;
    Ok(())
}

pub const METRICS_HEADER: [&str; 9] =
    ["condition", "T", "method", "replication", "MCC", "sensitivity", "specificity", "bias", "RMSE"];
pub const FAILURE_HEADER: [&str; 5] = ["condition", "T", "method", "replication", "error"];

/// Writes `metrics.csv`, `summary.csv`, `failures.csv` and `config.json` to `cfg.out`.
pub fn cmd_benchmark(cfg: &RunConfig) -> CliResult<BenchmarkOutput> {
    let out = run_benchmark(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    write_csv(&cfg.out.join("metrics.csv"), &out.rows, &METRICS_HEADER)?;
    write_csv(&cfg.out.join("failures.csv"), &out.failures, &FAILURE_HEADER)?;
    write_csv(&cfg.out.join("summary.csv"), &out.summary, &crate::report::SUMMARY_HEADER)?;
    let echo = serde_json::json!({ "config": cfg, "rows": out.rows.len(), "failures": out.failures.len() });
    let mut text = serde_json::to_string_pretty(&echo).map_err(CliError::runtime)?;
    text.push('\n');
    fs::write(cfg.out.join("config.json"), text)?;
    Ok(out)
}
