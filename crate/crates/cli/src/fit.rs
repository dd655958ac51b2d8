use std::fs;
use std::path::Path;
use std::time::Instant;

use multivar_core::estimate::estimate;
use multivar_core::{Estimate, MetricsReport};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::bundle::{read_bundle, Bundle};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot::{heatmap, shared_scale};

/// Column labels `x1 … xd` for p = 1, `x1_lag1 …` otherwise.
pub fn predictor_labels(variables: &[String], p: usize) -> Vec<String> {
    if p == 1 {
        return variables.to_vec();
    }
    (1..=p).flat_map(|l| variables.iter().map(move |v| format!("{v}_lag{l}"))).collect()
}

pub fn matrix_csv(m: &DMatrix<f64>, rows: &[String], cols: &[String]) -> String {
    let mut out = format!("variable,{}\n", cols.join(","));
    for (i, name) in rows.iter().enumerate() {
        let vals: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{name},{}\n", vals.join(",")));
    }
    out
}

pub struct FitOutcome {
    pub bundle: Bundle,
    pub estimate: Estimate<f64>,
    pub summary: Value,
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Fits the bundle in `data_dir` and writes coefficient CSVs, CV tables,
/// `summary.json` and optional heatmaps to `cfg.out`.
pub fn cmd_fit(cfg: &RunConfig, data_dir: &Path) -> CliResult<FitOutcome> {
    cfg.validate()?;
    let bundle = read_bundle(data_dir)?;
    let method = cfg.method();
    let started = Instant::now();
    let est = estimate(&bundle.data, method, &cfg.estimation())?;
    let elapsed = started.elapsed().as_secs_f64();

    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    let vars = &bundle.manifest.variables;
    let cols = predictor_labels(vars, cfg.lag_order);
    if let Some(common) = &est.common {
        write(&out.join("common.csv"), &matrix_csv(common, vars, &cols))?;
    }
    for (id, total) in est.subject_ids.iter().zip(&est.totals) {
        write(&out.join(format!("total_{id}.csv")), &matrix_csv(total, vars, &cols))?;
    }
    match est.cv_tables.as_slice() {
        [] => {}
        [single] if method.has_common() => write(&out.join("cv_table.csv"), &single.to_csv())?,
        tables => {
            for (id, t) in est.subject_ids.iter().zip(tables) {
                write(&out.join(format!("cv_table_{id}.csv")), &t.to_csv())?;
            }
        }
    }
    if cfg.figures {
        let scale = shared_scale(est.common.iter().chain(&est.totals));
        if let Some(common) = &est.common {
            write(&out.join("common.svg"), &heatmap("common effects", common, vars, &cols, scale))?;
        }
        for (id, total) in est.subject_ids.iter().zip(&est.totals) {
            write(&out.join(format!("total_{id}.svg")), &heatmap(&format!("{id} total effects"), total, vars, &cols, scale))?;
        }
    }

    let metrics = match &bundle.truth {
        Some(truth) => Some(MetricsReport::compute(&truth.phis(), &est.totals, method.zero_tol())?),
        None => None,
    };
    let diagnostics: Vec<Value> = est
        .diagnostics
        .iter()
        .map(|d| {
            json!({
                "iterations": d.iterations,
                "converged": d.converged,
                "objective": d.objective,
                "restarts": d.restarts,
                "step_size": d.step_size,
                "cancellations": d.cancellations,
            })
        })
        .collect();
    let summary = json!({
        "method": method.name(),
        "subjects": est.subject_ids,
        "d": bundle.data.dim(),
        "t": bundle.data.lengths(),
        "lambda1": est.penalty.as_ref().and_then(|p| p.lambda1),
        "lambda2": est.penalty.as_ref().map(|p| p.lambda2.clone()),
        "selected_cells": est.cv_tables.iter().map(|t| t.selected).collect::<Vec<_>>(),
        "diagnostics": diagnostics,
        "means": est.means,
        "scales": est.scales,
        "elapsed_seconds": elapsed,
        "metrics": metrics,
        "config": cfg,
    });
    let mut text = serde_json::to_string_pretty(&summary).map_err(CliError::runtime)?;
    text.push('\n');
    write(&out.join("summary.json"), &text)?;
    Ok(FitOutcome { bundle, estimate: est, summary })
}
