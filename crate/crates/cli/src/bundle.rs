//! On-disk dataset bundles: one CSV per subject plus a JSON manifest and an
//! optional truth sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use multivar_core::simulate::PathGroup;
use multivar_core::{GeneratedDataset, MultiSubjectSeries, SubjectSeries};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const TRUTH: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub file: String,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub d: usize,
    pub k: usize,
    pub variables: Vec<String>,
    pub subjects: Vec<SubjectEntry>,
    /// Whether the stored series have already had their means removed.
    pub centered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub id: String,
    /// `d × dp` transition matrix, row-major.
    pub coefficients: Vec<Vec<f64>>,
    pub support: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub lag_order: usize,
    pub density: f64,
    pub common_support: Vec<Vec<bool>>,
    pub groups: Vec<PathGroup>,
    pub subjects: Vec<SubjectTruth>,
}

impl Truth {
    pub fn from_dataset(ds: &GeneratedDataset<f64>) -> Self {
        let phis = ds.true_phis();
        Self {
            lag_order: ds.true_models.first().map_or(1, |m| m.lag_order()),
            density: ds.support_density(),
            common_support: rows(&ds.true_common_support),
            groups: ds.groups.clone(),
            subjects: ds
                .series
                .subjects()
                .iter()
                .zip(phis.iter().zip(&ds.true_supports))
                .map(|(s, (phi, mask))| SubjectTruth { id: s.id().to_string(), coefficients: rows(phi), support: rows(mask) })
                .collect(),
        }
    }

    pub fn phis(&self) -> Vec<DMatrix<f64>> {
        self.subjects.iter().map(|s| from_rows(&s.coefficients)).collect()
    }
}

pub fn rows<T: Copy + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(r: &[Vec<f64>]) -> DMatrix<f64> {
    let ncols = r.first().map_or(0, Vec::len);
    DMatrix::from_fn(r.len(), ncols, |i, j| r[i][j])
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub data: MultiSubjectSeries<f64>,
    pub truth: Option<Truth>,
}

pub fn default_variables(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Series as CSV: a header of variable names, then one row per time point.
pub fn series_csv(series: &SubjectSeries<f64>, variables: &[String]) -> String {
    let data = series.data();
    let mut out = variables.join(",");
    out.push('\n');
    for t in 0..data.ncols() {
        let row: Vec<String> = data.column(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_bundle(
    dir: &Path,
    data: &MultiSubjectSeries<f64>,
    truth: Option<&Truth>,
    source: Option<serde_json::Value>,
) -> CliResult<Manifest> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    let variables = default_variables(data.dim());
    let mut subjects = Vec::with_capacity(data.len());
    for s in data.subjects() {
        let file = format!("{}.csv", s.id());
        fs::write(dir.join(&file), series_csv(s, &variables))?;
        subjects.push(SubjectEntry { id: s.id().to_string(), file, t: s.len() });
    }
    let manifest = Manifest { d: data.dim(), k: data.len(), variables, subjects, centered: false, means: None, source };
    write_json(&dir.join(MANIFEST), &manifest)?;
    if let Some(t) = truth {
        write_json(&dir.join(TRUTH), t)?;
    }
    Ok(manifest)
}

/// Parses one subject CSV into a `d × T` matrix, checking the header.
fn read_series(path: &Path, variables: &[String]) -> CliResult<DMatrix<f64>> {
    let ctx = |line: u64, msg: String| CliError::validation(format!("{}:{line}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ctx(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != variables {
        return Err(ctx(1, format!("header {header:?} does not match variables {variables:?}")));
    }
    let d = variables.len();
    let mut values = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let line = n as u64 + 2;
        let rec = rec.map_err(|e| ctx(line, e.to_string()))?;
        if rec.len() != d {
            return Err(ctx(line, format!("expected {d} fields, found {}", rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let field = field.trim();
            if field.is_empty() {
                return Err(ctx(line, format!("missing value in column {}", variables[j])));
            }
            let v: f64 = field.parse().map_err(|_| ctx(line, format!("cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(ctx(line, format!("non-finite value in column {}", variables[j])));
            }
            values.push(v);
        }
    }
    let t = values.len() / d.max(1);
    // Values arrive time-major, which is column-major for the d × T layout.
    Ok(DMatrix::from_vec(d, t, values))
}

pub fn read_bundle(dir: &Path) -> CliResult<Bundle> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| CliError::validation(format!("{}: {e}", mpath.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", mpath.display())))?;
    if manifest.variables.len() != manifest.d || manifest.subjects.len() != manifest.k || manifest.k == 0 {
        return Err(CliError::validation(format!(
            "{}: d={} and k={} disagree with {} variables and {} subjects",
            mpath.display(),
            manifest.d,
            manifest.k,
            manifest.variables.len(),
            manifest.subjects.len()
        )));
    }
    let mut subjects = Vec::with_capacity(manifest.k);
    for entry in &manifest.subjects {
        let path = dir.join(&entry.file);
        let data = read_series(&path, &manifest.variables)?;
        if data.ncols() != entry.t {
            return Err(CliError::validation(format!(
                "{}: manifest says T={}, file has {} rows",
                path.display(),
                entry.t,
                data.ncols()
            )));
        }
        subjects.push(SubjectSeries::new(entry.id.clone(), data).map_err(|e| CliError::from(e).context(path.display()))?);
    }
    let data = MultiSubjectSeries::new(subjects)?;
    let tpath = dir.join(TRUTH);
    let truth = if tpath.exists() {
        let text = fs::read_to_string(&tpath)?;
        let truth: Truth =
            serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", tpath.display())))?;
        if truth.subjects.len() != manifest.k {
            return Err(CliError::validation(format!("{}: truth lists {} subjects", tpath.display(), truth.subjects.len())));
        }
        Some(truth)
    } else {
        None
    };
    Ok(Bundle { dir: dir.to_path_buf(), manifest, data, truth })
}
