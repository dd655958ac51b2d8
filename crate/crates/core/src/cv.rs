//! Penalty selection by blocked-fold (BCV) and rolling-window (RWCV)
//! cross-validation on one-step-ahead mean squared forecast error.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::{fista_solve, fit_path, LambdaGrid, PenaltySpec, Problem, SolverConfig, SolverOutput};
use crate::var::{build_regression, build_regression_segments, MultiSubjectSeries, RegressionForm};
use crate::weights::AdaptiveWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvScheme {
    Bcv,
    Rwcv,
}

impl CvScheme {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bcv => "bcv",
            Self::Rwcv => "rwcv",
        }
    }
}

/// Per-subject contiguous test blocks partitioning `0..Tᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub blocks: Vec<Vec<Range<usize>>>,
    pub scheme: CvScheme,
    /// Forecast horizon (always 1 here).
    pub horizon: usize,
    /// Points dropped from the training data on each side of the test block.
    pub gap: usize,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.len())
    }

    /// Training segments for subject `k` when `block` is held out.
    pub fn training_segments(&self, k: usize, block: &Range<usize>) -> Vec<Range<usize>> {
        let end = self.blocks[k].last().map_or(0, |b| b.end);
        let mut out = Vec::with_capacity(2);
        let left_end = block.start.saturating_sub(self.gap);
        if left_end > 0 {
            out.push(0..left_end);
        }
        let right_start = (block.end + self.gap).min(end);
        if right_start < end {
            out.push(right_start..end);
        }
        out
    }
}

/// `f` contiguous blocks per subject; when `f` does not divide `T` the
/// last `T mod f` blocks are one point longer.
pub fn make_blocked_folds(t_lens: &[usize], f: usize, p: usize) -> Result<FoldPlan> {
    if f < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {f}")));
    }
    let required = f * (p + 2);
    let mut blocks = Vec::with_capacity(t_lens.len());
    for &t in t_lens {
        if t < required {
            return Err(Error::TooShort { required, actual: t });
        }
        let (base, rem) = (t / f, t % f);
        let mut start = 0;
        let subject: Vec<Range<usize>> = (0..f)
            .map(|i| {
                let len = base + usize::from(i >= f - rem);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        blocks.push(subject);
    }
    Ok(FoldPlan { blocks, scheme: CvScheme::Bcv, horizon: 1, gap: 0 })
}

/// Per-equation mean squared one-step forecast error over `block`, using
/// observed lags `X̂_t = Σ_ℓ Φ_ℓ X_{t−ℓ}`. Points without `p` observed
/// predecessors are skipped; `None` when nothing in the block can be scored.
pub fn forecast_row_msfe<T: Real>(phi: &DMatrix<T>, data: &DMatrix<T>, block: Range<usize>) -> Option<Vec<T>> {
    let d = data.nrows();
    if d == 0 || phi.nrows() != d || phi.ncols() % d != 0 {
        return None;
    }
    let p = phi.ncols() / d;
    let start = block.start.max(p);
    let end = block.end.min(data.ncols());
    if start >= end {
        return None;
    }
    let mut sse = vec![T::zero(); d];
    let mut pred = nalgebra::DVector::zeros(d);
    for t in start..end {
        pred.fill(T::zero());
        for l in 0..p {
            pred.gemv(T::one(), &phi.columns(l * d, d), &data.column(t - l - 1), T::one());
        }
        for (i, e) in sse.iter_mut().enumerate() {
            let r = pred[i] - data[(i, t)];
            *e += r * r;
        }
    }
    let n = T::count(end - start);
    Some(sse.into_iter().map(|e| e / n).collect())
}

/// Mean squared one-step forecast error over all entries of `block`.
pub fn forecast_msfe<T: Real>(phi: &DMatrix<T>, data: &DMatrix<T>, block: Range<usize>) -> Option<T> {
    let rows = forecast_row_msfe(phi, data, block)?;
    let n = T::count(rows.len());
    Some(rows.into_iter().fold(T::zero(), |a, b| a + b) / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCell<T: Real> {
    pub i: usize,
    pub j: usize,
    pub lambda1: T,
    pub lambda2_scale: T,
    /// Mean over subjects of each subject's fold-averaged MSFE.
    pub msfe: Option<T>,
    pub per_subject: Vec<Option<T>>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvTable<T: Real> {
    pub scheme: CvScheme,
    pub subject_ids: Vec<String>,
    pub cells: Vec<CvCell<T>>,
    pub selected: usize,
}

impl<T: Real> CvTable<T> {
    pub fn selected_cell(&self) -> &CvCell<T> {
        &self.cells[self.selected]
    }

    /// One row per grid cell: indices, λ values, MSFE, per-subject MSFE.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,lambda1_index,lambda2_index,lambda1,lambda2_scale,msfe,selected");
        for id in &self.subject_ids {
            let _ = write!(out, ",msfe_{id}");
        }
        out.push_str(",failure\n");
        let fmt = |v: Option<T>| v.map_or_else(String::new, |x| format!("{}", x.as_f64()));
        for (n, c) in self.cells.iter().enumerate() {
            let _ = write!(
                out,
                "{n},{},{},{},{},{},{}",
                c.i,
                c.j,
                c.lambda1.as_f64(),
                c.lambda2_scale.as_f64(),
                fmt(c.msfe),
                u8::from(n == self.selected)
            );
            for v in &c.per_subject {
                let _ = write!(out, ",{}", fmt(*v));
            }
            let _ = writeln!(out, ",{}", c.failure.as_deref().unwrap_or("").replace(',', ";"));
        }
        out
    }
}

/// Outcome of a cross-validated fit: the table, the refit on all data at
/// the selected cell, and the penalty used for it.
#[derive(Debug, Clone)]
pub struct CvFit<T: Real> {
    pub table: CvTable<T>,
    pub output: SolverOutput<T>,
    pub penalty: PenaltySpec<T>,
}

/// Squared-error sums per (cell, subject) accumulated over folds/origins.
struct Accumulator<T: Real> {
    sums: Vec<Vec<(T, usize)>>,
    failures: Vec<Option<String>>,
}

impl<T: Real> Accumulator<T> {
    fn new(cells: usize, k: usize) -> Self {
        Self { sums: vec![vec![(T::zero(), 0); k]; cells], failures: vec![None; cells] }
    }

    fn fail(&mut self, cell: usize, reason: String) {
        if self.failures[cell].is_none() {
            self.failures[cell] = Some(reason);
        }
    }

    fn finish(self, grid: &LambdaGrid<T>, scheme: CvScheme, ids: Vec<String>) -> Result<CvTable<T>> {
        let mut cells = Vec::with_capacity(self.sums.len());
        for (idx, (sums, failure)) in self.sums.into_iter().zip(self.failures).enumerate() {
            let (i, j) = grid.cell(idx);
            let per_subject: Vec<Option<T>> = sums
                .iter()
                .map(|&(s, n)| (n > 0).then(|| s / T::count(n)))
                .collect();
            let msfe = if failure.is_some() || per_subject.iter().any(|v| v.is_none()) {
                None
            } else {
                let total = per_subject.iter().flatten().fold(T::zero(), |a, &b| a + b);
                Some(total / T::count(per_subject.len()))
            }
            .filter(|v: &T| v.is_finite_value());
            let failure = failure.or_else(|| msfe.is_none().then(|| "no scoreable forecasts".to_string()));
            cells.push(CvCell {
                i,
                j,
                lambda1: grid.lambda1[i],
                lambda2_scale: grid.lambda2_scale[j],
                msfe,
                per_subject,
                failure,
            });
        }
        // Cells are in descending-λ order, so strict `<` keeps the sparser cell on ties.
        let mut selected = None;
        for (n, c) in cells.iter().enumerate() {
            if let Some(m) = c.msfe {
                if selected.map_or(true, |(_, b)| m < b) {
                    selected = Some((n, m));
                }
            }
        }
        let (selected, _) = selected.ok_or_else(|| {
            Error::NoValidCell(cells.first().and_then(|c| c.failure.clone()).unwrap_or_default())
        })?;
        Ok(CvTable { scheme, subject_ids: ids, cells, selected })
    }
}

fn refit<T: Real>(
    data: &MultiSubjectSeries<T>,
    p: usize,
    grid: &LambdaGrid<T>,
    weights: Option<&AdaptiveWeights<T>>,
    cfg: &SolverConfig<T>,
    table: CvTable<T>,
) -> Result<CvFit<T>> {
    let regs = data
        .subjects()
        .iter()
        .map(|s| build_regression(s, p))
        .collect::<Result<Vec<_>>>()?;
    let problem = Problem::new(&regs)?;
    let (i, j) = grid.cell(table.selected);
    let penalty = grid.penalty(i, j, weights);
    let output = fista_solve(&problem, &penalty, cfg, None)?;
    Ok(CvFit { table, output, penalty })
}

fn subject_ids<T: Real>(data: &MultiSubjectSeries<T>) -> Vec<String> {
    data.subjects().iter().map(|s| s.id().to_string()).collect()
}

/// Blocked cross-validation over every grid cell, then a refit on all data
/// at the minimizing cell.
pub fn bcv_select<T: Real>(
    data: &MultiSubjectSeries<T>,
    p: usize,
    grid: &LambdaGrid<T>,
    weights: Option<&AdaptiveWeights<T>>,
    cfg: &SolverConfig<T>,
    plan: &FoldPlan,
) -> Result<CvFit<T>> {
    let k = data.len();
    if plan.blocks.len() != k {
        return Err(Error::Dimension(format!("fold plan covers {} subjects, data has {k}", plan.blocks.len())));
    }
    if grid.lambda2_max.len() != k {
        return Err(Error::Dimension("grid does not match the number of subjects".into()));
    }
    let n_folds = plan.n_folds();
    let fold_results: Vec<std::result::Result<Vec<Vec<Option<T>>>, String>> = (0..n_folds)
        .into_par_iter()
        .map(|f| {
            let regs = data
                .subjects()
                .iter()
                .enumerate()
                .map(|(s, subj)| {
                    build_regression_segments(subj.data(), p, &plan.training_segments(s, &plan.blocks[s][f]))
                })
                .collect::<Result<Vec<RegressionForm<T>>>>()
                .map_err(|e| format!("fold {}: {e}", f + 1))?;
            let problem = Problem::new(&regs).map_err(|e| format!("fold {}: {e}", f + 1))?;
            let path = fit_path(&problem, grid, weights, cfg);
            Ok(path
                .into_iter()
                .map(|cell| match cell.result {
                    Ok(out) => data
                        .subjects()
                        .iter()
                        .enumerate()
                        .map(|(s, subj)| {
                            forecast_msfe(&out.decomposition.total(s), subj.data(), plan.blocks[s][f].clone())
                        })
                        .collect(),
                    Err(_) => vec![Some(T::lit(f64::NAN)); k],
                })
                .collect())
        })
        .collect();

    let mut acc = Accumulator::new(grid.n_cells(), k);
    for (f, res) in fold_results.into_iter().enumerate() {
        match res {
            Ok(cells) => {
                for (c, scores) in cells.into_iter().enumerate() {
                    for (s, v) in scores.into_iter().enumerate() {
                        match v {
                            Some(v) if v.is_finite_value() => {
                                acc.sums[c][s].0 += v;
                                acc.sums[c][s].1 += 1;
                            }
                            Some(_) => acc.fail(c, format!("fold {}: solver failed", f + 1)),
                            None => {}
                        }
                    }
                }
            }
            Err(reason) => (0..grid.n_cells()).for_each(|c| acc.fail(c, reason.clone())),
        }
    }
    let table = acc.finish(grid, CvScheme::Bcv, subject_ids(data))?;
    refit(data, p, grid, weights, cfg, table)
}

/// Default rolling window: half of the shortest series.
pub fn default_window<T: Real>(data: &MultiSubjectSeries<T>) -> usize {
    data.lengths().into_iter().min().unwrap_or(0) / 2
}

/// Rolling-window cross-validation: at every origin fit on the trailing
/// `window` points of each subject and score the next observation.
pub fn rwcv_select<T: Real>(
    data: &MultiSubjectSeries<T>,
    p: usize,
    grid: &LambdaGrid<T>,
    weights: Option<&AdaptiveWeights<T>>,
    cfg: &SolverConfig<T>,
    window: usize,
) -> Result<CvFit<T>> {
    let k = data.len();
    let lengths = data.lengths();
    let min_len = lengths.iter().copied().min().unwrap_or(0);
    let max_len = lengths.iter().copied().max().unwrap_or(0);
    if window < p + 2 || window >= min_len {
        return Err(Error::InvalidArgument(format!(
            "rolling window {window} must be at least {} and below the shortest series ({min_len})",
            p + 2
        )));
    }
    let origins: Vec<usize> = (0..max_len - window).collect();
    let results: Vec<std::result::Result<(Vec<usize>, Vec<Vec<Option<T>>>), String>> = origins
        .par_iter()
        .map(|&o| {
            let members: Vec<usize> = (0..k).filter(|&s| o + window < lengths[s]).collect();
            let regs = members
                .iter()
                .map(|&s| build_regression_segments(data.subjects()[s].data(), p, &[o..o + window]))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| format!("origin {o}: {e}"))?;
            let problem = Problem::new(&regs).map_err(|e| format!("origin {o}: {e}"))?;
            let sub_grid = grid.select(&members);
            let sub_weights = weights.map(|w| w.select(&members));
            let path = fit_path(&problem, &sub_grid, sub_weights.as_ref(), cfg);
            let t = o + window;
            let scores = path
                .into_iter()
                .map(|cell| match cell.result {
                    Ok(out) => members
                        .iter()
                        .enumerate()
                        .map(|(m, &s)| forecast_msfe(&out.decomposition.total(m), data.subjects()[s].data(), t..t + 1))
                        .collect(),
                    Err(_) => vec![Some(T::lit(f64::NAN)); members.len()],
                })
                .collect();
            Ok((members, scores))
        })
        .collect();

    let mut acc = Accumulator::new(grid.n_cells(), k);
    for (o, res) in results.into_iter().enumerate() {
        match res {
            Ok((members, cells)) => {
                for (c, scores) in cells.into_iter().enumerate() {
                    for (m, v) in scores.into_iter().enumerate() {
                        match v {
                            Some(v) if v.is_finite_value() => {
                                acc.sums[c][members[m]].0 += v;
                                acc.sums[c][members[m]].1 += 1;
                            }
                            Some(_) => acc.fail(c, format!("origin {o}: solver failed")),
                            None => {}
                        }
                    }
                }
            }
            Err(reason) => (0..grid.n_cells()).for_each(|c| acc.fail(c, reason.clone())),
        }
    }
    let table = acc.finish(grid, CvScheme::Rwcv, subject_ids(data))?;
    refit(data, p, grid, weights, cfg, table)
}
