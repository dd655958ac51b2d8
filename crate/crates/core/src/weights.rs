//! Initial per-subject estimators and the adaptive penalty weights built
//! from their entrywise weighted medians.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cv::{forecast_msfe, forecast_row_msfe, make_blocked_folds};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::{
    fista_solve, fit_path, log_spaced_desc, EffectsDecomposition, LambdaGrid, PenaltySpec, Problem, SolverConfig,
};
use crate::var::{build_regression, build_regression_segments, fit_ols_regression, MultiSubjectSeries, VarModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitialMethod {
    MaximumLikelihood,
    Ridge,
    Lasso,
}

impl InitialMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::MaximumLikelihood => "ml",
            Self::Ridge => "ridge",
            Self::Lasso => "lasso",
        }
    }
}

/// One `d × dp` preliminary estimate per subject.
#[derive(Debug, Clone)]
pub struct InitialEstimates<T: Real> {
    pub phis: Vec<DMatrix<T>>,
    pub method: InitialMethod,
    /// Penalty chosen per subject (ridge γ or Lasso λ); `None` for ML.
    pub tuning: Vec<Option<T>>,
}

/// Entrywise penalty multipliers for the common and unique blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveWeights<T: Real> {
    pub common: DMatrix<T>,
    pub unique: Vec<DMatrix<T>>,
    pub alpha: T,
    pub cap: T,
}

impl<T: Real> AdaptiveWeights<T> {
    /// Every weight equal to `value`.
    pub fn uniform(d: usize, dp: usize, k: usize, value: T) -> Self {
        Self {
            common: DMatrix::from_element(d, dp, value),
            unique: vec![DMatrix::from_element(d, dp, value); k],
            alpha: T::one(),
            cap: value,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self { unique: indices.iter().map(|&i| self.unique[i].clone()).collect(), ..self.clone() }
    }

    /// Classical single-subject adaptive-Lasso weights `1/|φ̃|^α`, one set
    /// per subject. The common block is pinned at the cap.
    pub fn individual(phis: &[DMatrix<T>], opts: &WeightOptions<T>) -> Self {
        let (d, dp) = phis[0].shape();
        Self {
            common: DMatrix::from_element(d, dp, opts.cap),
            unique: phis.iter().map(|m| m.map(|v| opts.weight(v))).collect(),
            alpha: opts.alpha,
            cap: opts.cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightOptions<T: Real> {
    pub alpha: T,
    pub floor_eps: T,
    pub cap: T,
}

impl<T: Real> Default for WeightOptions<T> {
    fn default() -> Self {
        Self { alpha: T::one(), floor_eps: T::lit(1e-8), cap: T::lit(1e8) }
    }
}

impl<T: Real> WeightOptions<T> {
    fn weight(&self, divisor: T) -> T {
        let w = T::one() / divisor.abs().max(self.floor_eps).powf(self.alpha);
        w.min(self.cap)
    }
}

fn estimates_shape<T: Real>(phis: &[DMatrix<T>]) -> Result<(usize, usize)> {
    let first = phis.first().ok_or_else(|| Error::InvalidArgument("no initial estimates".into()))?;
    let shape = first.shape();
    if phis.iter().any(|m| m.shape() != shape) {
        return Err(Error::Dimension("initial estimates differ in shape".into()));
    }
    Ok(shape)
}

/// Per-subject least squares (maximum likelihood under Gaussian noise).
pub fn initial_ml<T: Real>(data: &MultiSubjectSeries<T>, p: usize) -> Result<InitialEstimates<T>> {
    let phis = data
        .subjects()
        .iter()
        .map(|s| Ok(fit_ols_regression(&build_regression(s, p)?)?.model.stacked()))
        .collect::<Result<Vec<_>>>()?;
    let k = phis.len();
    Ok(InitialEstimates { phis, method: InitialMethod::MaximumLikelihood, tuning: vec![None; k] })
}

/// `Φ = C (S + γI)⁻¹` from Gram statistics.
fn ridge_from_gram<T: Real>(s: &DMatrix<T>, c: &DMatrix<T>, gamma: T) -> Option<DMatrix<T>> {
    let mut a = s.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += gamma;
    }
    let chol = a.cholesky()?;
    Some(chol.solve(&c.transpose()).transpose())
}

/// Ridge-regularized least squares `argmin ‖Y − ΦZ‖² + γ‖Φ‖²`.
pub fn ridge_fit<T: Real>(y: &DMatrix<T>, z: &DMatrix<T>, gamma: T) -> Result<DMatrix<T>> {
    let s = z * z.transpose();
    let c = y * z.transpose();
    ridge_from_gram(&s, &c, gamma)
        .or_else(|| {
            // γ = 0 on a singular design; fall back to the pseudo-inverse route.
            let svd = (z * z.transpose()).svd(true, true);
            svd.pseudo_inverse(T::eps()).ok().map(|pinv| &c * pinv)
        })
        .ok_or_else(|| Error::InvalidArgument("ridge system could not be solved".into()))
}

/// 20 log-spaced multipliers in `[1e-4, 1e2]`; the ridge penalty is the
/// multiplier times `tr(ZZᵀ)/dp`.
pub fn default_ridge_multipliers<T: Real>() -> Vec<T> {
    let mut v = crate::solver::log_spaced_desc(T::lit(1e2), T::lit(1e-6), 20);
    v.reverse();
    v
}

/// Per-subject ridge with the penalty picked by blocked cross-validation.
pub fn initial_ridge<T: Real>(
    data: &MultiSubjectSeries<T>,
    p: usize,
    multipliers: &[T],
    folds: usize,
) -> Result<InitialEstimates<T>> {
    if multipliers.is_empty() || multipliers.iter().any(|&m| !(m > T::zero())) {
        return Err(Error::InvalidArgument("ridge grid must be non-empty and positive".into()));
    }
    let mut phis = Vec::with_capacity(data.len());
    let mut tuning = Vec::with_capacity(data.len());
    for s in data.subjects() {
        let full = build_regression(s, p)?;
        let dp = full.z.nrows();
        let scale = (&full.z * full.z.transpose()).trace() / T::count(dp);
        let scale = if scale > T::zero() { scale } else { T::one() };
        // Descending γ so that ties resolve toward more shrinkage.
        let mut gammas: Vec<T> = multipliers.iter().map(|&m| m * scale).collect();
        gammas.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let plan = make_blocked_folds(&[s.len()], folds, p)?;
        let mut err = vec![(T::zero(), 0usize); gammas.len()];
        for block in &plan.blocks[0] {
            let train = build_regression_segments(s.data(), p, &plan.training_segments(0, block))?;
            let gram = &train.z * train.z.transpose();
            let cross = &train.y * train.z.transpose();
            for (g, e) in gammas.iter().zip(err.iter_mut()) {
                if let Some(phi) = ridge_from_gram(&gram, &cross, *g) {
                    if let Some(m) = forecast_msfe(&phi, s.data(), block.clone()) {
                        e.0 += m;
                        e.1 += 1;
                    }
                }
            }
        }
        let mut best = 0;
        let mut best_err = None;
        for (i, &(sum, n)) in err.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let m = sum / T::count(n);
            if best_err.map_or(true, |b| m < b) {
                best = i;
                best_err = Some(m);
            }
        }
        phis.push(ridge_fit(&full.y, &full.z, gammas[best])?);
        tuning.push(Some(gammas[best]));
    }
    Ok(InitialEstimates { phis, method: InitialMethod::Ridge, tuning })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoInitOptions<T: Real> {
    pub n_lambda: usize,
    pub ratio: T,
    pub folds: usize,
    /// Pick the largest λ whose CV error is within `se_rule` standard
    /// errors of the minimum; 0 selects the minimum itself.
    pub se_rule: T,
    pub solver: SolverConfig<T>,
}

impl<T: Real> Default for LassoInitOptions<T> {
    fn default() -> Self {
        Self { n_lambda: 20, ratio: T::lit(1e-3), folds: 10, se_rule: T::one(), solver: SolverConfig::default() }
    }
}

/// Index into a descending λ path chosen from per-fold errors `err[cell][fold]`.
fn select_lambda<T: Real>(err: &[Vec<Option<T>>], se_rule: T) -> Option<usize> {
    let stats: Vec<Option<(T, T)>> = err
        .iter()
        .map(|folds| {
            let vals: Option<Vec<T>> = folds.iter().copied().collect();
            let vals = vals?;
            if vals.is_empty() || vals.iter().any(|v| !v.is_finite_value()) {
                return None;
            }
            let n = T::count(vals.len());
            let mean = vals.iter().fold(T::zero(), |a, &b| a + b) / n;
            let var = if vals.len() > 1 {
                vals.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / (n - T::one())
            } else {
                T::zero()
            };
            Some((mean, (var / n).sqrt()))
        })
        .collect();
    let mut best: Option<(usize, T, T)> = None;
    for (i, s) in stats.iter().enumerate() {
        if let Some((m, se)) = *s {
            if best.map_or(true, |(_, b, _)| m < b) {
                best = Some((i, m, se));
            }
        }
    }
    let (idx, min, se) = best?;
    if !(se_rule > T::zero()) {
        return Some(idx);
    }
    stats.iter().position(|s| s.map_or(false, |(m, _)| m <= min + se_rule * se))
}

/// Standard deviation of each lagged predictor (one per variable, repeated
/// over lags); 1 for constant series.
fn predictor_scales<T: Real>(data: &DMatrix<T>, p: usize) -> Vec<T> {
    let n = data.ncols();
    let sd: Vec<T> = data
        .row_iter()
        .map(|row| {
            let mean = row.iter().fold(T::zero(), |a, &b| a + b) / T::count(n.max(1));
            let ss = row.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean));
            let v = (ss / T::count(n.saturating_sub(1).max(1))).sqrt();
            if v > T::zero() && v.is_finite_value() {
                v
            } else {
                T::one()
            }
        })
        .collect();
    (0..p).flat_map(|_| sd.iter().copied()).collect()
}

/// Per-subject, equation-wise Lasso on standardized predictors: each row
/// of `Φ` gets its own λ,
/// picked by blocked cross-validation on that equation's forecast error.
/// The reported tuning value is the mean λ over equations.
pub fn initial_lasso<T: Real>(
    data: &MultiSubjectSeries<T>,
    p: usize,
    opts: &LassoInitOptions<T>,
) -> Result<InitialEstimates<T>> {
    if opts.n_lambda == 0 || !(opts.ratio > T::zero() && opts.ratio < T::one()) {
        return Err(Error::InvalidArgument("Lasso grid needs n >= 1 and ratio in (0,1)".into()));
    }
    let scales = log_spaced_desc(T::one(), opts.ratio, opts.n_lambda);
    let grid = LambdaGrid {
        lambda1: vec![T::zero()],
        lambda2_scale: scales.clone(),
        lambda2_max: vec![T::one()],
        estimate_common: false,
    };
    let mut phis = Vec::with_capacity(data.len());
    let mut tuning = Vec::with_capacity(data.len());
    for s in data.subjects() {
        let problem = Problem::new(&[build_regression(s, p)?])?;
        let (d, dp) = (problem.dim(), problem.n_coef());
        // Penalising sd_j·|φ_ij| is the Lasso on standardized predictors.
        let sd = predictor_scales(s.data(), p);
        let grad = problem.smooth_gradient(&EffectsDecomposition::zeros(d, dp, 1))?;
        let row_max: Vec<T> = (0..d)
            .map(|i| {
                let m = grad.unique[0]
                    .row(i)
                    .iter()
                    .zip(&sd)
                    .fold(T::zero(), |a, (&g, &w)| a.max(g.abs() / w));
                (m * (T::one() + T::lit(8.0) * T::eps())).max(T::eps())
            })
            .collect();
        let mut weights = AdaptiveWeights::uniform(d, dp, 1, T::one());
        for i in 0..d {
            for j in 0..dp {
                weights.unique[0][(i, j)] = row_max[i] * sd[j];
            }
        }
        let plan = make_blocked_folds(&[s.len()], opts.folds, p)?;
        // err[row][scale][fold]
        let mut err = vec![vec![Vec::with_capacity(plan.n_folds()); scales.len()]; d];
        for block in &plan.blocks[0] {
            let train = build_regression_segments(s.data(), p, &plan.training_segments(0, block))?;
            let fold_problem = Problem::new(&[train])?;
            for (c, cell) in fit_path(&fold_problem, &grid, Some(&weights), &opts.solver).into_iter().enumerate() {
                let rows = cell
                    .result
                    .ok()
                    .and_then(|out| forecast_row_msfe(&out.decomposition.total(0), s.data(), block.clone()));
                for (i, row_err) in err.iter_mut().enumerate() {
                    row_err[c].push(rows.as_ref().map(|r| r[i]));
                }
            }
        }
        let mut chosen = weights.clone();
        let mut lam_sum = T::zero();
        for (i, row_err) in err.iter().enumerate() {
            let pick = select_lambda(row_err, opts.se_rule)
                .ok_or_else(|| Error::NoValidCell(format!("initial Lasso for subject {} row {}", s.id(), i + 1)))?;
            let lam = row_max[i] * scales[pick];
            for j in 0..dp {
                chosen.unique[0][(i, j)] = lam * sd[j];
            }
            lam_sum += lam;
        }
        let pen = PenaltySpec::individual(vec![T::one()], Some(chosen));
        let out = fista_solve(&problem, &pen, &opts.solver, None)?;
        phis.push(out.decomposition.total(0));
        tuning.push(Some(lam_sum / T::count(d)));
    }
    Ok(InitialEstimates { phis, method: InitialMethod::Lasso, tuning })
}

/// Least squares with every coefficient whose two-sided t-test is not
/// significant at `alpha_level` set to zero.
pub fn ml_thresholded<T: Real>(
    data: &MultiSubjectSeries<T>,
    p: usize,
    alpha_level: f64,
) -> Result<Vec<VarModel<T>>> {
    if !(alpha_level > 0.0 && alpha_level <= 1.0) {
        return Err(Error::InvalidArgument(format!("significance level {alpha_level} outside (0,1]")));
    }
    data.subjects()
        .iter()
        .map(|s| {
            let fit = fit_ols_regression(&build_regression(s, p)?)?;
            let mut phi = fit.model.stacked();
            let dof = fit.residual_dof();
            if dof == 0 || alpha_level >= 1.0 {
                return Ok(fit.model);
            }
            let dist = StudentsT::new(0.0, 1.0, dof as f64)
                .map_err(|e| Error::InvalidArgument(format!("t distribution: {e}")))?;
            for i in 0..phi.nrows() {
                let sigma2 = fit.residual_variance[i].as_f64();
                for j in 0..phi.ncols() {
                    let se = (sigma2 * fit.gram_pinv[(j, j)].as_f64()).max(0.0).sqrt();
                    let est = phi[(i, j)].as_f64();
                    let p_value = if se > 0.0 {
                        2.0 * (1.0 - dist.cdf((est / se).abs()))
                    } else if est != 0.0 {
                        0.0
                    } else {
                        1.0
                    };
                    if p_value > alpha_level {
                        phi[(i, j)] = T::zero();
                    }
                }
            }
            VarModel::from_stacked(&phi, p, fit.model.noise_cov().clone())
        })
        .collect()
}

/// Lower weighted median: the smallest value whose cumulative weight
/// reaches half of the total.
pub fn weighted_median<T: Real>(values: &[T], weights: &[T]) -> Option<T> {
    let mut pairs: Vec<(T, T)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let total = pairs.iter().fold(T::zero(), |a, &(_, w)| a + w);
    if !(total > T::zero()) {
        return None;
    }
    let half = total / T::lit(2.0);
    let mut acc = T::zero();
    for &(v, w) in &pairs {
        acc += w;
        if acc >= half {
            return Some(v);
        }
    }
    pairs.last().map(|p| p.0)
}

pub fn entrywise_weighted_median<T: Real>(phis: &[DMatrix<T>], subject_weights: &[T]) -> Result<DMatrix<T>> {
    let (r, c) = estimates_shape(phis)?;
    if subject_weights.len() != phis.len() {
        return Err(Error::Dimension(format!(
            "{} subject weights for {} estimates",
            subject_weights.len(),
            phis.len()
        )));
    }
    if subject_weights.iter().any(|&w| w < T::zero()) {
        return Err(Error::InvalidArgument("subject weights must be non-negative".into()));
    }
    let mut out = DMatrix::zeros(r, c);
    let mut column = vec![T::zero(); phis.len()];
    for idx in 0..r * c {
        for (slot, m) in column.iter_mut().zip(phis) {
            *slot = m[idx];
        }
        out[idx] = weighted_median(&column, subject_weights)
            .ok_or_else(|| Error::InvalidArgument("subject weights are all zero".into()))?;
    }
    Ok(out)
}

/// Effective sample sizes `Tᵏ − p` used to weight the median.
pub fn sample_size_weights<T: Real>(data: &MultiSubjectSeries<T>, p: usize) -> Vec<T> {
    data.lengths().iter().map(|&t| T::count(t.saturating_sub(p))).collect()
}

/// Common weights `1/|median|^α` and unique weights `1/|φ̃ᵏ − median|^α`,
/// with divisors floored at `floor_eps` and weights capped at `cap`.
pub fn build_adaptive_weights<T: Real>(
    initials: &InitialEstimates<T>,
    subject_weights: &[T],
    opts: &WeightOptions<T>,
) -> Result<AdaptiveWeights<T>> {
    if opts.alpha < T::one() {
        return Err(Error::InvalidArgument("alpha must be at least 1".into()));
    }
    let median = entrywise_weighted_median(&initials.phis, subject_weights)?;
    Ok(AdaptiveWeights {
        common: median.map(|v| opts.weight(v)),
        unique: initials.phis.iter().map(|m| (m - &median).map(|v| opts.weight(v))).collect(),
        alpha: opts.alpha,
        cap: opts.cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var::SubjectSeries;
    use approx::assert_relative_eq;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn median_identical_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, -0.2, 0.3, 0.0]);
        let med = entrywise_weighted_median(&[a.clone(), a.clone(), a.clone()], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(med, a);
    }

    #[test]
    fn median_odd_equal_weights() {
        let med = entrywise_weighted_median(&[m1(0.9), m1(0.1), m1(0.5)], &[1.0; 3]).unwrap();
        assert_eq!(med[(0, 0)], 0.5);
    }

    #[test]
    fn median_weighted_crossing() {
        let med = entrywise_weighted_median(&[m1(0.0), m1(0.0), m1(1.0), m1(1.0)], &[3.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(med[(0, 0)], 0.0);
    }

    #[test]
    fn median_errors() {
        assert!(entrywise_weighted_median(&[m1(1.0)], &[0.0]).is_err());
        assert!(entrywise_weighted_median(&[m1(1.0)], &[1.0, 1.0]).is_err());
        assert!(entrywise_weighted_median::<f64>(&[], &[]).is_err());
    }

    fn initials(phis: Vec<DMatrix<f64>>) -> InitialEstimates<f64> {
        let k = phis.len();
        InitialEstimates { phis, method: InitialMethod::MaximumLikelihood, tuning: vec![None; k] }
    }

    #[test]
    fn weights_reciprocal_and_power() {
        let init = initials(vec![m1(0.5), m1(0.5), m1(0.5)]);
        let w = build_adaptive_weights(&init, &[1.0; 3], &WeightOptions::default()).unwrap();
        assert_relative_eq!(w.common[(0, 0)], 2.0);
        // Identical subjects: zero deviation is floored and capped.
        assert!(w.unique.iter().all(|u| u[(0, 0)] == 1e8));
        let opts = WeightOptions { alpha: 2.0, ..WeightOptions::default() };
        let w2 = build_adaptive_weights(&init, &[1.0; 3], &opts).unwrap();
        assert_relative_eq!(w2.common[(0, 0)], 4.0);
        let bad = WeightOptions { alpha: 0.5, ..WeightOptions::default() };
        assert!(build_adaptive_weights(&init, &[1.0; 3], &bad).is_err());
    }

    #[test]
    fn weights_monotone_in_magnitude() {
        let init = initials(vec![m1(0.1), m1(0.2), m1(0.9)]);
        let w = build_adaptive_weights(&init, &[1.0; 3], &WeightOptions::default()).unwrap();
        // deviations from median 0.2: 0.1, 0, 0.7
        assert!(w.unique[2][(0, 0)] < w.unique[0][(0, 0)]);
        assert!(w.unique[0][(0, 0)] < w.unique[1][(0, 0)]);
    }

    #[test]
    fn ridge_limits() {
        let z = DMatrix::from_row_slice(2, 6, &[1.0, 0.2, -0.5, 0.3, 0.8, 0.1, 0.3, 0.8, 0.1, -0.7, 0.2, 0.4]);
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let y = &phi * &z + DMatrix::from_fn(2, 6, |i, j| 0.01 * ((i + 2 * j) as f64).sin());
        let ols = fit_ols_regression(&crate::var::RegressionForm::new(y.clone(), z.clone(), 1).unwrap())
            .unwrap()
            .model
            .stacked();
        let tiny = ridge_fit(&y, &z, 1e-12).unwrap();
        assert!((tiny - &ols).amax() < 1e-6);
        let huge = ridge_fit(&y, &z, 1e12).unwrap();
        assert!(huge.norm() < 1e-6);
        let mut prev = f64::INFINITY;
        for g in [0.01, 0.1, 1.0, 10.0] {
            let n = ridge_fit(&y, &z, g).unwrap().norm();
            assert!(n < prev);
            prev = n;
        }
    }

    #[test]
    fn default_ridge_grid_range() {
        let g: Vec<f64> = default_ridge_multipliers();
        assert_eq!(g.len(), 20);
        assert_relative_eq!(g[0], 1e-4, epsilon = 1e-16);
        assert_relative_eq!(g[19], 1e2, epsilon = 1e-10);
    }

    #[test]
    fn threshold_level_one_keeps_everything() {
        let data = DMatrix::from_fn(2, 40, |i, j| ((i * 7 + j * 3) as f64).sin());
        let ms = MultiSubjectSeries::new(vec![SubjectSeries::new("a", data).unwrap()]).unwrap();
        let dense = ml_thresholded(&ms, 1, 1.0).unwrap();
        let ols = initial_ml(&ms, 1).unwrap();
        assert_eq!(dense[0].stacked(), ols.phis[0]);
        let sparse = ml_thresholded(&ms, 1, 0.05).unwrap();
        for (a, b) in sparse[0].stacked().iter().zip(ols.phis[0].iter()) {
            assert!(*a == 0.0 || a == b);
        }
        assert!(ml_thresholded(&ms, 1, 0.0).is_err());
    }
}
