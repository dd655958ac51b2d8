//! End-to-end estimators: multi-subject (common + unique) and per-subject
//! baselines, with penalties chosen by cross-validation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cv::{bcv_select, default_window, make_blocked_folds, rwcv_select, CvFit, CvScheme, CvTable};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::{
    build_grid, build_individual_grid, fista_solve, LambdaGrid, PenaltySpec, Problem, SolverConfig,
    SolverDiagnostics,
};
use crate::var::{build_regression, MultiSubjectSeries};
use crate::weights::{
    build_adaptive_weights, default_ridge_multipliers, initial_lasso, initial_ml, initial_ridge, ml_thresholded,
    sample_size_weights, AdaptiveWeights, InitialEstimates, InitialMethod, LassoInitOptions, WeightOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    MultivarStandard,
    MultivarAdaptive(InitialKind),
    K1MlThresh,
    K1Adaptive(InitialKind),
}

/// Initial estimator behind adaptive weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InitialKind {
    Ml,
    Ridge,
    Lasso,
}

impl InitialKind {
    fn method(self) -> InitialMethod {
        match self {
            Self::Ml => InitialMethod::MaximumLikelihood,
            Self::Ridge => InitialMethod::Ridge,
            Self::Lasso => InitialMethod::Lasso,
        }
    }
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::MultivarStandard,
        Method::MultivarAdaptive(InitialKind::Ml),
        Method::MultivarAdaptive(InitialKind::Ridge),
        Method::MultivarAdaptive(InitialKind::Lasso),
        Method::K1MlThresh,
        Method::K1Adaptive(InitialKind::Ml),
        Method::K1Adaptive(InitialKind::Ridge),
        Method::K1Adaptive(InitialKind::Lasso),
    ];

    pub fn name(self) -> &'static str {
        use InitialKind::*;
        match self {
            Self::MultivarStandard => "multivar-standard",
            Self::MultivarAdaptive(Ml) => "multivar-adaptive-ml",
            Self::MultivarAdaptive(Ridge) => "multivar-adaptive-ridge",
            Self::MultivarAdaptive(Lasso) => "multivar-adaptive-lasso",
            Self::K1MlThresh => "k1-ml-thresh",
            Self::K1Adaptive(Ml) => "k1-adaptive-ml",
            Self::K1Adaptive(Ridge) => "k1-adaptive-ridge",
            Self::K1Adaptive(Lasso) => "k1-adaptive-lasso",
        }
    }

    /// Accepts the canonical names plus the short forms `standard`,
    /// `adaptive-{ml,ridge,lasso}` (multi-subject) and `ml-thresh`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        if let Some(m) = Self::ALL.iter().find(|m| m.name() == s) {
            return Some(*m);
        }
        let short = match s.as_str() {
            "standard" | "multivar" => Self::MultivarStandard,
            "adaptive-ml" => Self::MultivarAdaptive(InitialKind::Ml),
            "adaptive-ridge" => Self::MultivarAdaptive(InitialKind::Ridge),
            "adaptive-lasso" | "adaptive" => Self::MultivarAdaptive(InitialKind::Lasso),
            "ml-thresh" | "k1-ml" => Self::K1MlThresh,
            _ => return None,
        };
        Some(short)
    }

    /// Whether a common-effects matrix is estimated.
    pub fn has_common(self) -> bool {
        matches!(self, Self::MultivarStandard | Self::MultivarAdaptive(_))
    }

    /// Magnitude at or below which an estimate counts as zero.
    pub fn zero_tol(self) -> f64 {
        match self {
            Self::K1MlThresh => 0.0,
            _ => crate::metrics::DEFAULT_ZERO_TOL,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidArgument(format!("unknown method '{s}', expected one of {}", names.join(", ")))
        })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

/// Penalty levels actually used for the final fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPenalty<T> {
    /// `None` for per-subject methods.
    pub lambda1: Option<T>,
    pub lambda2: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct EstimationConfig<T: Real> {
    pub lag_order: usize,
    pub folds: usize,
    pub scheme: CvScheme,
    /// Rolling window length; half the shortest series when `None`.
    pub window: Option<usize>,
    pub n_lambda1: usize,
    pub n_lambda2: usize,
    /// Smallest grid value as a fraction of the largest.
    pub grid_ratio: T,
    pub weights: WeightOptions<T>,
    pub solver: SolverConfig<T>,
    pub ridge_multipliers: Vec<T>,
    pub lasso_init: LassoInitOptions<T>,
    pub threshold_level: f64,
    pub center: bool,
    /// Rescale each variable to unit variance; coefficients are then reported on that scale.
    pub standardize: bool,
    /// Skip cross-validation and fit at these penalties.
    pub fixed_penalty: Option<SelectedPenalty<T>>,
}

impl<T: Real> Default for EstimationConfig<T> {
    fn default() -> Self {
        Self {
            lag_order: 1,
            folds: 10,
            scheme: CvScheme::Bcv,
            window: None,
            n_lambda1: 10,
            n_lambda2: 10,
            grid_ratio: T::lit(1e-4),
            weights: WeightOptions::default(),
            solver: SolverConfig::default(),
            ridge_multipliers: default_ridge_multipliers(),
            lasso_init: LassoInitOptions::default(),
            threshold_level: 0.05,
            center: true,
            standardize: false,
            fixed_penalty: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Estimate<T: Real> {
    pub method: Method,
    pub subject_ids: Vec<String>,
    /// Column means removed before fitting, per subject.
    pub means: Vec<Vec<T>>,
    /// Standard deviations divided out when standardizing.
    pub scales: Option<Vec<Vec<T>>>,
    pub common: Option<DMatrix<T>>,
    pub unique: Option<Vec<DMatrix<T>>>,
    /// Per-subject `d × dp` transition matrices `[Φ₁ … Φ_p]`.
    pub totals: Vec<DMatrix<T>>,
    /// One table for joint methods, one per subject for per-subject methods.
    pub cv_tables: Vec<CvTable<T>>,
    pub penalty: Option<SelectedPenalty<T>>,
    pub diagnostics: Vec<SolverDiagnostics>,
    pub initial: Option<InitialEstimates<T>>,
}

fn initial_estimates<T: Real>(
    data: &MultiSubjectSeries<T>,
    kind: InitialKind,
    cfg: &EstimationConfig<T>,
) -> Result<InitialEstimates<T>> {
    let p = cfg.lag_order;
    let est = match kind.method() {
        InitialMethod::MaximumLikelihood => initial_ml(data, p)?,
        InitialMethod::Ridge => initial_ridge(data, p, &cfg.ridge_multipliers, cfg.folds)?,
        InitialMethod::Lasso => initial_lasso(data, p, &cfg.lasso_init)?,
    };
    if est.phis.iter().any(|m| m.iter().any(|v| !v.is_finite_value())) {
        return Err(Error::NonFinite(format!("{} initial estimates", kind.method().name())));
    }
    Ok(est)
}

fn cross_validate<T: Real>(
    data: &MultiSubjectSeries<T>,
    grid: &LambdaGrid<T>,
    weights: Option<&AdaptiveWeights<T>>,
    cfg: &EstimationConfig<T>,
) -> Result<CvFit<T>> {
    let p = cfg.lag_order;
    match cfg.scheme {
        CvScheme::Bcv => {
            let plan = make_blocked_folds(&data.lengths(), cfg.folds, p)?;
            bcv_select(data, p, grid, weights, &cfg.solver, &plan)
        }
        CvScheme::Rwcv => {
            let window = cfg.window.unwrap_or_else(|| default_window(data));
            rwcv_select(data, p, grid, weights, &cfg.solver, window)
        }
    }
}

fn joint<T: Real>(
    data: &MultiSubjectSeries<T>,
    weights: Option<AdaptiveWeights<T>>,
    cfg: &EstimationConfig<T>,
) -> Result<(crate::solver::SolverOutput<T>, Vec<CvTable<T>>, SelectedPenalty<T>)> {
    if let Some(fixed) = &cfg.fixed_penalty {
        let regs = regressions(data, cfg.lag_order)?;
        let problem = Problem::new(&regs)?;
        let lambda1 = fixed
            .lambda1
            .ok_or_else(|| Error::InvalidArgument("joint methods need a fixed lambda1".into()))?;
        let pen = PenaltySpec { lambda1, lambda2: fixed.lambda2.clone(), weights, estimate_common: true };
        let out = fista_solve(&problem, &pen, &cfg.solver, None)?;
        return Ok((out, Vec::new(), fixed.clone()));
    }
    let regs = regressions(data, cfg.lag_order)?;
    let problem = Problem::new(&regs)?;
    let grid = build_grid(&problem, weights.as_ref(), cfg.n_lambda1, cfg.n_lambda2, cfg.grid_ratio)?;
    let fit = cross_validate(data, &grid, weights.as_ref(), cfg)?;
    let selected = SelectedPenalty { lambda1: Some(fit.penalty.lambda1), lambda2: fit.penalty.lambda2.clone() };
    Ok((fit.output, vec![fit.table], selected))
}

fn regressions<T: Real>(data: &MultiSubjectSeries<T>, p: usize) -> Result<Vec<crate::var::RegressionForm<T>>> {
    data.subjects().iter().map(|s| build_regression(s, p)).collect()
}

/// Fits `method` to `data` (centered first unless disabled).
pub fn estimate<T: Real>(data: &MultiSubjectSeries<T>, method: Method, cfg: &EstimationConfig<T>) -> Result<Estimate<T>> {
    if cfg.lag_order == 0 {
        return Err(Error::InvalidArgument("lag order must be at least 1".into()));
    }
    let (data, means) = if cfg.center {
        data.centered()
    } else {
        (data.clone(), vec![vec![T::zero(); data.dim()]; data.len()])
    };
    let (data, scales) = if cfg.standardize {
        let (scaled, sds) = data.scaled();
        (scaled, Some(sds))
    } else {
        (data, None)
    };
    let subject_ids: Vec<String> = data.subjects().iter().map(|s| s.id().to_string()).collect();
    let base = Estimate {
        method,
        subject_ids,
        means,
        scales,
        common: None,
        unique: None,
        totals: Vec::new(),
        cv_tables: Vec::new(),
        penalty: None,
        diagnostics: Vec::new(),
        initial: None,
    };
    match method {
        Method::MultivarStandard | Method::MultivarAdaptive(_) => {
            let (weights, initial) = match method {
                Method::MultivarAdaptive(kind) => {
                    let init = initial_estimates(&data, kind, cfg)?;
                    let sw = sample_size_weights(&data, cfg.lag_order);
                    (Some(build_adaptive_weights(&init, &sw, &cfg.weights)?), Some(init))
                }
                _ => (None, None),
            };
            let (out, tables, penalty) = joint(&data, weights, cfg)?;
            let dec = out.decomposition;
            Ok(Estimate {
                totals: dec.totals(),
                common: Some(dec.common),
                unique: Some(dec.unique),
                cv_tables: tables,
                penalty: Some(penalty),
                diagnostics: vec![out.diagnostics],
                initial,
                ..base
            })
        }
        Method::K1MlThresh => {
            let models = ml_thresholded(&data, cfg.lag_order, cfg.threshold_level)?;
            Ok(Estimate { totals: models.iter().map(|m| m.stacked()).collect(), ..base })
        }
        Method::K1Adaptive(kind) => {
            let init = initial_estimates(&data, kind, cfg)?;
            let mut totals = Vec::with_capacity(data.len());
            let mut tables = Vec::new();
            let mut lambda2 = Vec::with_capacity(data.len());
            let mut diagnostics = Vec::with_capacity(data.len());
            for k in 0..data.len() {
                let single = data.select(&[k])?;
                let weights = AdaptiveWeights::individual(&init.phis[k..=k], &cfg.weights);
                let regs = regressions(&single, cfg.lag_order)?;
                let problem = Problem::new(&regs)?;
                let (out, lam) = if let Some(fixed) = &cfg.fixed_penalty {
                    let lam = *fixed.lambda2.get(k).ok_or_else(|| {
                        Error::InvalidArgument(format!("fixed penalty has no lambda2 for subject {}", k + 1))
                    })?;
                    let pen = PenaltySpec::individual(vec![lam], Some(weights));
                    (fista_solve(&problem, &pen, &cfg.solver, None)?, lam)
                } else {
                    let grid = build_individual_grid(&problem, Some(&weights), cfg.n_lambda2, cfg.grid_ratio)?;
                    let fit = cross_validate(&single, &grid, Some(&weights), cfg)?;
                    tables.push(fit.table);
                    (fit.output, fit.penalty.lambda2[0])
                };
                totals.push(out.decomposition.total(0));
                lambda2.push(lam);
                diagnostics.push(out.diagnostics);
            }
            Ok(Estimate {
                totals,
                cv_tables: tables,
                penalty: Some(SelectedPenalty { lambda1: None, lambda2 }),
                diagnostics,
                initial: Some(init),
                ..base
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var::{simulate_var, SubjectSeries, VarModel};

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::parse("adaptive-lasso"), Some(Method::MultivarAdaptive(InitialKind::Lasso)));
        assert!(Method::parse("gimme").is_none());
        assert!(!Method::K1MlThresh.has_common());
    }

    fn small_data() -> MultiSubjectSeries<f64> {
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.3, 0.4]);
        let model = VarModel::new(vec![phi], DMatrix::identity(2, 2)).unwrap();
        let subjects = (0..3)
            .map(|k| SubjectSeries::new(format!("s{k}"), simulate_var(&model, 60, 50, k).unwrap().data().clone()).unwrap())
            .collect();
        MultiSubjectSeries::new(subjects).unwrap()
    }

    #[test]
    fn every_method_runs() {
        let data = small_data();
        let cfg = EstimationConfig { folds: 3, n_lambda1: 3, n_lambda2: 3, ..Default::default() };
        for m in Method::ALL {
            let est = estimate(&data, m, &cfg).unwrap();
            assert_eq!(est.totals.len(), 3);
            assert_eq!(est.common.is_some(), m.has_common());
            assert!(est.totals.iter().all(|t| t.shape() == (2, 2)));
        }
    }

    #[test]
    fn fixed_penalty_reproduces_fit() {
        let data = small_data();
        let cfg = EstimationConfig { folds: 3, n_lambda1: 3, n_lambda2: 3, ..Default::default() };
        let m = Method::MultivarAdaptive(InitialKind::Ml);
        let est = estimate(&data, m, &cfg).unwrap();
        let refit = estimate(&data, m, &EstimationConfig { fixed_penalty: est.penalty.clone(), ..cfg }).unwrap();
        assert_eq!(est.totals, refit.totals);
        assert_eq!(est.common, refit.common);
    }
}
