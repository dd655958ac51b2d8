//! Run configuration: defaults, optional TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use multivar_core::estimate::InitialKind;
use multivar_core::simulate::CommonUniqueSpec;
use multivar_core::solver::{SolverConfig, StepRule};
use multivar_core::weights::WeightOptions;
use multivar_core::{Condition, CvScheme, EstimationConfig, HeterogeneitySpec, Method};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepChoice {
    Fixed,
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Methods to run; `fit` uses the first.
    pub methods: Vec<Method>,
    pub cv: CvScheme,
    pub folds: usize,
    /// Rolling-window length for `rwcv`.
    pub window: Option<usize>,
    pub grid_n1: usize,
    pub grid_n2: usize,
    pub grid_ratio: f64,
    pub alpha: f64,
    pub lag_order: usize,
    pub standardize: bool,
    pub step: StepChoice,
    pub max_iter: usize,
    pub tol: f64,
    pub threshold_level: f64,
    /// Fixed penalties; cross-validation is skipped when set.
    pub lambda1: Option<f64>,
    pub lambda2: Option<Vec<f64>>,

    pub seed: u64,
    pub reps: usize,
    pub conditions: Vec<Condition>,
    pub t: Vec<usize>,
    pub k: usize,
    pub d: usize,
    /// Explicit group proportions instead of a named condition.
    pub pi_p: Option<Vec<f64>>,
    pub pi_i: Option<Vec<f64>>,
    /// Common/unique fill proportions instead of a named condition.
    pub common: Option<f64>,
    pub unique: Option<f64>,
    pub random_sign: bool,

    pub figures: bool,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::MultivarAdaptive(InitialKind::Lasso)],
            cv: CvScheme::Bcv,
            folds: 10,
            window: None,
            grid_n1: 10,
            grid_n2: 10,
            grid_ratio: 1e-4,
            alpha: 1.0,
            lag_order: 1,
            standardize: false,
            step: StepChoice::Fixed,
            max_iter: 5000,
            tol: 1e-6,
            threshold_level: 0.05,
            lambda1: None,
            lambda2: None,
            seed: 1,
            reps: 20,
            conditions: vec![Condition::No],
            t: vec![100],
            k: 15,
            d: 10,
            pi_p: None,
            pi_i: None,
            common: None,
            unique: None,
            random_sign: false,
            figures: false,
            workers: None,
            out: PathBuf::from("out"),
        }
    }
}

/// What `simulate` and `benchmark` generate.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Heterogeneity { label: String, spec: HeterogeneitySpec },
    CommonUnique(CommonUniqueSpec),
}

impl Design {
    pub fn label(&self) -> String {
        match self {
            Self::Heterogeneity { label, .. } => label.clone(),
            Self::CommonUnique(s) => format!("common{}-unique{}", s.prop_fill_com, s.prop_fill_ind),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::validation(m));
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.reps == 0 {
            return bad("replication count must be at least 1");
        }
        if self.folds < 2 {
            return bad("at least 2 folds are required");
        }
        if self.grid_n1 == 0 || self.grid_n2 == 0 {
            return bad("grid sizes must be at least 1");
        }
        if !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) {
            return bad("grid ratio must lie in (0,1)");
        }
        if !(self.alpha >= 1.0) {
            return bad("alpha must be at least 1");
        }
        if self.lag_order == 0 {
            return bad("lag order must be at least 1");
        }
        if self.k == 0 || self.d == 0 {
            return bad("k and d must be positive");
        }
        if self.t.is_empty() || self.t.contains(&0) {
            return bad("at least one positive series length is required");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if self.pi_p.is_some() != self.pi_i.is_some() {
            return bad("pi_p and pi_i must be given together");
        }
        if self.common.is_some() != self.unique.is_some() {
            return bad("common and unique proportions must be given together");
        }
        if self.conditions.is_empty() && self.pi_p.is_none() && self.common.is_none() {
            return bad("no condition given");
        }
        Ok(())
    }

    /// Designs in output order. Explicit proportions override named conditions.
    pub fn designs(&self) -> CliResult<Vec<Design>> {
        if let (Some(com), Some(ind)) = (self.common, self.unique) {
            let mut s = CommonUniqueSpec::new(self.k, self.d, com, ind);
            s.random_sign = self.random_sign;
            return Ok(vec![Design::CommonUnique(s)]);
        }
        if let (Some(pi_p), Some(pi_i)) = (&self.pi_p, &self.pi_i) {
            let mut spec = Condition::No.spec();
            spec.pi_p = pi_p.clone();
            spec.pi_i = pi_i.clone();
            return Ok(vec![self.heterogeneity("custom".into(), spec)?]);
        }
        self.conditions.iter().map(|c| self.heterogeneity(c.name().into(), c.spec())).collect()
    }

    fn heterogeneity(&self, label: String, mut spec: HeterogeneitySpec) -> CliResult<Design> {
        spec.k = self.k;
        spec.d = self.d;
        spec.random_sign = self.random_sign;
        spec.group_sizes().map_err(|e| CliError::validation(format!("condition {label}: {e}")))?;
        Ok(Design::Heterogeneity { label, spec })
    }

    pub fn estimation(&self) -> EstimationConfig<f64> {
        let solver = SolverConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            step: match self.step {
                StepChoice::Fixed => StepRule::Fixed,
                StepChoice::Backtracking => StepRule::Backtracking { factor: 0.5 },
            },
        };
        let mut cfg = EstimationConfig::<f64> {
            lag_order: self.lag_order,
            folds: self.folds,
            scheme: self.cv,
            window: self.window,
            n_lambda1: self.grid_n1,
            n_lambda2: self.grid_n2,
            grid_ratio: self.grid_ratio,
            weights: WeightOptions { alpha: self.alpha, ..WeightOptions::default() },
            solver,
            threshold_level: self.threshold_level,
            standardize: self.standardize,
            ..EstimationConfig::default()
        };
        cfg.lasso_init.folds = self.folds;
        cfg.lasso_init.solver = solver;
        if let Some(l2) = &self.lambda2 {
            cfg.fixed_penalty = Some(multivar_core::estimate::SelectedPenalty { lambda1: self.lambda1, lambda2: l2.clone() });
        }
        cfg
    }

    pub fn method(&self) -> Method {
        self.methods[0]
    }
}
