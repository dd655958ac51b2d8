//! Support-recovery and accuracy metrics against a known truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default threshold below which a penalized estimate counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn check_shape<T: Real>(truth: &DMatrix<T>, est: &DMatrix<T>) -> Result<()> {
    if truth.shape() != est.shape() {
        return Err(Error::Dimension(format!(
            "truth is {:?}, estimate is {:?}",
            truth.shape(),
            est.shape()
        )));
    }
    Ok(())
}

/// Entry is nonzero iff `|value| > zero_tol`.
pub fn confusion<T: Real>(truth: &DMatrix<T>, est: &DMatrix<T>, zero_tol: T) -> Result<ConfusionCounts> {
    check_shape(truth, est)?;
    if !(zero_tol >= T::zero()) {
        return Err(Error::InvalidArgument("zero tolerance must be non-negative".into()));
    }
    let mut c = ConfusionCounts::default();
    for (t, e) in truth.iter().zip(est.iter()) {
        match (t.abs() > zero_tol, e.abs() > zero_tol) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    ((tp * tn - fp * fn_) / denom.sqrt()).clamp(-1.0, 1.0)
}

/// `(TP/(TP+FN), TN/(TN+FP))`, each 0 when its denominator is 0.
pub fn sensitivity_specificity(c: &ConfusionCounts) -> (f64, f64) {
    let ratio = |a: u64, b: u64| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    (ratio(c.tp, c.fn_), ratio(c.tn, c.fp))
}

/// Mean absolute bias and RMSE of one subject's coefficients.
pub fn subject_bias_rmse<T: Real>(truth: &DMatrix<T>, est: &DMatrix<T>) -> Result<(f64, f64)> {
    check_shape(truth, est)?;
    let n = truth.len();
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let (mut abs, mut sq) = (0.0, 0.0);
    for (t, e) in truth.iter().zip(est.iter()) {
        let diff = (e.as_f64() - t.as_f64()).abs();
        abs += diff;
        sq += diff * diff;
    }
    Ok((abs / n as f64, (sq / n as f64).sqrt()))
}

/// Subject-averaged mean absolute bias and RMSE.
pub fn bias_rmse<T: Real>(truth: &[DMatrix<T>], est: &[DMatrix<T>]) -> Result<(f64, f64)> {
    if truth.len() != est.len() || truth.is_empty() {
        return Err(Error::Dimension(format!("{} true vs {} estimated subjects", truth.len(), est.len())));
    }
    let mut acc = (0.0, 0.0);
    for (t, e) in truth.iter().zip(est) {
        let (b, r) = subject_bias_rmse(t, e)?;
        acc.0 += b;
        acc.1 += r;
    }
    let k = truth.len() as f64;
    Ok((acc.0 / k, acc.1 / k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub counts: ConfusionCounts,
    pub mcc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub bias: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subjects: Vec<SubjectMetrics>,
    pub mcc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub bias: f64,
    pub rmse: f64,
    pub zero_tol: f64,
}

impl MetricsReport {
    /// Compares per-subject stacked transition matrices against the truth.
    pub fn compute<T: Real>(truth: &[DMatrix<T>], est: &[DMatrix<T>], zero_tol: T) -> Result<Self> {
        if truth.len() != est.len() || truth.is_empty() {
            return Err(Error::Dimension(format!("{} true vs {} estimated subjects", truth.len(), est.len())));
        }
        let subjects = truth
            .iter()
            .zip(est)
            .map(|(t, e)| {
                let counts = confusion(t, e, zero_tol)?;
                let (sensitivity, specificity) = sensitivity_specificity(&counts);
                let (bias, rmse) = subject_bias_rmse(t, e)?;
                Ok(SubjectMetrics { counts, mcc: mcc(&counts), sensitivity, specificity, bias, rmse })
            })
            .collect::<Result<Vec<_>>>()?;
        let k = subjects.len() as f64;
        let mean = |f: fn(&SubjectMetrics) -> f64| subjects.iter().map(f).sum::<f64>() / k;
        Ok(Self {
            mcc: mean(|s| s.mcc),
            sensitivity: mean(|s| s.sensitivity),
            specificity: mean(|s| s.specificity),
            bias: mean(|s| s.bias),
            rmse: mean(|s| s.rmse),
            subjects,
            zero_tol: zero_tol.as_f64(),
        })
    }
}
