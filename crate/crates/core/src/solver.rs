//! Penalized multi-subject VAR objective and its FISTA solver.
//!
//! The joint parameter is `(Γ⁰, Γ¹, …, Γᴷ)` with subject totals
//! `Φᵏ = Γ⁰ + Γᵏ`. The smooth part is
//! `(1/N) Σₖ ‖Yᵏ − ΦᵏZᵏ‖²` with `N = Σₖ d·nₖ`, and the penalty is
//! `λ₁‖W⁰∘Γ⁰‖₁ + Σₖ λ₂ₖ‖Wᵏ∘Γᵏ‖₁`.
//!
//! Internally every subject is reduced to its Gram statistics
//! `Sᵏ = ZᵏZᵏᵀ`, `Cᵏ = YᵏZᵏᵀ` and `tr(YᵏYᵏᵀ)`, so an iteration costs
//! one `d × dp × dp` product per subject.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::var::RegressionForm;
use crate::weights::AdaptiveWeights;

/// Common effects plus one unique matrix per subject, each `d × dp`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectsDecomposition<T: Real> {
    pub common: DMatrix<T>,
    pub unique: Vec<DMatrix<T>>,
}

impl<T: Real> EffectsDecomposition<T> {
    pub fn zeros(d: usize, dp: usize, k: usize) -> Self {
        Self { common: DMatrix::zeros(d, dp), unique: vec![DMatrix::zeros(d, dp); k] }
    }

    pub fn n_subjects(&self) -> usize {
        self.unique.len()
    }

    /// `Γ⁰ + Γᵏ`, always recomputed.
    pub fn total(&self, k: usize) -> DMatrix<T> {
        &self.common + &self.unique[k]
    }

    pub fn totals(&self) -> Vec<DMatrix<T>> {
        (0..self.unique.len()).map(|k| self.total(k)).collect()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &DMatrix<T>> {
        std::iter::once(&self.common).chain(self.unique.iter())
    }

    /// Number of entries where a total is (numerically) zero although one of
    /// its parts is not, i.e. the common and unique parts cancel.
    pub fn cancellations(&self, tol: T) -> usize {
        self.unique
            .iter()
            .map(|u| {
                self.common
                    .iter()
                    .zip(u.iter())
                    .filter(|(&c, &g)| (c + g).abs() < tol && (c != T::zero() || g != T::zero()))
                    .count()
            })
            .sum()
    }
}

/// Penalty levels and optional adaptive weights. Without weights every
/// entry is weighted by one (the standard multi-VAR penalty).
#[derive(Debug, Clone)]
pub struct PenaltySpec<T: Real> {
    pub lambda1: T,
    pub lambda2: Vec<T>,
    pub weights: Option<AdaptiveWeights<T>>,
    /// When false the common block is held at zero and subjects decouple
    /// into independent (weighted) Lasso problems.
    pub estimate_common: bool,
}

impl<T: Real> PenaltySpec<T> {
    pub fn standard(lambda1: T, lambda2: Vec<T>) -> Self {
        Self { lambda1, lambda2, weights: None, estimate_common: true }
    }

    pub fn adaptive(lambda1: T, lambda2: Vec<T>, weights: AdaptiveWeights<T>) -> Self {
        Self { lambda1, lambda2, weights: Some(weights), estimate_common: true }
    }

    /// Separate per-subject Lasso problems (`Γ⁰ ≡ 0`).
    pub fn individual(lambda2: Vec<T>, weights: Option<AdaptiveWeights<T>>) -> Self {
        Self { lambda1: T::zero(), lambda2, weights, estimate_common: false }
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.lambda2.len() != k {
            return Err(Error::Dimension(format!(
                "{} unique penalties for {k} subjects",
                self.lambda2.len()
            )));
        }
        let bad = |v: &T| !v.is_finite_value() || *v < T::zero();
        if bad(&self.lambda1) || self.lambda2.iter().any(bad) {
            return Err(Error::InvalidArgument("penalties must be finite and non-negative".into()));
        }
        if let Some(w) = &self.weights {
            if w.unique.len() != k {
                return Err(Error::Dimension(format!(
                    "weights for {} subjects, data has {k}",
                    w.unique.len()
                )));
            }
        }
        Ok(())
    }

    /// Entrywise thresholds `λ·W` per block, common block first.
    fn thresholds(&self, d: usize, dp: usize) -> Vec<DMatrix<T>> {
        let k = self.lambda2.len();
        let mut out = Vec::with_capacity(k + 1);
        match &self.weights {
            Some(w) => {
                out.push(&w.common * self.lambda1);
                out.extend(w.unique.iter().zip(&self.lambda2).map(|(m, &l)| m * l));
            }
            None => {
                out.push(DMatrix::from_element(d, dp, self.lambda1));
                out.extend(self.lambda2.iter().map(|&l| DMatrix::from_element(d, dp, l)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule<T: Real> {
    /// `1/L` with `L = 2·maxₖ σ²max(Zᵏ)·(K+1)/N`.
    Fixed,
    /// Start from the per-subject curvature bound and shrink the step by
    /// `factor` until the quadratic upper bound holds.
    Backtracking { factor: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T: Real> {
    pub max_iter: usize,
    /// Relative objective change below which iteration stops.
    pub tol: T,
    pub step: StepRule<T>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self { max_iter: 5000, tol: T::lit(1e-6), step: StepRule::Fixed }
    }
}

impl<T: Real> SolverConfig<T> {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol > T::zero()) {
            return Err(Error::InvalidArgument("max_iter must be >= 1 and tol > 0".into()));
        }
        if let StepRule::Backtracking { factor } = self.step {
            if !(factor > T::zero() && factor < T::one()) {
                return Err(Error::InvalidArgument("backtracking factor must lie in (0,1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Momentum restarts triggered by an objective increase.
    pub restarts: usize,
    pub step_size: f64,
    /// Entries where common and unique parts cancel below 1e-12.
    pub cancellations: usize,
}

#[derive(Debug, Clone)]
pub struct SolverOutput<T: Real> {
    pub decomposition: EffectsDecomposition<T>,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Debug, Clone)]
struct SubjectGram<T: Real> {
    s: DMatrix<T>,
    c: DMatrix<T>,
    yy: T,
    n_obs: usize,
}

/// Sufficient statistics of a multi-subject least-squares problem.
#[derive(Debug, Clone)]
pub struct Problem<T: Real> {
    grams: Vec<SubjectGram<T>>,
    d: usize,
    dp: usize,
    norm: T,
    curvature: T,
}

impl<T: Real> Problem<T> {
    pub fn new(regs: &[RegressionForm<T>]) -> Result<Self> {
        let first = regs
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one subject required".into()))?;
        let (d, p) = (first.dim(), first.lag_order());
        let dp = d * p;
        let mut grams = Vec::with_capacity(regs.len());
        let mut total = 0usize;
        let mut curvature = T::zero();
        for (k, r) in regs.iter().enumerate() {
            if r.dim() != d || r.lag_order() != p {
                return Err(Error::Dimension(format!("subject {k} has inconsistent dimensions")));
            }
            let s = &r.z * r.z.transpose();
            let c = &r.y * r.z.transpose();
            let yy = r.y.norm_squared();
            let top = s.clone().symmetric_eigen().eigenvalues.iter().fold(T::zero(), |a, &b| a.max(b));
            curvature = curvature.max(top);
            total += d * r.n_obs();
            grams.push(SubjectGram { s, c, yy, n_obs: r.n_obs() });
        }
        if total == 0 {
            return Err(Error::TooShort { required: 1, actual: 0 });
        }
        Ok(Self { grams, d, dp, norm: T::count(total), curvature })
    }

    pub fn n_subjects(&self) -> usize {
        self.grams.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_coef(&self) -> usize {
        self.dp
    }

    /// `N`, the total number of scalar observations.
    pub fn normalizer(&self) -> T {
        self.norm
    }

    pub fn n_obs(&self) -> Vec<usize> {
        self.grams.iter().map(|g| g.n_obs).collect()
    }

    /// `max σ²(Zᵏ)` over subjects.
    pub fn curvature(&self) -> T {
        self.curvature
    }

    /// Lipschitz constant of the smooth gradient over the stacked blocks.
    pub fn lipschitz(&self, estimate_common: bool) -> T {
        let blocks = if estimate_common { T::count(self.grams.len() + 1) } else { T::one() };
        T::lit(2.0) * self.curvature * blocks / self.norm
    }

    fn check(&self, dec: &EffectsDecomposition<T>) -> Result<()> {
        let ok = |m: &DMatrix<T>| m.nrows() == self.d && m.ncols() == self.dp;
        if dec.unique.len() != self.grams.len() || !dec.blocks().all(ok) {
            return Err(Error::Dimension(format!(
                "decomposition does not match {} subjects with {}x{} blocks",
                self.grams.len(),
                self.d,
                self.dp
            )));
        }
        Ok(())
    }

    fn subject_loss(&self, k: usize, phi: &DMatrix<T>, phi_s: &DMatrix<T>) -> T {
        let g = &self.grams[k];
        g.yy - T::lit(2.0) * phi.dot(&g.c) + phi_s.dot(phi)
    }

    /// Smooth term `(1/N) Σₖ ‖Yᵏ − ΦᵏZᵏ‖²` evaluated from Gram statistics.
    pub fn smooth_value(&self, dec: &EffectsDecomposition<T>) -> T {
        let mut acc = T::zero();
        for (k, g) in self.grams.iter().enumerate() {
            let phi = dec.total(k);
            let phi_s = &phi * &g.s;
            acc += self.subject_loss(k, &phi, &phi_s);
        }
        acc / self.norm
    }

    /// Gradient of the smooth term with respect to `(Γ⁰, Γ¹, …, Γᴷ)`.
    pub fn smooth_gradient(&self, dec: &EffectsDecomposition<T>) -> Result<EffectsDecomposition<T>> {
        self.check(dec)?;
        let products: Vec<_> = (0..self.grams.len()).map(|k| dec.total(k) * &self.grams[k].s).collect();
        Ok(self.gradient_from_products(&products, true))
    }

    fn gradient_from_products(&self, products: &[DMatrix<T>], common: bool) -> EffectsDecomposition<T> {
        let scale = T::lit(2.0) / self.norm;
        let mut out = EffectsDecomposition::zeros(self.d, self.dp, self.grams.len());
        for (k, g) in self.grams.iter().enumerate() {
            out.unique[k] = (&products[k] - &g.c) * scale;
            if common {
                out.common += &out.unique[k];
            }
        }
        out
    }

    /// Full objective (smooth term plus weighted ℓ₁ penalties).
    pub fn objective(&self, dec: &EffectsDecomposition<T>, pen: &PenaltySpec<T>) -> Result<T> {
        self.check(dec)?;
        pen.validate(self.grams.len())?;
        let thr = pen.thresholds(self.d, self.dp);
        Ok(self.smooth_value(dec) + penalty_value(dec, &thr))
    }
}

fn penalty_value<T: Real>(dec: &EffectsDecomposition<T>, thr: &[DMatrix<T>]) -> T {
    dec.blocks()
        .zip(thr)
        .map(|(b, w)| b.iter().zip(w.iter()).fold(T::zero(), |a, (&x, &t)| a + t * x.abs()))
        .fold(T::zero(), |a, b| a + b)
}

/// Objective evaluated directly from residuals `Yᵏ − ΦᵏZᵏ`.
pub fn objective<T: Real>(
    regs: &[RegressionForm<T>],
    dec: &EffectsDecomposition<T>,
    pen: &PenaltySpec<T>,
) -> Result<T> {
    if regs.len() != dec.n_subjects() {
        return Err(Error::Dimension(format!(
            "{} regression forms for {} subjects",
            regs.len(),
            dec.n_subjects()
        )));
    }
    pen.validate(regs.len())?;
    let mut loss = T::zero();
    let mut n = 0usize;
    for (k, r) in regs.iter().enumerate() {
        let phi = dec.total(k);
        if phi.nrows() != r.dim() || phi.ncols() != r.z.nrows() {
            return Err(Error::Dimension(format!("subject {k} coefficients do not match data")));
        }
        loss += (&r.y - &phi * &r.z).norm_squared();
        n += r.dim() * r.n_obs();
    }
    let thr = pen.thresholds(dec.common.nrows(), dec.common.ncols());
    Ok(loss / T::count(n.max(1)) + penalty_value(dec, &thr))
}

/// Entrywise `sign(v)·max(|v| − threshold·w, 0)`.
pub fn prox_weighted_l1<T: Real>(v: &DMatrix<T>, threshold: T, w: &DMatrix<T>) -> DMatrix<T> {
    v.zip_map(w, |x, wi| soft_threshold(x, threshold * wi))
}

#[inline]
fn soft_threshold<T: Real>(x: T, thr: T) -> T {
    if x.abs() <= thr {
        T::zero()
    } else if x > T::zero() {
        x - thr
    } else {
        x + thr
    }
}

fn prox_into<T: Real>(y: &DMatrix<T>, grad: &DMatrix<T>, step: T, thr: &DMatrix<T>, out: &mut DMatrix<T>) {
    for (((o, &yi), &gi), &ti) in out.iter_mut().zip(y.iter()).zip(grad.iter()).zip(thr.iter()) {
        *o = soft_threshold(yi - step * gi, step * ti);
    }
}

/// Accelerated proximal gradient (FISTA) with a monotone restart: a
/// candidate that raises the objective is rejected and momentum reset.
pub fn fista_solve<T: Real>(
    problem: &Problem<T>,
    pen: &PenaltySpec<T>,
    cfg: &SolverConfig<T>,
    warm_start: Option<&EffectsDecomposition<T>>,
) -> Result<SolverOutput<T>> {
    cfg.validate()?;
    let k = problem.n_subjects();
    pen.validate(k)?;
    let (d, dp) = (problem.d, problem.dp);
    let thr = pen.thresholds(d, dp);
    let common = pen.estimate_common;

    let mut x = match warm_start {
        Some(w) => {
            problem.check(w)?;
            w.clone()
        }
        None => EffectsDecomposition::zeros(d, dp, k),
    };
    if !common {
        x.common.fill(T::zero());
    }

    let lipschitz = problem.lipschitz(common);
    let mut step = match cfg.step {
        StepRule::Fixed => T::one() / lipschitz,
        StepRule::Backtracking { .. } => T::one() / problem.lipschitz(false),
    };
    if !step.is_finite_value() {
        // All-zero design: nothing to fit, the zero decomposition is optimal.
        step = T::one();
    }

    let products = |dec: &EffectsDecomposition<T>| -> Vec<DMatrix<T>> {
        (0..k).map(|i| dec.total(i) * &problem.grams[i].s).collect()
    };
    let smooth_from = |dec: &EffectsDecomposition<T>, prod: &[DMatrix<T>]| -> T {
        (0..k)
            .map(|i| problem.subject_loss(i, &dec.total(i), &prod[i]))
            .fold(T::zero(), |a, b| a + b)
            / problem.norm
    };

    let mut px = products(&x);
    let mut fx = smooth_from(&x, &px) + penalty_value(&x, &thr);
    if !fx.is_finite_value() {
        return Err(Error::Divergence { iteration: 0, step: step.as_f64() });
    }
    let mut y = x.clone();
    let mut py = px.clone();
    let mut z = EffectsDecomposition::zeros(d, dp, k);
    let mut t = T::one();
    let mut restarts = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let grad = problem.gradient_from_products(&py, common);
        let (pz, fz_smooth) = loop {
            if common {
                prox_into(&y.common, &grad.common, step, &thr[0], &mut z.common);
            }
            for i in 0..k {
                prox_into(&y.unique[i], &grad.unique[i], step, &thr[i + 1], &mut z.unique[i]);
            }
            let pz = products(&z);
            let fz_smooth = smooth_from(&z, &pz);
            match cfg.step {
                StepRule::Fixed => break (pz, fz_smooth),
                StepRule::Backtracking { factor } => {
                    let fy = smooth_from(&y, &py);
                    let mut lin = T::zero();
                    let mut dist = T::zero();
                    for (zb, (yb, gb)) in z.blocks().zip(y.blocks().zip(grad.blocks())) {
                        let diff = zb - yb;
                        lin += diff.dot(gb);
                        dist += diff.norm_squared();
                    }
                    let bound = fy + lin + dist / (T::lit(2.0) * step);
                    let slack = T::lit(1e-12) * (T::one() + fy.abs());
                    if fz_smooth <= bound + slack || step * lipschitz <= T::one() {
                        break (pz, fz_smooth);
                    }
                    step *= factor;
                    if step * lipschitz < T::one() {
                        step = T::one() / lipschitz;
                    }
                }
            }
        };
        let fz = fz_smooth + penalty_value(&z, &thr);
        if !fz.is_finite_value() {
            return Err(Error::Divergence { iteration: iterations, step: step.as_f64() });
        }
        if fz > fx {
            // Monotone restart from the last accepted point.
            restarts += 1;
            t = T::one();
            y.clone_from(&x);
            py.clone_from(&px);
            if restarts > cfg.max_iter {
                break;
            }
            continue;
        }
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
        let beta = (t - T::one()) / t_next;
        t = t_next;
        // y = z + β(z − x), and the same affine map carries over to ΦS.
        y.common = &z.common + (&z.common - &x.common) * beta;
        for i in 0..k {
            y.unique[i] = &z.unique[i] + (&z.unique[i] - &x.unique[i]) * beta;
            py[i] = &pz[i] + (&pz[i] - &px[i]) * beta;
        }
        std::mem::swap(&mut x, &mut z);
        px = pz;
        let change = (fx - fz).abs();
        let scale = fx.abs().max(T::eps());
        fx = fz;
        if change <= cfg.tol * scale {
            converged = true;
            break;
        }
    }

    let cancellations = x.cancellations(T::lit(1e-12));
    Ok(SolverOutput {
        decomposition: x,
        diagnostics: SolverDiagnostics {
            iterations,
            converged,
            objective: fx.as_f64(),
            restarts,
            step_size: step.as_f64(),
            cancellations,
        },
    })
}

/// Smallest penalties at which the all-zero decomposition is stationary:
/// `λ₁ᵐᵃˣ` from `(2/N)ΣₖCᵏ` against `W⁰` and `λ₂ₖᵐᵃˣ` from `(2/N)Cᵏ`
/// against `Wᵏ`.
pub fn lambda_max<T: Real>(problem: &Problem<T>, weights: Option<&AdaptiveWeights<T>>) -> (T, Vec<T>) {
    let k = problem.n_subjects();
    let zero_products = vec![DMatrix::zeros(problem.d, problem.dp); k];
    let grad = problem.gradient_from_products(&zero_products, true);
    let ratio_max = |g: &DMatrix<T>, w: Option<&DMatrix<T>>| -> T {
        let m = match w {
            Some(w) => g.iter().zip(w.iter()).fold(T::zero(), |a, (&gi, &wi)| a.max(gi.abs() / wi)),
            None => g.amax(),
        };
        // Cover rounding in λ·w so that λ ≥ λᵐᵃˣ thresholds exactly to zero.
        m * (T::one() + T::lit(8.0) * T::eps())
    };
    let l1 = ratio_max(&grad.common, weights.map(|w| &w.common));
    let l2 = grad
        .unique
        .iter()
        .enumerate()
        .map(|(i, g)| ratio_max(g, weights.map(|w| &w.unique[i])))
        .collect();
    (l1, l2)
}

/// A λ₁ large enough that `Γ⁰ ≡ 0` at the optimum for the given unique
/// penalties. At any optimum with `Γ⁰ = 0`, each subject's gradient obeys
/// `|∇ᵏ| ≤ λ₂ₖWᵏ`, so `λ₁W⁰ ≥ Σₖ λ₂ₖWᵏ` keeps the common block inactive.
pub fn common_zero_threshold<T: Real>(
    problem: &Problem<T>,
    weights: Option<&AdaptiveWeights<T>>,
    lambda2: &[T],
) -> T {
    let (d, dp) = (problem.d, problem.dp);
    let mut bound = T::zero();
    for idx in 0..d * dp {
        let mut sum = T::zero();
        for (k, &l) in lambda2.iter().enumerate() {
            sum += l * weights.map_or(T::one(), |w| w.unique[k][idx]);
        }
        bound = bound.max(sum / weights.map_or(T::one(), |w| w.common[idx]));
    }
    let (l1max, l2max) = lambda_max(problem, weights);
    if lambda2.iter().zip(&l2max).all(|(&l, &m)| l >= m) {
        // Unique blocks are zero as well, so the all-zero bound applies.
        l1max.min(bound)
    } else {
        bound
    }
}

/// Per-subject λ₂ₖ at which `Γᵏ ≡ 0` is optimal given the pooled common
/// solution `pooled` (the optimum of the problem with all unique blocks
/// removed): `max |∇ᵏ(pooled)| / Wᵏ`.
pub fn unique_zero_threshold<T: Real>(
    problem: &Problem<T>,
    weights: Option<&AdaptiveWeights<T>>,
    pooled: &DMatrix<T>,
) -> Vec<T> {
    let k = problem.n_subjects();
    let products: Vec<_> = (0..k).map(|i| pooled * &problem.grams[i].s).collect();
    let grad = problem.gradient_from_products(&products, false);
    grad.unique
        .iter()
        .enumerate()
        .map(|(i, g)| match weights {
            Some(w) => g.iter().zip(w.unique[i].iter()).fold(T::zero(), |a, (&gi, &wi)| a.max(gi.abs() / wi)),
            None => g.amax(),
        })
        .collect()
}

/// Descending log-spaced penalty grid. Cell `(i, j)` uses
/// `λ₁ = lambda1[i]` and `λ₂ₖ = lambda2_scale[j]·lambda2_max[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid<T: Real> {
    pub lambda1: Vec<T>,
    pub lambda2_scale: Vec<T>,
    pub lambda2_max: Vec<T>,
    pub estimate_common: bool,
}

impl<T: Real> LambdaGrid<T> {
    pub fn n_cells(&self) -> usize {
        self.lambda1.len() * self.lambda2_scale.len()
    }

    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index / self.lambda2_scale.len(), index % self.lambda2_scale.len())
    }

    pub fn lambda2(&self, j: usize) -> Vec<T> {
        self.lambda2_max.iter().map(|&m| m * self.lambda2_scale[j]).collect()
    }

    pub fn penalty(&self, i: usize, j: usize, weights: Option<&AdaptiveWeights<T>>) -> PenaltySpec<T> {
        PenaltySpec {
            lambda1: self.lambda1[i],
            lambda2: self.lambda2(j),
            weights: weights.cloned(),
            estimate_common: self.estimate_common,
        }
    }

    /// Restricts the per-subject scaling to a subset of subjects.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            lambda2_max: indices.iter().map(|&i| self.lambda2_max[i]).collect(),
            ..self.clone()
        }
    }
}

/// `n` log-spaced values from `hi` down to `ratio·hi`.
pub fn log_spaced_desc<T: Real>(hi: T, ratio: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![hi];
    }
    let step = ratio.ln() / T::count(n - 1);
    (0..n).map(|i| if i == 0 { hi } else { hi * (step * T::count(i)).exp() }).collect()
}

pub fn build_grid<T: Real>(
    problem: &Problem<T>,
    weights: Option<&AdaptiveWeights<T>>,
    n1: usize,
    n2: usize,
    ratio: T,
) -> Result<LambdaGrid<T>> {
    if n1 == 0 || n2 == 0 || !(ratio > T::zero() && ratio < T::one()) {
        return Err(Error::InvalidArgument("grid sizes must be >= 1 and ratio in (0,1)".into()));
    }
    let (l1, l2) = lambda_max(problem, weights);
    let floor = T::eps();
    Ok(LambdaGrid {
        lambda1: log_spaced_desc(l1.max(floor), ratio, n1),
        lambda2_scale: log_spaced_desc(T::one(), ratio, n2),
        lambda2_max: l2.into_iter().map(|v| v.max(floor)).collect(),
        estimate_common: true,
    })
}

/// Grid for independent per-subject Lasso fits (no common block).
pub fn build_individual_grid<T: Real>(
    problem: &Problem<T>,
    weights: Option<&AdaptiveWeights<T>>,
    n: usize,
    ratio: T,
) -> Result<LambdaGrid<T>> {
    let mut grid = build_grid(problem, weights, 1, n, ratio)?;
    grid.estimate_common = false;
    grid.lambda1 = vec![T::zero()];
    Ok(grid)
}

#[derive(Debug, Clone)]
pub struct PathCell<T: Real> {
    pub i: usize,
    pub j: usize,
    pub result: Result<SolverOutput<T>>,
}

/// Solves every grid cell in descending-λ order, warm-starting each cell
/// from its predecessor along λ₂ (or along λ₁ at the start of a row).
pub fn fit_path<T: Real>(
    problem: &Problem<T>,
    grid: &LambdaGrid<T>,
    weights: Option<&AdaptiveWeights<T>>,
    cfg: &SolverConfig<T>,
) -> Vec<PathCell<T>> {
    let n2 = grid.lambda2_scale.len();
    let mut cells: Vec<PathCell<T>> = Vec::with_capacity(grid.n_cells());
    for i in 0..grid.lambda1.len() {
        for j in 0..n2 {
            let prev = if j > 0 {
                cells.last()
            } else if i > 0 {
                cells.get((i - 1) * n2)
            } else {
                None
            };
            let warm = prev.and_then(|c| c.result.as_ref().ok()).map(|o| &o.decomposition);
            let pen = grid.penalty(i, j, weights);
            let result = fista_solve(problem, &pen, cfg, warm);
            cells.push(PathCell { i, j, result });
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_problem() -> (Vec<RegressionForm<f64>>, Problem<f64>) {
        let y1 = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, -0.2, 0.3, 0.1, -0.4, 0.6, 0.2]);
        let z1 = DMatrix::from_row_slice(2, 4, &[0.3, 1.0, 0.5, -0.2, -0.6, 0.1, -0.4, 0.6]);
        let y2 = DMatrix::from_row_slice(2, 4, &[-0.3, 0.8, 0.2, 0.1, 0.5, 0.5, -0.1, 0.7]);
        let z2 = DMatrix::from_row_slice(2, 4, &[0.2, -0.3, 0.8, 0.2, 0.5, -0.6, 0.5, -0.1]);
        let regs = vec![RegressionForm::new(y1, z1, 1).unwrap(), RegressionForm::new(y2, z2, 1).unwrap()];
        let p = Problem::new(&regs).unwrap();
        (regs, p)
    }

    #[test]
    fn prox_examples() {
        let ones = DMatrix::from_element(1, 1, 1.0);
        let v = DMatrix::from_element(1, 1, 0.5);
        assert_relative_eq!(prox_weighted_l1(&v, 0.2, &ones)[(0, 0)], 0.3, epsilon = 1e-15);
        assert_eq!(prox_weighted_l1(&v, 0.5, &ones)[(0, 0)], 0.0);
        assert_eq!(prox_weighted_l1(&(-&v), 0.7, &ones)[(0, 0)], 0.0);
        assert_eq!(prox_weighted_l1(&v, 0.0, &ones), v);
        let w = DMatrix::from_element(1, 1, 2.0);
        assert_relative_eq!(prox_weighted_l1(&(-&v), 0.1, &w)[(0, 0)], -0.3, epsilon = 1e-15);
    }

    #[test]
    fn objective_zero_parameters_is_mean_square() {
        let (regs, _) = toy_problem();
        let dec = EffectsDecomposition::zeros(2, 2, 2);
        let pen = PenaltySpec::standard(0.0, vec![0.0, 0.0]);
        let expect = (regs[0].y.norm_squared() + regs[1].y.norm_squared()) / 16.0;
        assert_relative_eq!(objective(&regs, &dec, &pen).unwrap(), expect, epsilon = 1e-14);
    }

    #[test]
    fn objective_exact_fit_is_zero() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 0.2, -0.5, 0.3, 0.8, 0.1]);
        let regs = vec![RegressionForm::new(&phi * &z, z, 1).unwrap()];
        let dec = EffectsDecomposition { common: phi, unique: vec![DMatrix::zeros(2, 2)] };
        let pen = PenaltySpec::standard(0.0, vec![0.0]);
        assert_eq!(objective(&regs, &dec, &pen).unwrap(), 0.0);
    }

    #[test]
    fn gram_and_residual_objectives_agree() {
        let (regs, problem) = toy_problem();
        let dec = EffectsDecomposition {
            common: DMatrix::from_row_slice(2, 2, &[0.2, -0.1, 0.0, 0.4]),
            unique: vec![
                DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.3, 0.0]),
                DMatrix::from_row_slice(2, 2, &[0.0, -0.2, 0.0, 0.1]),
            ],
        };
        let pen = PenaltySpec::standard(0.05, vec![0.02, 0.03]);
        assert_relative_eq!(
            problem.objective(&dec, &pen).unwrap(),
            objective(&regs, &dec, &pen).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn totals_are_sums() {
        let dec = EffectsDecomposition {
            common: DMatrix::from_element(1, 1, 0.5),
            unique: vec![DMatrix::from_element(1, 1, -0.5), DMatrix::from_element(1, 1, 0.25)],
        };
        assert_eq!(dec.totals(), vec![DMatrix::from_element(1, 1, 0.0), DMatrix::from_element(1, 1, 0.75)]);
        assert_eq!(dec.cancellations(1e-12), 1);
    }

    #[test]
    fn lambda_max_zero_data() {
        let regs = vec![RegressionForm::new(DMatrix::<f64>::zeros(2, 5), DMatrix::zeros(2, 5), 1).unwrap()];
        let p = Problem::new(&regs).unwrap();
        let (l1, l2) = lambda_max(&p, None);
        assert_eq!(l1, 0.0);
        assert_eq!(l2, vec![0.0]);
        let out = fista_solve(&p, &PenaltySpec::standard(0.0, vec![0.0]), &SolverConfig::default(), None).unwrap();
        assert!(out.decomposition.common.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_weights_halves_lambda_max() {
        let (_, p) = toy_problem();
        let w = AdaptiveWeights::uniform(2, 2, 2, 1.0);
        let w2 = AdaptiveWeights::uniform(2, 2, 2, 2.0);
        let (a1, a2) = lambda_max(&p, Some(&w));
        let (b1, b2) = lambda_max(&p, Some(&w2));
        assert_relative_eq!(a1, 2.0 * b1, epsilon = 1e-14);
        for (a, b) in a2.iter().zip(&b2) {
            assert_relative_eq!(*a, 2.0 * b, epsilon = 1e-14);
        }
    }

    #[test]
    fn above_lambda_max_solution_is_exactly_zero() {
        let (_, p) = toy_problem();
        let (l1, l2) = lambda_max(&p, None);
        let pen = PenaltySpec::standard(l1, l2);
        let out = fista_solve(&p, &pen, &SolverConfig::default(), None).unwrap();
        assert!(out.decomposition.blocks().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn grid_endpoints_and_size() {
        let (_, p) = toy_problem();
        let g = build_grid(&p, None, 10, 10, 0.01).unwrap();
        assert_eq!(g.n_cells(), 100);
        let (l1, _) = lambda_max(&p, None);
        assert_relative_eq!(g.lambda1[0], l1);
        assert_relative_eq!(g.lambda1[9], 0.01 * l1, epsilon = 1e-15);
        let ratios: Vec<f64> = g.lambda1.windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert_relative_eq!(*r, ratios[0], epsilon = 1e-12);
        }
        let single = build_grid(&p, None, 1, 1, 0.5).unwrap();
        assert_eq!(single.lambda1, vec![l1]);
        assert!(build_grid(&p, None, 0, 1, 0.5).is_err());
        assert!(build_grid(&p, None, 1, 1, 1.0).is_err());
    }

    #[test]
    fn backtracking_reaches_same_objective() {
        let (_, p) = toy_problem();
        let pen = PenaltySpec::standard(0.01, vec![0.02, 0.02]);
        let tight = SolverConfig { tol: 1e-12, ..SolverConfig::default() };
        let a = fista_solve(&p, &pen, &tight, None).unwrap();
        let bt = SolverConfig { step: StepRule::Backtracking { factor: 0.5 }, ..tight };
        let b = fista_solve(&p, &pen, &bt, None).unwrap();
        assert_relative_eq!(a.diagnostics.objective, b.diagnostics.objective, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_config() {
        let (_, p) = toy_problem();
        let pen = PenaltySpec::standard(0.1, vec![0.1, 0.1]);
        let cfg = SolverConfig { max_iter: 0, ..SolverConfig::default() };
        assert!(fista_solve(&p, &pen, &cfg, None).is_err());
        let bad = PenaltySpec::standard(-1.0, vec![0.1, 0.1]);
        assert!(fista_solve(&p, &bad, &SolverConfig::default(), None).is_err());
        let short = PenaltySpec::standard(0.1, vec![0.1]);
        assert!(fista_solve(&p, &short, &SolverConfig::default(), None).is_err());
    }
}
