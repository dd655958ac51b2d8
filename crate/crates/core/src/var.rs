//! Single-subject VAR(p) machinery: model container, regression form,
//! companion matrix and stability, simulation and least-squares fitting.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, Schur, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default number of discarded transient points in [`simulate_var`].
pub const DEFAULT_BURN_IN: usize = 200;

/// A VAR(p) model `X_t = Φ₁X_{t−1} + … + Φ_pX_{t−p} + E_t` with
/// `E_t ~ N(0, Σ_E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel<T: Real> {
    phi: Vec<DMatrix<T>>,
    noise_cov: DMatrix<T>,
}

impl<T: Real> VarModel<T> {
    pub fn new(phi: Vec<DMatrix<T>>, noise_cov: DMatrix<T>) -> Result<Self> {
        let d = match phi.first() {
            Some(m) => m.nrows(),
            None => return Err(Error::InvalidArgument("lag order must be at least 1".into())),
        };
        if d == 0 {
            return Err(Error::Dimension("transition matrices must be at least 1x1".into()));
        }
        for (lag, m) in phi.iter().enumerate() {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension(format!(
                    "lag {} matrix is {}x{}, expected {d}x{d}",
                    lag + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite_value()) {
                return Err(Error::NonFinite(format!("lag {} transition matrix", lag + 1)));
            }
        }
        if noise_cov.nrows() != d || noise_cov.ncols() != d {
            return Err(Error::Dimension(format!(
                "noise covariance is {}x{}, expected {d}x{d}",
                noise_cov.nrows(),
                noise_cov.ncols()
            )));
        }
        validate_covariance(&noise_cov)?;
        Ok(Self { phi, noise_cov })
    }

    /// Builds a model from the stacked `d × dp` coefficient block `[Φ₁ … Φ_p]`.
    pub fn from_stacked(stacked: &DMatrix<T>, p: usize, noise_cov: DMatrix<T>) -> Result<Self> {
        let d = stacked.nrows();
        if p == 0 || stacked.ncols() != d * p {
            return Err(Error::Dimension(format!(
                "stacked coefficients are {}x{}, expected {d}x{}",
                d,
                stacked.ncols(),
                d * p
            )));
        }
        let phi = (0..p).map(|l| stacked.columns(l * d, d).into_owned()).collect();
        Self::new(phi, noise_cov)
    }

    pub fn lag_order(&self) -> usize {
        self.phi.len()
    }

    pub fn dim(&self) -> usize {
        self.phi[0].nrows()
    }

    pub fn phi(&self) -> &[DMatrix<T>] {
        &self.phi
    }

    pub fn noise_cov(&self) -> &DMatrix<T> {
        &self.noise_cov
    }

    /// `[Φ₁ … Φ_p]` as one `d × dp` matrix.
    pub fn stacked(&self) -> DMatrix<T> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d * self.lag_order());
        for (l, m) in self.phi.iter().enumerate() {
            out.columns_mut(l * d, d).copy_from(m);
        }
        out
    }

    pub fn companion(&self) -> DMatrix<T> {
        companion_matrix(self)
    }

    pub fn spectral_radius(&self) -> T {
        spectral_radius(&self.companion())
    }

    pub fn is_stable(&self, margin: T) -> bool {
        is_stable(self, margin)
    }

    /// Replaces the transition matrices, keeping the noise covariance.
    pub fn with_phi(&self, phi: Vec<DMatrix<T>>) -> Result<Self> {
        Self::new(phi, self.noise_cov.clone())
    }
}

fn validate_covariance<T: Real>(cov: &DMatrix<T>) -> Result<()> {
    let scale = cov.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let tol = T::lit(1e-10).max(T::eps() * T::lit(100.0)) * scale;
    if cov.iter().any(|v| !v.is_finite_value()) {
        return Err(Error::NonFinite("noise covariance".into()));
    }
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "noise covariance not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let eig = cov.clone().symmetric_eigen();
    if let Some(min) = eig.eigenvalues.iter().copied().reduce(|a, b| a.min(b)) {
        if min < -tol {
            return Err(Error::InvalidArgument(format!(
                "noise covariance has negative eigenvalue {min}"
            )));
        }
    }
    Ok(())
}

/// One subject's observed series, `d × T` with variables in rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSeries<T: Real> {
    id: String,
    data: DMatrix<T>,
}

impl<T: Real> SubjectSeries<T> {
    pub fn new(id: impl Into<String>, data: DMatrix<T>) -> Result<Self> {
        let id = id.into();
        if data.nrows() == 0 {
            return Err(Error::Dimension(format!("subject {id} has no variables")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite_value()) {
            let (r, c) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::NonFinite(format!(
                "subject {id}, variable {r}, time point {c}"
            )));
        }
        Ok(Self { id, data })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Subtracts each variable's mean and returns the means.
    pub fn centered(&self) -> (Self, Vec<T>) {
        let mut data = self.data.clone();
        let n = T::count(data.ncols().max(1));
        let means: Vec<T> = (0..data.nrows())
            .map(|i| data.row(i).iter().fold(T::zero(), |a, &v| a + v) / n)
            .collect();
        for (i, &m) in means.iter().enumerate() {
            data.row_mut(i).add_scalar_mut(-m);
        }
        (Self { id: self.id.clone(), data }, means)
    }

    /// Divides each variable by its standard deviation (constant variables are left alone).
    pub fn scaled(&self) -> (Self, Vec<T>) {
        let mut data = self.data.clone();
        let n = T::count(data.ncols().max(2) - 1);
        let sds: Vec<T> = (0..data.nrows())
            .map(|i| {
                let row = data.row(i);
                let mean = row.iter().fold(T::zero(), |a, &v| a + v) / T::count(row.len().max(1));
                let ss = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
                let sd = (ss / n).sqrt();
                if sd > T::zero() { sd } else { T::one() }
            })
            .collect();
        for (i, &sd) in sds.iter().enumerate() {
            data.row_mut(i).unscale_mut(sd);
        }
        (Self { id: self.id.clone(), data }, sds)
    }
}

/// K subjects measured on the same d variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSubjectSeries<T: Real> {
    subjects: Vec<SubjectSeries<T>>,
}

impl<T: Real> MultiSubjectSeries<T> {
    pub fn new(subjects: Vec<SubjectSeries<T>>) -> Result<Self> {
        let d = match subjects.first() {
            Some(s) => s.dim(),
            None => return Err(Error::InvalidArgument("at least one subject required".into())),
        };
        if let Some(bad) = subjects.iter().find(|s| s.dim() != d) {
            return Err(Error::Dimension(format!(
                "subject {} has {} variables, expected {d}",
                bad.id(),
                bad.dim()
            )));
        }
        Ok(Self { subjects })
    }

    pub fn subjects(&self) -> &[SubjectSeries<T>] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.subjects[0].dim()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.len()).collect()
    }

    /// The subset of subjects at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.subjects[i].clone()).collect())
    }

    pub fn centered(&self) -> (Self, Vec<Vec<T>>) {
        let (subjects, means) = self.subjects.iter().map(|s| s.centered()).unzip();
        (Self { subjects }, means)
    }

    pub fn scaled(&self) -> (Self, Vec<Vec<T>>) {
        let (subjects, sds) = self.subjects.iter().map(|s| s.scaled()).unzip();
        (Self { subjects }, sds)
    }
}

/// `Y = ΦZ + U` with `Y` of size `d × n` and `Z` of size `dp × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForm<T: Real> {
    pub y: DMatrix<T>,
    pub z: DMatrix<T>,
    lag_order: usize,
}

impl<T: Real> RegressionForm<T> {
    pub fn new(y: DMatrix<T>, z: DMatrix<T>, p: usize) -> Result<Self> {
        if p == 0 || z.nrows() != y.nrows() * p || z.ncols() != y.ncols() {
            return Err(Error::Dimension(format!(
                "regression form with y {}x{} and z {}x{} is inconsistent with p={p}",
                y.nrows(),
                y.ncols(),
                z.nrows(),
                z.ncols()
            )));
        }
        Ok(Self { y, z, lag_order: p })
    }

    pub fn lag_order(&self) -> usize {
        self.lag_order
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.y.ncols()
    }
}

/// Minimum series length usable for estimation at lag order `p`.
pub fn min_series_len(p: usize) -> usize {
    p + 2
}

pub fn build_regression<T: Real>(series: &SubjectSeries<T>, p: usize) -> Result<RegressionForm<T>> {
    if p == 0 {
        return Err(Error::InvalidArgument("lag order must be at least 1".into()));
    }
    if series.len() < min_series_len(p) {
        return Err(Error::TooShort { required: min_series_len(p), actual: series.len() });
    }
    build_regression_segments(series.data(), p, &[0..series.len()])
}

/// Regression form over the concatenation of contiguous segments. A
/// target at time `t` is kept only if `t−p..=t` lies in one segment.
pub fn build_regression_segments<T: Real>(
    data: &DMatrix<T>,
    p: usize,
    segments: &[Range<usize>],
) -> Result<RegressionForm<T>> {
    let d = data.nrows();
    let targets: Vec<usize> = segments
        .iter()
        .filter(|s| s.end <= data.ncols())
        .flat_map(|s| (s.start + p)..s.end)
        .collect();
    if targets.is_empty() {
        return Err(Error::TooShort { required: p + 1, actual: 0 });
    }
    let n = targets.len();
    let mut y = DMatrix::zeros(d, n);
    let mut z = DMatrix::zeros(d * p, n);
    for (col, &t) in targets.iter().enumerate() {
        y.set_column(col, &data.column(t));
        for l in 0..p {
            z.view_mut((l * d, col), (d, 1)).copy_from(&data.column(t - l - 1));
        }
    }
    RegressionForm::new(y, z, p)
}

/// Companion matrix of size `dp × dp`; equals `Φ₁` when `p = 1`.
pub fn companion_matrix<T: Real>(model: &VarModel<T>) -> DMatrix<T> {
    let d = model.dim();
    let p = model.lag_order();
    if p == 1 {
        return model.phi[0].clone();
    }
    let mut c = DMatrix::zeros(d * p, d * p);
    for (l, m) in model.phi.iter().enumerate() {
        c.view_mut((0, l * d), (d, d)).copy_from(m);
    }
    for l in 1..p {
        c.view_mut((l * d, (l - 1) * d), (d, d)).fill_with_identity();
    }
    c
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    if n == 0 {
        return T::zero();
    }
    if n == 1 {
        return m[(0, 0)].abs();
    }
    match Schur::try_new(m.clone(), T::eps(), 10_000) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|c| (c.re * c.re + c.im * c.im).sqrt())
            .fold(T::zero(), |a, b| a.max(b)),
        None => gelfand_radius(m),
    }
}

/// `ρ(A) = lim ‖A^(2^k)‖^(1/2^k)` via repeated squaring in log scale.
fn gelfand_radius<T: Real>(m: &DMatrix<T>) -> T {
    let norm = m.norm();
    if norm == T::zero() {
        return T::zero();
    }
    let mut b = m / norm;
    let mut log_scale = norm.ln();
    let mut power = T::one();
    for _ in 0..40 {
        b = &b * &b;
        let s = b.norm();
        if s == T::zero() {
            return T::zero();
        }
        b /= s;
        log_scale = log_scale * T::lit(2.0) + s.ln();
        power *= T::lit(2.0);
    }
    (log_scale / power).exp()
}

pub fn is_stable<T: Real>(model: &VarModel<T>, margin: T) -> bool {
    model.spectral_radius() < margin
}

/// Lower-triangular-ish factor `L` with `LLᵀ = Σ`, valid for singular Σ.
fn covariance_factor<T: Real>(cov: &DMatrix<T>) -> DMatrix<T> {
    if cov.iter().all(|v| *v == T::zero()) {
        return DMatrix::zeros(cov.nrows(), cov.ncols());
    }
    let eig = cov.clone().symmetric_eigen();
    let mut v = eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(T::zero()).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    v
}

/// Simulates `t_len` observations after discarding `burn_in` points,
/// starting from a zero pre-sample.
pub fn simulate_var<T: Real>(
    model: &VarModel<T>,
    t_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SubjectSeries<T>> {
    let start = DMatrix::zeros(model.dim(), model.lag_order());
    simulate_var_from(model, &start, t_len, burn_in, seed)
}

/// As [`simulate_var`] with an explicit pre-sample: column `j` of `start`
/// holds `X_{j−p}`, so the last column is the most recent value.
pub fn simulate_var_from<T: Real>(
    model: &VarModel<T>,
    start: &DMatrix<T>,
    t_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SubjectSeries<T>> {
    let d = model.dim();
    let p = model.lag_order();
    if start.nrows() != d || start.ncols() != p {
        return Err(Error::Dimension(format!(
            "pre-sample must be {d}x{p}, got {}x{}",
            start.nrows(),
            start.ncols()
        )));
    }
    let radius = model.spectral_radius();
    if radius >= T::one() {
        return Err(Error::Unstable { radius: radius.as_f64(), margin: 1.0 });
    }
    let factor = covariance_factor(&model.noise_cov);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = burn_in + t_len;
    let mut path = DMatrix::zeros(d, p + total);
    path.columns_mut(0, p).copy_from(start);
    let mut shock = DVector::zeros(d);
    for t in p..p + total {
        for s in shock.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s = T::lit(z);
        }
        let mut x = &factor * &shock;
        for (l, phi) in model.phi.iter().enumerate() {
            x.gemv(T::one(), phi, &path.column(t - l - 1), T::one());
        }
        path.set_column(t, &x);
    }
    SubjectSeries::new("sim", path.columns(p + burn_in, t_len).into_owned())
}

/// Least-squares VAR fit with rank diagnostics.
#[derive(Debug, Clone)]
pub struct OlsFit<T: Real> {
    pub model: VarModel<T>,
    /// Numerical rank of `Z`.
    pub rank: usize,
    /// Set when `rank < dp`; the coefficients are then the minimum-norm solution.
    pub rank_deficient: bool,
    pub n_obs: usize,
    /// Moore–Penrose inverse of `ZZᵀ`.
    pub gram_pinv: DMatrix<T>,
    /// Per-equation residual variance `RSSᵢ / (n − rank)`.
    pub residual_variance: DVector<T>,
}

impl<T: Real> OlsFit<T> {
    pub fn residual_dof(&self) -> usize {
        self.n_obs.saturating_sub(self.rank)
    }
}

/// Row-wise least squares `argmin ‖Y − ΦZ‖²`.
pub fn fit_ols<T: Real>(series: &SubjectSeries<T>, p: usize) -> Result<VarModel<T>> {
    Ok(fit_ols_regression(&build_regression(series, p)?)?.model)
}

pub fn fit_ols_regression<T: Real>(reg: &RegressionForm<T>) -> Result<OlsFit<T>> {
    let (d, n, p) = (reg.dim(), reg.n_obs(), reg.lag_order());
    let dp = d * p;
    let svd = SVD::try_new(reg.z.transpose(), true, true, T::eps(), 0)
        .ok_or_else(|| Error::InvalidArgument("SVD of design matrix did not converge".into()))?;
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &b| a.max(b));
    let tol = smax * T::count(n.max(dp)) * T::eps();
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut coef_t = DMatrix::zeros(dp, d); // Φᵀ = V Σ⁺ Uᵀ Yᵀ
    let mut gram_pinv = DMatrix::zeros(dp, dp);
    let yt = reg.y.transpose();
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol || s == T::zero() {
            continue;
        }
        rank += 1;
        let vi = v_t.row(i).transpose();
        let uy = u.column(i).transpose() * &yt; // 1×d
        coef_t += &vi * (uy / s);
        gram_pinv += &vi * vi.transpose() / (s * s);
    }
    let phi = coef_t.transpose();
    let resid = &reg.y - &phi * &reg.z;
    let dof = T::count(n.saturating_sub(rank).max(1));
    let mut cov = &resid * resid.transpose() / dof;
    cov = (&cov + cov.transpose()) * T::lit(0.5);
    let residual_variance = cov.diagonal();
    Ok(OlsFit {
        model: VarModel::from_stacked(&phi, p, cov)?,
        rank,
        rank_deficient: rank < dp,
        n_obs: n,
        gram_pinv,
        residual_variance,
    })
}
