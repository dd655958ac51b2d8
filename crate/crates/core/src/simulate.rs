//! Multi-subject VAR(1) data with controlled qualitative and quantitative
//! heterogeneity.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::var::{simulate_var, MultiSubjectSeries, SubjectSeries, VarModel, DEFAULT_BURN_IN};

const INTEGRAL_TOL: f64 = 1e-9;

/// Group proportions for paths (`pi_p`) and subjects (`pi_i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneitySpec {
    pub pi_p: Vec<f64>,
    pub pi_i: Vec<f64>,
    pub d: usize,
    pub k: usize,
    pub value_lb: f64,
    pub value_ub: f64,
    pub stability_target: f64,
    #[serde(default)]
    pub random_sign: bool,
}

fn integral(x: f64, what: &str) -> Result<usize> {
    let r = x.round();
    if (x - r).abs() > INTEGRAL_TOL || r < 0.0 {
        return Err(Error::Spec(format!("{what} = {x} is not a whole number")));
    }
    Ok(r as usize)
}

fn check_values(lb: f64, ub: f64, target: f64) -> Result<()> {
    if !(lb > 0.0 && lb <= ub && ub.is_finite()) {
        return Err(Error::Spec(format!("value bounds must satisfy 0 < lb <= ub, got [{lb}, {ub}]")));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Spec(format!("stability target must lie in (0,1), got {target}")));
    }
    Ok(())
}

impl HeterogeneitySpec {
    /// Checks the invariants and returns the group sizes `(d_g, k_g)`.
    pub fn group_sizes(&self) -> Result<Vec<(usize, usize)>> {
        if self.d == 0 || self.k == 0 {
            return Err(Error::Spec("d and k must be positive".into()));
        }
        if self.pi_p.is_empty() || self.pi_p.len() != self.pi_i.len() {
            return Err(Error::Spec(format!(
                "pi_p and pi_i need the same non-zero length, got {} and {}",
                self.pi_p.len(),
                self.pi_i.len()
            )));
        }
        if self.pi_p.iter().chain(&self.pi_i).any(|&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::Spec("all proportions must lie in (0,1]".into()));
        }
        if self.pi_p.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Spec("pi_p must be strictly decreasing".into()));
        }
        if self.pi_p.iter().sum::<f64>() > 1.0 + INTEGRAL_TOL {
            return Err(Error::Spec("pi_p must sum to at most 1".into()));
        }
        check_values(self.value_lb, self.value_ub, self.stability_target)?;
        let d2 = (self.d * self.d) as f64;
        let sizes = self
            .pi_p
            .iter()
            .zip(&self.pi_i)
            .enumerate()
            .map(|(g, (&pp, &pi))| {
                let dg = integral(pp * d2, &format!("pi_p[{g}]*d^2 ({pp}*{d2})"))?;
                let kg = integral(pi * self.k as f64, &format!("pi_i[{g}]*K ({pi}*{})", self.k))?;
                Ok((dg, kg))
            })
            .collect::<Result<Vec<_>>>()?;
        if sizes.iter().map(|s| s.0).sum::<usize>() > self.d * self.d {
            return Err(Error::Spec("path groups need more than d^2 locations".into()));
        }
        Ok(sizes)
    }

    /// Expected fraction of nonzero entries per subject.
    pub fn expected_density(&self) -> f64 {
        self.pi_p.iter().zip(&self.pi_i).map(|(p, i)| p * i).sum()
    }
}

/// Heterogeneity presets with d = 10, K = 15.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    No,
    Low,
    High,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::No, Condition::Low, Condition::High];

    pub fn name(self) -> &'static str {
        match self {
            Self::No => "no",
            Self::Low => "low",
            Self::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no" | "none" => Some(Self::No),
            "low" => Some(Self::Low),
            "high" => Some(Self::High),
            _ => None,
        }
    }

    pub fn spec(self) -> HeterogeneitySpec {
        let (pi_p, pi_i) = match self {
            Self::No => (vec![0.25], vec![1.0]),
            Self::Low => (vec![0.2, 0.1, 0.05], vec![1.0, 2.0 / 3.0, 1.0 / 3.0]),
            Self::High => (vec![0.2, 0.1, 0.05], vec![1.0 / 3.0, 2.0 / 3.0, 1.0]),
        };
        HeterogeneitySpec {
            pi_p,
            pi_i,
            d: 10,
            k: 15,
            value_lb: 0.1,
            value_ub: 0.9,
            stability_target: 0.95,
            random_sign: false,
        }
    }
}

/// One iteration of the support assignment: path locations `(row, col)`
/// and the subjects that receive them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathGroup {
    pub paths: Vec<(usize, usize)>,
    pub subjects: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportAssignment {
    pub masks: Vec<DMatrix<bool>>,
    pub groups: Vec<PathGroup>,
}

fn sorted_sample(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    let mut v = sample(rng, n, m).into_vec();
    v.sort_unstable();
    v
}

fn assign_with(spec: &HeterogeneitySpec, rng: &mut ChaCha8Rng) -> Result<SupportAssignment> {
    let sizes = spec.group_sizes()?;
    let d = spec.d;
    let mut free: Vec<usize> = (0..d * d).collect();
    let mut masks = vec![DMatrix::from_element(d, d, false); spec.k];
    let mut groups = Vec::with_capacity(sizes.len());
    for (dg, kg) in sizes {
        let picks = sorted_sample(rng, free.len(), dg);
        // Remove picked locations from the free pool, highest index first.
        let mut locs: Vec<usize> = picks.iter().rev().map(|&i| free.remove(i)).collect();
        locs.sort_unstable();
        let subjects = sorted_sample(rng, spec.k, kg);
        let paths: Vec<(usize, usize)> = locs.iter().map(|&l| (l / d, l % d)).collect();
        for &s in &subjects {
            for &(r, c) in &paths {
                masks[s][(r, c)] = true;
            }
        }
        groups.push(PathGroup { paths, subjects });
    }
    Ok(SupportAssignment { masks, groups })
}

/// Group-wise random path and subject selection, deterministic per seed.
pub fn assign_supports(spec: &HeterogeneitySpec, seed: u64) -> Result<SupportAssignment> {
    assign_with(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn draw_value(rng: &mut ChaCha8Rng, lb: f64, ub: f64, random_sign: bool) -> f64 {
    let mag = if lb == ub { lb } else { rng.gen_range(lb..ub) };
    if random_sign && rng.gen::<bool>() {
        -mag
    } else {
        mag
    }
}

fn draw_with<T: Real>(
    masks: &[DMatrix<bool>],
    lb: f64,
    ub: f64,
    random_sign: bool,
    target: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<VarModel<T>>> {
    masks
        .iter()
        .map(|mask| {
            let d = mask.nrows();
            let mut phi = DMatrix::zeros(d, d);
            for (v, &on) in phi.iter_mut().zip(mask.iter()) {
                if on {
                    *v = T::lit(draw_value(rng, lb, ub, random_sign));
                }
            }
            let model = VarModel::new(vec![phi], DMatrix::identity(d, d))?;
            rescale_to_stability(&model, T::lit(target))
        })
        .collect()
}

/// Independent Uniform(lb, ub) magnitudes on every masked entry, followed
/// by [`rescale_to_stability`]. Noise covariance is the identity.
pub fn draw_coefficients<T: Real>(
    masks: &[DMatrix<bool>],
    spec: &HeterogeneitySpec,
    seed: u64,
) -> Result<Vec<VarModel<T>>> {
    check_values(spec.value_lb, spec.value_ub, spec.stability_target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_with(masks, spec.value_lb, spec.value_ub, spec.random_sign, spec.stability_target, &mut rng)
}

/// Shrinks lag `ℓ` by `(target/ρ)^ℓ` when the spectral radius `ρ` exceeds
/// `target`, which scales every companion eigenvalue by `target/ρ`.
pub fn rescale_to_stability<T: Real>(model: &VarModel<T>, target: T) -> Result<VarModel<T>> {
    if !(target > T::zero() && target < T::one()) {
        return Err(Error::InvalidArgument(format!("stability target must lie in (0,1), got {target}")));
    }
    let rho = model.spectral_radius();
    if rho <= target {
        return Ok(model.clone());
    }
    let c = target / rho;
    let phi = model
        .phi()
        .iter()
        .enumerate()
        .map(|(l, m)| m * c.powi(l as i32 + 1))
        .collect();
    model.with_phi(phi)
}

/// Simulated data together with the generating truth.
#[derive(Debug, Clone)]
pub struct GeneratedDataset<T: Real> {
    pub series: MultiSubjectSeries<T>,
    pub true_models: Vec<VarModel<T>>,
    /// Paths present in every subject.
    pub true_common_support: DMatrix<bool>,
    pub true_supports: Vec<DMatrix<bool>>,
    pub groups: Vec<PathGroup>,
}

impl<T: Real> GeneratedDataset<T> {
    /// Mean fraction of nonzero transition entries per subject.
    pub fn support_density(&self) -> f64 {
        support_density(&self.true_supports)
    }

    pub fn true_phis(&self) -> Vec<DMatrix<T>> {
        self.true_models.iter().map(|m| m.stacked()).collect()
    }
}

pub fn support_density(masks: &[DMatrix<bool>]) -> f64 {
    if masks.is_empty() {
        return 0.0;
    }
    masks
        .iter()
        .map(|m| m.iter().filter(|&&b| b).count() as f64 / m.len().max(1) as f64)
        .sum::<f64>()
        / masks.len() as f64
}

fn common_support(masks: &[DMatrix<bool>]) -> DMatrix<bool> {
    let mut common = masks[0].clone();
    for m in &masks[1..] {
        common.zip_apply(m, |a, b| *a = *a && b);
    }
    common
}

fn subject_id(k: usize, n: usize) -> String {
    let width = n.to_string().len().max(2);
    format!("s{:0width$}", k + 1)
}

fn finish<T: Real>(
    masks: Vec<DMatrix<bool>>,
    groups: Vec<PathGroup>,
    models: Vec<VarModel<T>>,
    t_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratedDataset<T>> {
    let n = models.len();
    let series = models
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let s = simulate_var(m, t_len, DEFAULT_BURN_IN, rng.gen())?;
            SubjectSeries::new(subject_id(k, n), s.data().clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratedDataset {
        series: MultiSubjectSeries::new(series)?,
        true_common_support: common_support(&masks),
        true_models: models,
        true_supports: masks,
        groups,
    })
}

/// Supports, coefficients and `t_len` observations per subject from one seed.
pub fn generate_dataset<T: Real>(spec: &HeterogeneitySpec, t_len: usize, seed: u64) -> Result<GeneratedDataset<T>> {
    if t_len == 0 {
        return Err(Error::InvalidArgument("series length must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let SupportAssignment { masks, groups } = assign_with(spec, &mut rng)?;
    let models = draw_with(&masks, spec.value_lb, spec.value_ub, spec.random_sign, spec.stability_target, &mut rng)?;
    finish(masks, groups, models, t_len, &mut rng)
}

/// Shared-plus-unique layout: a block of paths common to every subject and
/// a disjoint set of unique paths per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonUniqueSpec {
    pub k: usize,
    pub d: usize,
    pub prop_fill_com: f64,
    pub prop_fill_ind: f64,
    pub value_lb: f64,
    pub value_ub: f64,
    pub stability_target: f64,
    #[serde(default)]
    pub random_sign: bool,
}

impl CommonUniqueSpec {
    pub fn new(k: usize, d: usize, prop_fill_com: f64, prop_fill_ind: f64) -> Self {
        Self {
            k,
            d,
            prop_fill_com,
            prop_fill_ind,
            value_lb: 0.1,
            value_ub: 0.9,
            stability_target: 0.95,
            random_sign: false,
        }
    }
}

pub fn generate_common_unique<T: Real>(spec: &CommonUniqueSpec, t_len: usize, seed: u64) -> Result<GeneratedDataset<T>> {
    let (k, d) = (spec.k, spec.d);
    if k == 0 || d == 0 || t_len == 0 {
        return Err(Error::Spec("k, d and t must be positive".into()));
    }
    let props = [spec.prop_fill_com, spec.prop_fill_ind];
    if props.iter().any(|&v| !(0.0..=1.0).contains(&v)) || props.iter().sum::<f64>() > 1.0 + INTEGRAL_TOL {
        return Err(Error::Spec("fill proportions must be non-negative and sum to at most 1".into()));
    }
    check_values(spec.value_lb, spec.value_ub, spec.stability_target)?;
    let d2 = d * d;
    let n_com = integral(spec.prop_fill_com * d2 as f64, "common proportion * d^2")?;
    let n_ind = integral(spec.prop_fill_ind * d2 as f64, "unique proportion * d^2")?;
    if n_com + k * n_ind > d2 {
        return Err(Error::Spec(format!(
            "{n_com} common plus {k}x{n_ind} unique paths exceed the {d2} available locations"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, d2, n_com + k * n_ind).into_vec();
    let to_path = |l: usize| (l / d, l % d);
    let mut common: Vec<(usize, usize)> = picks[..n_com].iter().map(|&l| to_path(l)).collect();
    common.sort_unstable();
    let mut groups = vec![PathGroup { paths: common, subjects: (0..k).collect() }];
    let mut masks = vec![DMatrix::from_element(d, d, false); k];
    for s in 0..k {
        let start = n_com + s * n_ind;
        let mut paths: Vec<(usize, usize)> = picks[start..start + n_ind].iter().map(|&l| to_path(l)).collect();
        paths.sort_unstable();
        groups.push(PathGroup { paths, subjects: vec![s] });
    }
    for g in &groups {
        for &s in &g.subjects {
            for &(r, c) in &g.paths {
                masks[s][(r, c)] = true;
            }
        }
    }
    let models = draw_with(&masks, spec.value_lb, spec.value_ub, spec.random_sign, spec.stability_target, &mut rng)?;
    finish(masks, groups, models, t_len, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn count(m: &DMatrix<bool>) -> usize {
        m.iter().filter(|&&b| b).count()
    }

    #[test]
    fn high_group_sizes() {
        let a = assign_supports(&Condition::High.spec(), 3).unwrap();
        let sizes: Vec<(usize, usize)> = a.groups.iter().map(|g| (g.paths.len(), g.subjects.len())).collect();
        assert_eq!(sizes, vec![(20, 5), (10, 10), (5, 15)]);
        let mut all: Vec<_> = a.groups.iter().flat_map(|g| g.paths.clone()).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 35);
    }

    #[test]
    fn no_heterogeneity_identical_masks() {
        let a = assign_supports(&Condition::No.spec(), 11).unwrap();
        assert!(a.masks.iter().all(|m| m == &a.masks[0]));
        assert_eq!(count(&a.masks[0]), 25);
    }

    #[test]
    fn full_saturation() {
        let spec = HeterogeneitySpec { pi_p: vec![1.0], pi_i: vec![1.0], d: 2, k: 3, ..Condition::No.spec() };
        let a = assign_supports(&spec, 0).unwrap();
        assert!(a.masks.iter().all(|m| count(m) == 4));
    }

    #[test]
    fn spec_errors() {
        let mut s = Condition::Low.spec();
        s.k = 14;
        assert!(matches!(s.group_sizes(), Err(Error::Spec(_))));
        let mut s = Condition::Low.spec();
        s.pi_p = vec![0.1, 0.2, 0.05];
        assert!(s.group_sizes().is_err());
        let mut s = Condition::Low.spec();
        s.value_lb = 0.0;
        assert!(s.group_sizes().is_err());
    }

    #[test]
    fn degenerate_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let v = draw_value(&mut rng, 0.3, 0.3, true);
            assert!(v == 0.3 || v == -0.3);
        }
        assert!((0..100).all(|_| draw_value(&mut rng, 0.3, 0.3, false) == 0.3));
    }

    #[test]
    fn draws_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws: Vec<f64> = (0..10_000).map(|_| draw_value(&mut rng, 0.1, 0.9, false)).collect();
        assert!(draws.iter().all(|&v| (0.1..=0.9).contains(&v)));
    }

    #[test]
    fn shared_paths_get_distinct_values() {
        for seed in 0..10 {
            let ds: GeneratedDataset<f64> = generate_dataset(&Condition::No.spec(), 30, seed).unwrap();
            let (r, c) = ds.groups[0].paths[0];
            assert_ne!(ds.true_models[0].phi()[0][(r, c)], ds.true_models[1].phi()[0][(r, c)]);
        }
    }

    #[test]
    fn rescale_cases() {
        let m = VarModel::new(vec![DMatrix::from_element(1, 1, 0.4)], DMatrix::identity(1, 1)).unwrap();
        assert_eq!(rescale_to_stability(&m, 0.95).unwrap(), m);
        let m = VarModel::new(vec![DMatrix::identity(3, 3) * 1.9], DMatrix::identity(3, 3)).unwrap();
        let r = rescale_to_stability(&m, 0.95).unwrap();
        assert_relative_eq!(r.phi()[0], DMatrix::identity(3, 3) * 0.95, epsilon = 1e-12);
    }

    #[test]
    fn rescale_multi_lag() {
        let a1 = DMatrix::from_row_slice(2, 2, &[0.9, 0.4, 0.2, 0.7]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.3, 0.4]);
        let m = VarModel::new(vec![a1, a2], DMatrix::identity(2, 2)).unwrap();
        assert!(m.spectral_radius() > 1.0);
        let r = rescale_to_stability(&m, 0.9).unwrap();
        assert_relative_eq!(r.spectral_radius(), 0.9, epsilon = 1e-9);
    }

    #[test]
    fn dataset_shapes_and_truth() {
        let ds: GeneratedDataset<f64> = generate_dataset(&Condition::Low.spec(), 100, 4).unwrap();
        assert_eq!(ds.series.len(), 15);
        assert!(ds.series.subjects().iter().all(|s| s.dim() == 10 && s.len() == 100));
        for (m, mask) in ds.true_models.iter().zip(&ds.true_supports) {
            assert!(m.is_stable(1.0));
            assert!(m.spectral_radius() <= 0.95 + 1e-9);
            let support = m.phi()[0].map(|v| v != 0.0);
            assert_eq!(&support, mask);
        }
        assert_eq!(count(&ds.true_common_support), 20);
    }

    #[test]
    fn deterministic() {
        let a: GeneratedDataset<f64> = generate_dataset(&Condition::High.spec(), 30, 77).unwrap();
        let b: GeneratedDataset<f64> = generate_dataset(&Condition::High.spec(), 30, 77).unwrap();
        assert_eq!(a.series, b.series);
        let c: GeneratedDataset<f64> = generate_dataset(&Condition::High.spec(), 30, 78).unwrap();
        assert_ne!(a.series, c.series);
    }

    #[test]
    fn common_unique_cases() {
        let ds: GeneratedDataset<f64> = generate_common_unique(&CommonUniqueSpec::new(3, 10, 0.0, 0.1), 50, 1).unwrap();
        assert!(ds.true_supports.iter().all(|m| count(m) == 10));
        assert_eq!(count(&ds.true_common_support), 0);
        let mut overlap = ds.true_supports[0].clone();
        overlap.zip_apply(&ds.true_supports[1], |a, b| *a = *a && b);
        assert_eq!(count(&overlap), 0);

        let ds: GeneratedDataset<f64> = generate_common_unique(&CommonUniqueSpec::new(3, 10, 0.1, 0.0), 50, 1).unwrap();
        assert!(ds.true_supports.iter().all(|m| m == &ds.true_supports[0] && count(m) == 10));

        let ds: GeneratedDataset<f64> = generate_common_unique(&CommonUniqueSpec::new(3, 10, 0.05, 0.05), 50, 1).unwrap();
        assert!(ds.true_supports.iter().all(|m| count(m) == 10));
        assert_eq!(count(&ds.true_common_support), 5);

        assert!(generate_common_unique::<f64>(&CommonUniqueSpec::new(15, 10, 0.1, 0.1), 50, 1).is_err());
    }
}
