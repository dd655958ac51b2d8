//! Brute-force oracles shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use multivar_core::solver::{lambda_max, PenaltySpec, Problem};
use multivar_core::var::{build_regression, simulate_var};
use multivar_core::{AdaptiveWeights, EffectsDecomposition, RegressionForm, SubjectSeries, VarModel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub regs: Vec<RegressionForm<f64>>,
    pub problem: Problem<f64>,
    pub pen: PenaltySpec<f64>,
}

/// Random multi-subject problem with `T = 25`, `d ∈ {2,3}`, `K ∈ {1,2,3}`,
/// random adaptive weights and penalties between 1% and 60% of λᵐᵃˣ.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..=3);
    let k = rng.gen_range(1..=3);
    let phi = DMatrix::from_fn(d, d, |_, _| if rng.gen_bool(0.5) { rng.gen_range(-0.4..0.4) } else { 0.0 });
    let regs: Vec<_> = (0..k)
        .map(|_| {
            let mut own = phi.clone();
            own[(rng.gen_range(0..d), rng.gen_range(0..d))] += rng.gen_range(-0.3..0.3);
            let model = VarModel::new(vec![own * 0.9], DMatrix::identity(d, d)).unwrap();
            let model = if model.is_stable(0.99) { model } else { VarModel::new(vec![phi.clone() * 0.5], DMatrix::identity(d, d)).unwrap() };
            let s = simulate_var(&model, 25, 50, rng.gen()).unwrap();
            build_regression(&SubjectSeries::new("s", s.data().clone()).unwrap(), 1).unwrap()
        })
        .collect();
    let problem = Problem::new(&regs).unwrap();
    let weights = AdaptiveWeights {
        common: DMatrix::from_fn(d, d, |_, _| rng.gen_range(0.5..2.0)),
        unique: (0..k).map(|_| DMatrix::from_fn(d, d, |_, _| rng.gen_range(0.5..2.0))).collect(),
        alpha: 1.0,
        cap: 2.0,
    };
    let (l1, l2) = lambda_max(&problem, Some(&weights));
    let lambda1 = l1 * rng.gen_range(0.01..0.6);
    let lambda2 = l2.iter().map(|&m| m * rng.gen_range(0.01..0.6)).collect();
    Instance { regs, problem, pen: PenaltySpec::adaptive(lambda1, lambda2, weights) }
}

/// Cyclic coordinate descent on the residual form of the objective.
pub fn coordinate_descent(inst: &Instance, sweeps: usize) -> EffectsDecomposition<f64> {
    let regs = &inst.regs;
    let k = regs.len();
    let d = regs[0].dim();
    let dp = regs[0].z.nrows();
    let n: f64 = regs.iter().map(|r| (r.dim() * r.n_obs()) as f64).sum();
    let w = inst.pen.weights.as_ref().unwrap();
    let mut dec = EffectsDecomposition::zeros(d, dp, k);
    let mut resid: Vec<DMatrix<f64>> = regs.iter().map(|r| r.y.clone()).collect();
    let soft = |x: f64, t: f64| x.signum() * (x.abs() - t).max(0.0);
    for _ in 0..sweeps {
        let mut moved = 0.0f64;
        for i in 0..d {
            for j in 0..dp {
                // Common coordinate couples every subject.
                let mut curv = 0.0;
                let mut lin = 0.0;
                for (s, r) in regs.iter().enumerate() {
                    let zj = r.z.row(j);
                    curv += zj.norm_squared();
                    lin += resid[s].row(i).dot(&zj);
                }
                let old = dec.common[(i, j)];
                if curv > 0.0 {
                    let a = 2.0 * curv / n;
                    let g = -2.0 * lin / n;
                    let new = soft(old - g / a, inst.pen.lambda1 * w.common[(i, j)] / a);
                    if new != old {
                        for (s, r) in regs.iter().enumerate() {
                            let delta = r.z.row(j) * (new - old);
                            let mut row = resid[s].row_mut(i);
                            row -= delta;
                        }
                        dec.common[(i, j)] = new;
                        moved = moved.max((new - old).abs());
                    }
                }
                for (s, r) in regs.iter().enumerate() {
                    let zj = r.z.row(j);
                    let curv = zj.norm_squared();
                    if curv == 0.0 {
                        continue;
                    }
                    let old = dec.unique[s][(i, j)];
                    let a = 2.0 * curv / n;
                    let g = -2.0 * resid[s].row(i).dot(&zj) / n;
                    let new = soft(old - g / a, inst.pen.lambda2[s] * w.unique[s][(i, j)] / a);
                    if new != old {
                        let delta = zj * (new - old);
                        let mut row = resid[s].row_mut(i);
                        row -= delta;
                        dec.unique[s][(i, j)] = new;
                        moved = moved.max((new - old).abs());
                    }
                }
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    dec
}

/// Minimizer of `½(x − v)² + t|x|` by repeatedly refined grid search.
pub fn prox_grid_search(v: f64, t: f64) -> f64 {
    // f(a) − f(b) in a form that keeps precision near the minimum.
    let diff = |a: f64, b: f64| 0.5 * (a - b) * (a + b - 2.0 * v) + t * (a.abs() - b.abs());
    let (mut lo, mut hi) = (-v.abs() - 1.0, v.abs() + 1.0);
    while hi - lo > 1e-13 {
        let step = (hi - lo) / 100.0;
        let best = (0..=100)
            .map(|i| lo + step * i as f64)
            .min_by(|a, b| diff(*a, *b).partial_cmp(&0.0).unwrap())
            .unwrap();
        lo = (best - step).max(lo);
        hi = (best + step).min(hi);
    }
    0.5 * (lo + hi)
}

/// Largest relative deviation between the analytic gradient and central differences.
pub fn gradient_error(problem: &Problem<f64>, at: &EffectsDecomposition<f64>) -> f64 {
    let grad = problem.smooth_gradient(at).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let nblocks = 1 + at.unique.len();
    for b in 0..nblocks {
        for idx in 0..at.common.len() {
            let bump = |delta: f64| {
                let mut x = at.clone();
                if b == 0 {
                    x.common[idx] += delta;
                } else {
                    x.unique[b - 1][idx] += delta;
                }
                problem.smooth_value(&x)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let an = if b == 0 { grad.common[idx] } else { grad.unique[b - 1][idx] };
            let scale = an.abs().max(fd.abs()).max(1e-3);
            worst = worst.max((an - fd).abs() / scale);
        }
    }
    worst
}

/// Characteristic polynomial coefficients (monic, highest degree first)
/// by the Faddeev–LeVerrier recursion.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut c = 1.0;
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * c;
        c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// All roots of a monic polynomial by Durand–Kerner iteration.
pub fn durand_kerner(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex64| coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..2000 {
        let prev = roots.clone();
        for i in 0..n {
            let denom = (0..n).filter(|&j| j != i).fold(Complex64::new(1.0, 0.0), |acc, j| acc * (roots[i] - roots[j]));
            if denom.norm() > 0.0 {
                let step = eval(roots[i]) / denom;
                roots[i] -= step;
            }
        }
        if roots.iter().zip(&prev).all(|(a, b)| (a - b).norm() < 1e-14) {
            break;
        }
    }
    roots
}

/// Spectral radius by the Gelfand formula `‖Aⁿ‖^{1/n}` with renormalisation.
pub fn power_radius(a: &DMatrix<f64>, n: usize) -> f64 {
    let mut m = DMatrix::<f64>::identity(a.nrows(), a.ncols());
    let mut log_scale = 0.0;
    for _ in 0..n {
        m = a * m;
        let s = m.norm();
        if s == 0.0 {
            return 0.0;
        }
        log_scale += s.ln();
        m /= s;
    }
    (log_scale / n as f64).exp()
}

/// Outcome of the two limit checks on one random instance: whether the
/// common block is exactly zero at a λ₁ above its zero threshold, and
/// whether every unique block is exactly zero at λ₂ above theirs.
pub fn limit_checks(seed: u64) -> (bool, bool) {
    use multivar_core::solver::{common_zero_threshold, fista_solve, unique_zero_threshold, SolverConfig};
    let inst = random_instance(seed);
    let cfg = SolverConfig { max_iter: 200_000, tol: 1e-14, ..SolverConfig::default() };
    let w = inst.pen.weights.clone().unwrap();
    let (l1max, l2max) = lambda_max(&inst.problem, Some(&w));

    // Strictly above the thresholds: at equality the split between common
    // and unique parts is not unique.
    let l1 = common_zero_threshold(&inst.problem, Some(&w), &inst.pen.lambda2) * (1.0 + 1e-3);
    let pen = PenaltySpec { lambda1: l1, ..inst.pen.clone() };
    let out = fista_solve(&inst.problem, &pen, &cfg, None).unwrap();
    let all_zero = fista_solve(&inst.problem, &PenaltySpec { lambda1: l1max, lambda2: l2max.clone(), ..inst.pen.clone() }, &cfg, None).unwrap();
    let common_ok = out.decomposition.common.iter().all(|&v| v == 0.0)
        && all_zero.decomposition.blocks().all(|b| b.iter().all(|&v| v == 0.0));

    let huge: Vec<f64> = l2max.iter().map(|&m| m * 1e6).collect();
    let pooled = fista_solve(&inst.problem, &PenaltySpec { lambda2: huge, ..inst.pen.clone() }, &cfg, None).unwrap();
    let l2: Vec<f64> = unique_zero_threshold(&inst.problem, Some(&w), &pooled.decomposition.common)
        .iter()
        .map(|&t| t * (1.0 + 1e-3))
        .collect();
    let out = fista_solve(&inst.problem, &PenaltySpec { lambda2: l2, ..inst.pen.clone() }, &cfg, None).unwrap();
    let unique_ok = out.decomposition.unique.iter().all(|u| u.iter().all(|&v| v == 0.0));
    (common_ok, unique_ok)
}
