//! Elastic net `‖y − Xw − b‖² + λ₁‖w‖₁ + λ₂‖w‖²` by cyclic coordinate descent.
//!
//! Updates work on the Gram matrix of the centred design, so one coordinate
//! step costs O(p) and the data are touched only once per problem.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 10_000;
pub const COEF_TOLERANCE: f64 = 1e-9;
/// Relative KKT violation (against `1 + lambda_max`) accepted when the sweep cap is hit.
pub const KKT_TOLERANCE: f64 = 1e-6;
/// Relative KKT violation an exact active-set solve must reach to end the sweeps early.
pub const KKT_STOP: f64 = 1e-9;
const POLISH_EVERY: usize = 20;
/// Smallest λ₁ on a path relative to `lambda_max`.
pub const PATH_FLOOR: f64 = 1e-4;
pub const DEFAULT_LAMBDA_RATIO: f64 = 0.5;
pub const DEFAULT_PATH_SIZE: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub active_count: usize,
    pub sweeps: usize,
}

impl ElasticNetModel {
    pub fn is_active(&self, feature: usize) -> bool {
        self.weights[feature] != 0.0
    }

    pub fn active_features(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&j| self.is_active(j)).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationPath {
    /// Ordered from largest λ₁ to smallest.
    pub models: Vec<ElasticNetModel>,
    pub lambda_ratio: f64,
    pub lambda_max: f64,
}

/// Centred sufficient statistics shared by every fit on the same data.
#[derive(Clone, Debug)]
pub struct Problem {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    x_mean: DVector<f64>,
    y_mean: f64,
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "design has {} rows, target {} values",
            x.nrows(),
            y.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::invalid("elastic net needs at least two samples"));
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("design has no features"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in design or target"));
    }
    Ok(())
}

impl Problem {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        check_inputs(x, y)?;
        let n = x.nrows() as f64;
        let x_mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
        let y_mean = y.iter().sum::<f64>() / n;
        let mut xc = x.clone();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-x_mean[j]);
        }
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
        Ok(Self {
            gram: xc.transpose() * &xc,
            xty: xc.transpose() * yc,
            x_mean,
            y_mean,
        })
    }

    pub fn n_features(&self) -> usize {
        self.xty.len()
    }

    /// Smallest λ₁ for which the all-zero model is optimal.
    pub fn lambda_max(&self) -> f64 {
        2.0 * self.xty.amax()
    }

    /// `x̃_jᵀ r̃` for every feature at coefficients `w`.
    fn correlations(&self, w: &[f64]) -> DVector<f64> {
        &self.xty - &self.gram * DVector::from_column_slice(w)
    }

    /// Largest violation of the subgradient optimality conditions.
    pub fn kkt_violation(&self, w: &[f64], lambda1: f64, lambda2: f64) -> f64 {
        let c = self.correlations(w);
        w.iter()
            .zip(c.iter())
            .map(|(&wj, &cj)| {
                if wj != 0.0 {
                    (2.0 * cj - lambda1 * wj.signum() - 2.0 * lambda2 * wj).abs()
                } else {
                    (2.0 * cj.abs() - lambda1).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Solves the optimality conditions exactly on the current active set and signs.
    /// Returns the solution only if the signs persist and every condition holds.
    fn polish(&self, w: &[f64], lambda1: f64, lambda2: f64, kkt_stop: f64) -> Option<Vec<f64>> {
        let active: Vec<usize> = (0..w.len()).filter(|&j| w[j] != 0.0).collect();
        if active.is_empty() {
            return None;
        }
        let k = active.len();
        let a = DMatrix::from_fn(k, k, |r, c| self.gram[(active[r], active[c])] + if r == c { lambda2 } else { 0.0 });
        let b = DVector::from_fn(k, |r, _| self.xty[active[r]] - lambda1 / 2.0 * w[active[r]].signum());
        let sol = a.cholesky()?.solve(&b);
        let mut exact = vec![0.0; w.len()];
        for (r, &j) in active.iter().enumerate() {
            if sol[r] == 0.0 || sol[r].signum() != w[j].signum() {
                return None;
            }
            exact[j] = sol[r];
        }
        (self.kkt_violation(&exact, lambda1, lambda2) <= kkt_stop).then_some(exact)
    }

    pub fn fit(&self, lambda1: f64, lambda2: f64) -> Result<ElasticNetModel> {
        self.fit_from(lambda1, lambda2, &vec![0.0; self.n_features()])
    }

    /// Coordinate descent started from `warm`.
    pub fn fit_from(&self, lambda1: f64, lambda2: f64, warm: &[f64]) -> Result<ElasticNetModel> {
        if !(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
            return Err(Error::invalid(format!(
                "penalties must be finite and non-negative, got λ₁={lambda1}, λ₂={lambda2}"
            )));
        }
        let p = self.n_features();
        if warm.len() != p {
            return Err(Error::invalid("warm start has the wrong length"));
        }
        let mut w = warm.to_vec();
        let mut c = self.correlations(&w);
        let half = lambda1 / 2.0;
        let kkt_stop = KKT_STOP * (1.0 + self.lambda_max());
        for sweep in 1..=MAX_SWEEPS {
            let mut max_delta = 0.0f64;
            for j in 0..p {
                let gjj = self.gram[(j, j)];
                let denom = gjj + lambda2;
                let new = if denom > 0.0 {
                    soft_threshold(c[j] + gjj * w[j], half) / denom
                } else {
                    0.0
                };
                let delta = new - w[j];
                if delta != 0.0 {
                    c.axpy(-delta, &self.gram.column(j), 1.0);
                    w[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta < COEF_TOLERANCE {
                return Ok(self.model(w, lambda1, lambda2, sweep));
            }
            if sweep % POLISH_EVERY == 0 {
                if let Some(exact) = self.polish(&w, lambda1, lambda2, kkt_stop) {
                    return Ok(self.model(exact, lambda1, lambda2, sweep));
                }
            }
        }
        // Strongly correlated columns can creep below the step tolerance very slowly;
        // a point that already meets the optimality conditions is kept.
        let kkt_violation = self.kkt_violation(&w, lambda1, lambda2);
        if kkt_violation <= KKT_TOLERANCE * (1.0 + self.lambda_max()) {
            return Ok(self.model(w, lambda1, lambda2, MAX_SWEEPS));
        }
        Err(Error::Convergence { sweeps: MAX_SWEEPS, kkt_violation })
    }

    fn model(&self, w: Vec<f64>, lambda1: f64, lambda2: f64, sweeps: usize) -> ElasticNetModel {
        let intercept = self.y_mean - self.x_mean.iter().zip(&w).map(|(m, v)| m * v).sum::<f64>();
        ElasticNetModel {
            active_count: w.iter().filter(|v| **v != 0.0).count(),
            weights: w,
            intercept,
            lambda1,
            lambda2,
            sweeps,
        }
    }

    /// Geometric λ₁ grid from `lambda_max` to `lambda_max · PATH_FLOOR`, warm-started.
    pub fn fit_path(&self, q: usize, lambda_ratio: f64) -> Result<RegularizationPath> {
        if q < 2 {
            return Err(Error::invalid(format!("a path needs at least 2 models, got {q}")));
        }
        if !(lambda_ratio > 0.0 && lambda_ratio.is_finite()) {
            return Err(Error::invalid(format!("lambda ratio must be positive, got {lambda_ratio}")));
        }
        let lmax = self.lambda_max();
        if !(lmax > 0.0) {
            return Err(Error::Degenerate(
                "target is constant or uncorrelated with every feature; the path is empty".into(),
            ));
        }
        let mut models: Vec<ElasticNetModel> = Vec::with_capacity(q);
        let mut warm = vec![0.0; self.n_features()];
        for k in 0..q {
            let lambda1 = lmax * PATH_FLOOR.powf(k as f64 / (q - 1) as f64);
            let model = self.fit_from(lambda1, lambda_ratio * lambda1, &warm)?;
            warm.clone_from(&model.weights);
            models.push(model);
        }
        Ok(RegularizationPath {
            models,
            lambda_ratio,
            lambda_max: lmax,
        })
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    Ok(Problem::new(x, y)?.lambda_max())
}

pub fn fit(x: &DMatrix<f64>, y: &[f64], lambda1: f64, lambda2: f64) -> Result<ElasticNetModel> {
    Problem::new(x, y)?.fit(lambda1, lambda2)
}

pub fn fit_path(x: &DMatrix<f64>, y: &[f64], q: usize, lambda_ratio: f64) -> Result<RegularizationPath> {
    Problem::new(x, y)?.fit_path(q, lambda_ratio)
}

pub fn predict(model: &ElasticNetModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.weights.len() {
        return Err(Error::invalid(format!(
            "model has {} weights, design {} columns",
            model.weights.len(),
            x.ncols()
        )));
    }
    Ok(x.row_iter()
        .map(|row| model.intercept + row.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>())
        .collect())
}

/// Value of the penalised objective for arbitrary `(w, b)`.
pub fn objective(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64, lambda1: f64, lambda2: f64) -> f64 {
    let rss: f64 = x
        .row_iter()
        .zip(y)
        .map(|(row, yi)| {
            let fit = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            (yi - fit).powi(2)
        })
        .sum();
    rss + lambda1 * w.iter().map(|v| v.abs()).sum::<f64>() + lambda2 * w.iter().map(|v| v * v).sum::<f64>()
}

pub fn model_objective(model: &ElasticNetModel, x: &DMatrix<f64>, y: &[f64]) -> f64 {
    objective(x, y, &model.weights, model.intercept, model.lambda1, model.lambda2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>());
        let y = (0..n).map(|_| rng.random::<f64>()).collect();
        (x, y)
    }

    fn scale(x: &DMatrix<f64>, y: &[f64]) -> f64 {
        let sx = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let sy = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        (sx * sy * x.nrows() as f64).max(1.0)
    }

    #[test]
    fn null_model_at_lambda_max() {
        let (x, y) = random_problem(1, 30, 5);
        let lmax = lambda_max(&x, &y).unwrap();
        let m = fit(&x, &y, lmax * (1.0 + 1e-6), 0.1).unwrap();
        assert_eq!(m.active_count, 0);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.intercept - mean).abs() < 1e-12);
        let m = fit(&x, &y, lmax * (1.0 - 1e-3), 0.1).unwrap();
        assert!(m.active_count >= 1);
    }

    #[test]
    fn lambda_max_examples() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(lambda_max(&x, &[4.0, 4.0, 4.0]).unwrap(), 0.0);
        // x̃ = (-1, 0, 1), ỹ = (-1.5, 0, 1.5): x̃ᵀỹ = 3.
        let l = lambda_max(&x, &[0.0, 1.5, 3.0]).unwrap();
        assert!((l - 6.0).abs() < 1e-12);
        let (x, y) = random_problem(2, 20, 3);
        let dup = DMatrix::from_fn(20, 4, |i, j| x[(i, j.min(2))]);
        assert_eq!(lambda_max(&x, &y).unwrap(), lambda_max(&dup, &y).unwrap());
    }

    #[test]
    fn tiny_penalties_recover_planted_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(60, 4, |_, _| rng.random::<f64>());
        let w_true = [0.5, -1.0, 2.0, 0.25];
        let y: Vec<f64> = x
            .row_iter()
            .map(|r| 0.3 + r.iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let m = fit(&x, &y, 1e-8, 1e-8).unwrap();
        for (a, b) in m.weights.iter().zip(&w_true) {
            assert!((a - b).abs() < 1e-3);
        }
        let pred = predict(&m, &x).unwrap();
        for (a, b) in pred.iter().zip(&y) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn single_feature_closed_form() {
        let x = DMatrix::from_column_slice(5, 1, &[0.1, 0.4, 0.3, 0.9, 0.6]);
        let y = [0.2, 0.5, 0.1, 1.0, 0.4];
        let (l1, l2) = (0.05, 0.3);
        let m = fit(&x, &y, l1, l2).unwrap();
        let xm = x.mean();
        let ym = y.iter().sum::<f64>() / 5.0;
        let xr: f64 = x.iter().zip(&y).map(|(a, b)| (a - xm) * (b - ym)).sum();
        let xx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
        let expected = soft_threshold(xr, l1 / 2.0) / (xx + l2);
        assert!((m.weights[0] - expected).abs() < 1e-8);
    }

    #[test]
    fn brute_force_two_features() {
        let x = DMatrix::from_row_slice(6, 2, &[0.1, 0.9, 0.3, 0.2, 0.5, 0.6, 0.7, 0.1, 0.9, 0.5, 0.4, 0.8]);
        let y = [0.3, 0.1, 0.6, 0.5, 0.9, 0.7];
        let (l1, l2) = (0.1, 0.05);
        let m = fit(&x, &y, l1, l2).unwrap();
        let best = model_objective(&m, &x, &y);
        // For fixed w the optimal b is closed-form, so the grid spans w only.
        let ym = y.iter().sum::<f64>() / 6.0;
        let xm: Vec<f64> = (0..2).map(|j| x.column(j).mean()).collect();
        let step = 1e-3;
        let mut lowest = f64::INFINITY;
        for a in -1000..=1000 {
            for c in -1000..=1000 {
                let w = [a as f64 * step, c as f64 * step];
                let b = ym - xm[0] * w[0] - xm[1] * w[1];
                lowest = lowest.min(objective(&x, &y, &w, b, l1, l2));
            }
        }
        assert!(lowest >= best - 1e-6, "{lowest} < {best}");
    }

    #[test]
    fn path_shape() {
        let (x, y) = random_problem(4, 40, 8);
        let path = fit_path(&x, &y, 50, 0.5).unwrap();
        assert_eq!(path.models.len(), 50);
        assert_eq!(path.models[0].active_count, 0);
        assert!(path.models.windows(2).all(|w| w[1].lambda1 < w[0].lambda1));
        let last = path.models.last().unwrap();
        assert!((last.lambda1 / path.lambda_max - PATH_FLOOR).abs() < 1e-12);
        for m in &path.models {
            assert!((m.lambda2 - 0.5 * m.lambda1).abs() <= 1e-15 * m.lambda1);
        }
        let two = fit_path(&x, &y, 2, 0.5).unwrap();
        assert_eq!(two.models.len(), 2);
        assert_eq!(two.models[0].lambda1, path.lambda_max);
        assert!(fit_path(&x, &y, 1, 0.5).is_err());
    }

    #[test]
    fn active_count_mostly_grows_along_path() {
        let (mut steps, mut monotone) = (0, 0);
        for seed in 0..20 {
            let (x, y) = random_problem(100 + seed, 50, 10);
            let path = fit_path(&x, &y, 60, 0.5).unwrap();
            for w in path.models.windows(2) {
                steps += 1;
                monotone += usize::from(w[1].active_count >= w[0].active_count);
            }
        }
        assert!(monotone as f64 >= 0.95 * steps as f64);
    }

    #[test]
    fn predict_examples() {
        let m = ElasticNetModel {
            weights: vec![2.0],
            intercept: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            active_count: 1,
            sweeps: 1,
        };
        assert_eq!(predict(&m, &DMatrix::from_element(1, 1, 3.0)).unwrap(), vec![7.0]);
        assert!(predict(&m, &DMatrix::zeros(1, 2)).is_err());
        let null = ElasticNetModel { weights: vec![0.0, 0.0], intercept: 0.4, active_count: 0, ..m };
        assert_eq!(predict(&null, &DMatrix::from_element(3, 2, 9.0)).unwrap(), vec![0.4; 3]);
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = DMatrix::from_element(3, 1, 1.0);
        x[(1, 0)] = f64::NAN;
        assert!(matches!(fit(&x, &[1.0, 2.0, 3.0], 0.1, 0.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn collinear_columns_converge_quickly() {
        // Noisy copies of two latent signals: plain sweeps stall at the small-λ end.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, p) = (150, 30);
        let x = DMatrix::from_fn(n, p, |i, j| {
            let t = i as f64 / n as f64;
            let base = if j % 2 == 0 { (6.0 * t).sin() } else { t * t };
            base + 0.01 * rng.random::<f64>()
        });
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] + 0.5 * x[(i, 1)]).collect();
        let problem = Problem::new(&x, &y).unwrap();
        let path = problem.fit_path(200, 0.5).unwrap();
        let lmax = problem.lambda_max();
        for m in &path.models {
            assert!(m.sweeps < MAX_SWEEPS);
            assert!(problem.kkt_violation(&m.weights, m.lambda1, m.lambda2) <= KKT_TOLERANCE * (1.0 + lmax));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kkt_and_null_bound(seed in 0u64..10_000, n in 5usize..40, p in 1usize..8, frac in 0.001f64..1.2, ratio in 0.01f64..2.0) {
            let (x, y) = random_problem(seed, n, p);
            let problem = Problem::new(&x, &y).unwrap();
            let l1 = problem.lambda_max() * frac;
            let m = problem.fit(l1, ratio * l1).unwrap();
            prop_assert!(problem.kkt_violation(&m.weights, m.lambda1, m.lambda2) <= 1e-6 * scale(&x, &y));
            let mean = y.iter().sum::<f64>() / n as f64;
            let null = objective(&x, &y, &vec![0.0; p], mean, m.lambda1, m.lambda2);
            prop_assert!(model_objective(&m, &x, &y) <= null + 1e-12);
            prop_assert_eq!(m.active_count, m.weights.iter().filter(|v| **v != 0.0).count());
        }
    }
}
