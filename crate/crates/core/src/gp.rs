//! Zero-mean Gaussian-process regression with sums of squared-exponential kernels.
//!
//! Hyperparameters live in log space and are fitted by maximising the exact
//! log marginal likelihood with L-BFGS and a monotone backtracking line search.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;
pub const DEFAULT_RESTARTS: usize = 5;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;
/// Hyperparameters may move at most this far (in natural log units) from their initial values.
const LOG_BOX: f64 = 7.0;
const LBFGS_MEMORY: usize = 7;

pub fn se_kernel(x: &[f64], x2: &[f64], sigma: f64, ell: f64) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::invalid(format!("input dimensions {} and {}", x.len(), x2.len())));
    }
    if !(sigma > 0.0 && ell > 0.0) {
        return Err(Error::invalid(format!("kernel needs σ > 0 and ℓ > 0, got σ={sigma}, ℓ={ell}")));
    }
    Ok(se_value(squared_distance(x, x2), sigma * sigma, ell))
}

fn se_value(d2: f64, sigma2: f64, ell: f64) -> f64 {
    sigma2 * (-d2 / (2.0 * ell * ell)).exp()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Part of the input vector a kernel component looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSlice {
    Search,
    Outcome,
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// SE(search) + SE(outcome) + SE(joint) + noise.
    SearchAutoregressive,
    /// SE(outcome) + SE(outcome) + noise.
    Autoregressive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeComponent {
    pub slice: InputSlice,
    pub sigma: f64,
    pub ell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Width of the search slice; the outcome slice follows it.
    pub search_dim: usize,
    pub outcome_dim: usize,
    pub components: Vec<SeComponent>,
    pub noise_sigma: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lags: usize, components: Vec<SeComponent>, noise_sigma: f64) -> Result<Self> {
        let (search_dim, slices): (usize, &[InputSlice]) = match kind {
            KernelKind::SearchAutoregressive => (
                lags + 1,
                &[InputSlice::Search, InputSlice::Outcome, InputSlice::Joint],
            ),
            KernelKind::Autoregressive => (0, &[InputSlice::Outcome, InputSlice::Outcome]),
        };
        if components.len() != slices.len() || components.iter().zip(slices).any(|(c, s)| c.slice != *s) {
            return Err(Error::invalid(format!("{kind:?} kernel expects slices {slices:?}")));
        }
        if components.iter().any(|c| !(c.sigma > 0.0 && c.ell > 0.0)) || !(noise_sigma >= 0.0) {
            return Err(Error::invalid("kernel scales must be positive"));
        }
        Ok(Self {
            kind,
            search_dim,
            outcome_dim: lags + 1,
            components,
            noise_sigma,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.search_dim + self.outcome_dim
    }

    fn slice<'a>(&self, x: &'a [f64], slice: InputSlice) -> &'a [f64] {
        match slice {
            InputSlice::Search => &x[..self.search_dim],
            InputSlice::Outcome => &x[self.search_dim..],
            InputSlice::Joint => x,
        }
    }

    /// Covariance without the noise term.
    pub fn covariance(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() || x2.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "kernel expects inputs of length {}, got {} and {}",
                self.input_dim(),
                x.len(),
                x2.len()
            )));
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                let d2 = squared_distance(self.slice(x, c.slice), self.slice(x2, c.slice));
                se_value(d2, c.sigma * c.sigma, c.ell)
            })
            .sum())
    }

    /// Covariance including `σ_n² δ(x, x')`, with δ comparing the inputs themselves.
    pub fn evaluate(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let delta = if x == x2 { self.noise_sigma * self.noise_sigma } else { 0.0 };
        Ok(self.covariance(x, x2)? + delta)
    }

    pub fn prior_variance(&self) -> f64 {
        self.components.iter().map(|c| c.sigma * c.sigma).sum()
    }

    /// `[log σ₁, log ℓ₁, …, log σ_n]`.
    pub fn log_params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .components
            .iter()
            .flat_map(|c| [c.sigma.ln(), c.ell.ln()])
            .collect();
        p.push(self.noise_sigma.ln());
        p
    }

    pub fn with_log_params(&self, p: &[f64]) -> Self {
        let mut spec = self.clone();
        for (k, c) in spec.components.iter_mut().enumerate() {
            c.sigma = p[2 * k].exp();
            c.ell = p[2 * k + 1].exp();
        }
        spec.noise_sigma = p[p.len() - 1].exp();
        spec
    }
}

fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Squared distances between training rows, one matrix per component slice.
struct Distances {
    per_component: Vec<DMatrix<f64>>,
}

impl Distances {
    fn new(spec: &KernelSpec, rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let per_component = spec
            .components
            .iter()
            .map(|c| {
                DMatrix::from_fn(n, n, |i, j| {
                    squared_distance(spec.slice(&rows[i], c.slice), spec.slice(&rows[j], c.slice))
                })
            })
            .collect();
        Self { per_component }
    }
}

/// Gram matrix factorised with the smallest jitter from the schedule that works.
fn factorize(mut k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(ch) = k.clone().cholesky() {
        return Ok((ch, 0.0));
    }
    let n = k.nrows();
    let mut jitter = JITTER_START;
    let mut added = 0.0;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        for i in 0..n {
            k[(i, i)] += jitter - added;
        }
        added = jitter;
        if let Some(ch) = k.clone().cholesky() {
            return Ok((ch, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "Gram matrix not positive definite with jitter up to {JITTER_MAX:e}"
    )))
}

fn gram(spec: &KernelSpec, dist: &Distances, with_noise: bool) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let n = dist.per_component[0].nrows();
    let parts: Vec<DMatrix<f64>> = spec
        .components
        .iter()
        .zip(&dist.per_component)
        .map(|(c, d)| d.map(|d2| se_value(d2, c.sigma * c.sigma, c.ell)))
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for p in &parts {
        k += p;
    }
    if with_noise {
        for i in 0..n {
            k[(i, i)] += spec.noise_sigma * spec.noise_sigma;
        }
    }
    (k, parts)
}

/// Log marginal likelihood and its gradient with respect to the log parameters.
fn lml_and_grad(spec: &KernelSpec, dist: &Distances, y: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
    let n = y.len();
    let (k, parts) = gram(spec, dist, true);
    let (chol, _) = factorize(k)?;
    let alpha = chol.solve(y);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    // W = ααᵀ − K⁻¹; ∂L/∂θ = ½ tr(W ∂K/∂θ).
    let w = &alpha * alpha.transpose() - chol.inverse();
    let mut grad = Vec::with_capacity(2 * parts.len() + 1);
    for ((c, part), d) in spec.components.iter().zip(&parts).zip(&dist.per_component) {
        let mut t_sigma = 0.0;
        let mut t_ell = 0.0;
        let inv_ell2 = 1.0 / (c.ell * c.ell);
        for (idx, &kv) in part.iter().enumerate() {
            let wv = w[idx];
            t_sigma += wv * 2.0 * kv;
            t_ell += wv * kv * d[idx] * inv_ell2;
        }
        grad.push(0.5 * t_sigma);
        grad.push(0.5 * t_ell);
    }
    let noise2 = spec.noise_sigma * spec.noise_sigma;
    grad.push(0.5 * w.diagonal().sum() * 2.0 * noise2);
    Ok((lml, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpFitOptions {
    /// Number of optimiser starts: the data-driven initial point plus random perturbations of it.
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Keeps the noise σ at this value instead of optimising it.
    pub fixed_noise: Option<f64>,
    /// Starting point replacing the data-driven initialisation.
    pub initial: Option<KernelSpec>,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed: 0,
            fixed_noise: None,
            initial: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GpModel {
    pub kernel: KernelSpec,
    pub log_marginal_likelihood: f64,
    pub jitter: f64,
    /// LML after every accepted optimiser step of the winning start.
    pub trace: Vec<f64>,
    train: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Data-driven initial kernel: σ² = var(y), ℓ = median pairwise distance, noise² = 0.1·var(y).
pub fn initial_kernel(kind: KernelKind, lags: usize, x: &DMatrix<f64>, y: &[f64]) -> Result<KernelSpec> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(1e-6);
    let template = KernelSpec::new(
        kind,
        lags,
        match kind {
            KernelKind::SearchAutoregressive => vec![
                SeComponent { slice: InputSlice::Search, sigma: 1.0, ell: 1.0 },
                SeComponent { slice: InputSlice::Outcome, sigma: 1.0, ell: 1.0 },
                SeComponent { slice: InputSlice::Joint, sigma: 1.0, ell: 1.0 },
            ],
            KernelKind::Autoregressive => vec![
                SeComponent { slice: InputSlice::Outcome, sigma: 1.0, ell: 1.0 },
                SeComponent { slice: InputSlice::Outcome, sigma: 1.0, ell: 1.0 },
            ],
        },
        1.0,
    )?;
    if x.ncols() != template.input_dim() {
        return Err(Error::invalid(format!(
            "{kind:?} with {lags} lags needs {} input columns, got {}",
            template.input_dim(),
            x.ncols()
        )));
    }
    let rows = rows_of(x);
    let mut spec = template;
    for k in 0..spec.components.len() {
        let comp = spec.components[k];
        let mut d = Vec::with_capacity(rows.len() * rows.len() / 2);
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                d.push(squared_distance(spec.slice(&rows[i], comp.slice), spec.slice(&rows[j], comp.slice)).sqrt());
            }
        }
        let med = median(d);
        spec.components[k].sigma = var.sqrt();
        spec.components[k].ell = if med > 0.0 { med } else { 1.0 };
    }
    spec.noise_sigma = (0.1 * var).sqrt();
    Ok(spec)
}

struct Objective<'a> {
    base: &'a KernelSpec,
    dist: &'a Distances,
    y: &'a DVector<f64>,
    free: Vec<bool>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Objective<'_> {
    fn eval(&self, p: &[f64]) -> Option<(f64, Vec<f64>)> {
        let spec = self.base.with_log_params(p);
        let (v, mut g) = lml_and_grad(&spec, self.dist, self.y).ok()?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return None;
        }
        for (gi, &f) in g.iter_mut().zip(&self.free) {
            if !f {
                *gi = 0.0;
            }
        }
        Some((v, g))
    }

    fn project(&self, p: &mut [f64]) {
        for ((v, lo), hi) in p.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS ascent with Armijo backtracking; every accepted step increases the objective.
fn maximize(obj: &Objective<'_>, start: Vec<f64>, max_iterations: usize) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let mut p = start;
    obj.project(&mut p);
    let (mut f, mut g) = obj.eval(&p)?;
    let mut trace = vec![f];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    for _ in 0..max_iterations {
        // Two-loop recursion on the negated objective.
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, yv) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(yv, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        if let (Some(s), Some(yv)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, yv), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        // Ascent direction.
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &g) <= 0.0 {
            dir.clone_from(&g);
            s_hist.clear();
            y_hist.clear();
        }
        if s_hist.is_empty() {
            let norm = dot(&dir, &dir).sqrt();
            if norm > 1.0 {
                dir.iter_mut().for_each(|v| *v /= norm);
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            obj.project(&mut cand);
            let moved: Vec<f64> = cand.iter().zip(&p).map(|(a, b)| a - b).collect();
            let predicted = dot(&g, &moved);
            if predicted <= 0.0 {
                break;
            }
            if let Some((fc, gc)) = obj.eval(&cand) {
                if fc >= f + 1e-4 * predicted {
                    accepted = Some((cand, fc, gc, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc, s)) = accepted else { break };
        let yv: Vec<f64> = g.iter().zip(&gc).map(|(a, b)| a - b).collect();
        if dot(&s, &yv) > 1e-12 {
            s_hist.push(s);
            y_hist.push(yv);
            if s_hist.len() > LBFGS_MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let gain = fc - f;
        p = cand;
        f = fc;
        g = gc;
        trace.push(f);
        if gain.abs() <= 1e-9 * (1.0 + f.abs()) {
            break;
        }
    }
    Some((p, f, trace))
}

impl GpModel {
    pub fn fit(kind: KernelKind, lags: usize, x: &DMatrix<f64>, y: &[f64], options: &GpFitOptions) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!("{} input rows, {} targets", x.nrows(), y.len())));
        }
        if y.len() < 2 {
            return Err(Error::InsufficientHistory { needed: 2, available: y.len() });
        }
        if options.restarts == 0 {
            return Err(Error::invalid("at least one optimiser start is required"));
        }
        let mut init = match &options.initial {
            Some(spec) => spec.clone(),
            None => initial_kernel(kind, lags, x, y)?,
        };
        if let Some(noise) = options.fixed_noise {
            init.noise_sigma = noise;
        }
        let rows = rows_of(x);
        let dist = Distances::new(&init, &rows);
        let yv = DVector::from_column_slice(y);
        let p0 = init.log_params();
        let mut free = vec![true; p0.len()];
        if options.fixed_noise.is_some() {
            *free.last_mut().expect("noise parameter") = false;
        }
        let lo: Vec<f64> = p0.iter().zip(&free).map(|(v, f)| if *f { v - LOG_BOX } else { *v }).collect();
        let hi: Vec<f64> = p0.iter().zip(&free).map(|(v, f)| if *f { v + LOG_BOX } else { *v }).collect();
        let obj = Objective { base: &init, dist: &dist, y: &yv, free: free.clone(), lo, hi };

        let mut best: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for restart in 0..options.restarts {
            let start: Vec<f64> = if restart == 0 {
                p0.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_mul(1_000_003).wrapping_add(restart as u64));
                p0.iter()
                    .zip(&free)
                    .map(|(v, f)| if *f { v + rng.random_range(-1.0..1.0) * std::f64::consts::LN_10 } else { *v })
                    .collect()
            };
            if let Some(found) = maximize(&obj, start, options.max_iterations) {
                if best.as_ref().is_none_or(|b| found.1 > b.1) {
                    best = Some(found);
                }
            }
        }
        let (p, lml, trace) = best.ok_or_else(|| {
            Error::Numerical("log marginal likelihood could not be evaluated at any start".into())
        })?;
        let kernel = init.with_log_params(&p);
        let (k, _) = gram(&kernel, &dist, true);
        let (chol, jitter) = factorize(k)?;
        let alpha = chol.solve(&yv);
        Ok(Self {
            kernel,
            log_marginal_likelihood: lml,
            jitter,
            trace,
            train: rows,
            chol,
            alpha,
        })
    }

    /// Builds a model with fixed hyperparameters (no optimisation).
    pub fn with_kernel(kernel: KernelSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if x.nrows() != y.len() || x.ncols() != kernel.input_dim() {
            return Err(Error::invalid("training inputs do not match the kernel or the targets"));
        }
        let rows = rows_of(x);
        let dist = Distances::new(&kernel, &rows);
        let yv = DVector::from_column_slice(y);
        let (lml, _) = lml_and_grad(&kernel, &dist, &yv)?;
        let (k, _) = gram(&kernel, &dist, true);
        let (chol, jitter) = factorize(k)?;
        let alpha = chol.solve(&yv);
        Ok(Self {
            kernel,
            log_marginal_likelihood: lml,
            jitter,
            trace: vec![lml],
            train: rows,
            chol,
            alpha,
        })
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.kernel.input_dim() {
            return Err(Error::invalid(format!(
                "query has {} inputs, model {}",
                x.len(),
                self.kernel.input_dim()
            )));
        }
        let ks = DVector::from_iterator(
            self.train.len(),
            self.train.iter().map(|r| self.kernel.covariance(r, x).expect("dimensions checked")),
        );
        let mean = ks.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let var = (self.kernel.prior_variance() - v.norm_squared()).max(0.0);
        Ok((mean, var))
    }
}

/// Log marginal likelihood and gradient for given hyperparameters.
pub fn log_marginal_likelihood(kernel: &KernelSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let rows = rows_of(x);
    lml_and_grad(kernel, &Distances::new(kernel, &rows), &DVector::from_column_slice(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_design(seed: u64, n: usize, lags: usize, kind: KernelKind) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = match kind {
            KernelKind::SearchAutoregressive => 2 * (lags + 1),
            KernelKind::Autoregressive => lags + 1,
        };
        let x = DMatrix::from_fn(n, dim, |_, _| rng.random::<f64>());
        let y = (0..n).map(|i| (3.0 * x[(i, 0)]).sin() + 0.5 * x[(i, dim - 1)] + 0.05 * rng.random::<f64>()).collect();
        (x, y)
    }

    fn sarf(lags: usize, s: [f64; 7]) -> KernelSpec {
        KernelSpec::new(
            KernelKind::SearchAutoregressive,
            lags,
            vec![
                SeComponent { slice: InputSlice::Search, sigma: s[0], ell: s[1] },
                SeComponent { slice: InputSlice::Outcome, sigma: s[2], ell: s[3] },
                SeComponent { slice: InputSlice::Joint, sigma: s[4], ell: s[5] },
            ],
            s[6],
        )
        .unwrap()
    }

    #[test]
    fn se_examples() {
        assert_eq!(se_kernel(&[0.3, 0.1], &[0.3, 0.1], 2.0, 0.7).unwrap(), 4.0);
        let ell = 0.8;
        let v = se_kernel(&[0.0], &[ell * 2f64.sqrt()], 1.0, ell).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!(se_kernel(&[0.0], &[1e6], 1.0, 1.0).unwrap() < 1e-300);
        assert!(se_kernel(&[0.0], &[1.0], 0.0, 1.0).is_err());
        assert!(se_kernel(&[0.0], &[1.0, 2.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn composite_kernels_at_zero_distance() {
        let k = sarf(1, [1.0, 0.5, 2.0, 0.7, 0.5, 1.1, 0.3]);
        let x = [0.1, 0.2, 0.3, 0.4];
        let v = k.evaluate(&x, &x).unwrap();
        assert!((v - (1.0 + 4.0 + 0.25 + 0.09)).abs() < 1e-14);
        let x2 = [0.5, 0.2, 0.9, 0.4];
        assert_eq!(k.evaluate(&x, &x2).unwrap(), k.evaluate(&x2, &x).unwrap());
        assert!(k.evaluate(&x, &[0.1]).is_err());

        let ar = KernelSpec::new(
            KernelKind::Autoregressive,
            2,
            vec![
                SeComponent { slice: InputSlice::Outcome, sigma: 1.5, ell: 0.5 },
                SeComponent { slice: InputSlice::Outcome, sigma: 0.5, ell: 3.0 },
            ],
            0.2,
        )
        .unwrap();
        let y = [0.3, 0.2, 0.1];
        assert!((ar.evaluate(&y, &y).unwrap() - (2.25 + 0.25 + 0.04)).abs() < 1e-14);
        let y2 = [0.0, 0.7, 0.1];
        assert_eq!(ar.evaluate(&y, &y2).unwrap(), ar.evaluate(&y2, &y).unwrap());
    }

    #[test]
    fn gram_matrices_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let k = sarf(2, [1.0, 0.3, 0.8, 0.6, 0.5, 1.2, 1e-9]);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let g = DMatrix::from_fn(20, 20, |i, j| k.covariance(&pts[i], &pts[j]).unwrap());
        assert_eq!(g, g.transpose());
        let min = g.symmetric_eigenvalues().min();
        assert!(min >= -1e-8, "{min}");
        let x = DMatrix::from_fn(20, 6, |i, j| pts[i][j]);
        assert!(factorize(gram(&k, &Distances::new(&k, &rows_of(&x)), true).0).is_ok());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..20 {
            let kind = if trial % 2 == 0 { KernelKind::SearchAutoregressive } else { KernelKind::Autoregressive };
            let (x, y) = random_design(trial, 25, 2, kind);
            let base = initial_kernel(kind, 2, &x, &y).unwrap();
            let p: Vec<f64> = base.log_params().iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
            let spec = base.with_log_params(&p);
            let (_, grad) = log_marginal_likelihood(&spec, &x, &y).unwrap();
            for k in 0..p.len() {
                let h = 1e-5;
                let mut up = p.clone();
                up[k] += h;
                let mut dn = p.clone();
                dn[k] -= h;
                let fu = log_marginal_likelihood(&base.with_log_params(&up), &x, &y).unwrap().0;
                let fd = log_marginal_likelihood(&base.with_log_params(&dn), &x, &y).unwrap().0;
                let fd_grad = (fu - fd) / (2.0 * h);
                let err = (grad[k] - fd_grad).abs() / grad[k].abs().max(fd_grad.abs()).max(1e-3);
                assert!(err < 1e-4, "trial {trial} param {k}: {} vs {fd_grad}", grad[k]);
            }
        }
    }

    #[test]
    fn noiseless_model_interpolates() {
        let (x, y) = random_design(3, 30, 1, KernelKind::SearchAutoregressive);
        let opts = GpFitOptions { fixed_noise: Some(1e-6), restarts: 2, ..Default::default() };
        let m = GpModel::fit(KernelKind::SearchAutoregressive, 1, &x, &y, &opts).unwrap();
        for (i, row) in x.row_iter().enumerate() {
            let r: Vec<f64> = row.iter().copied().collect();
            let (mean, var) = m.predict(&r).unwrap();
            assert!((mean - y[i]).abs() < 1e-6, "{mean} vs {}", y[i]);
            assert!(var >= 0.0);
        }
    }

    #[test]
    fn optimiser_trace_is_monotone_and_improves() {
        let (x, y) = random_design(5, 40, 2, KernelKind::Autoregressive);
        let m = GpModel::fit(KernelKind::Autoregressive, 2, &x, &y, &GpFitOptions::default()).unwrap();
        assert!(m.trace.windows(2).all(|w| w[1] >= w[0]));
        let init = initial_kernel(KernelKind::Autoregressive, 2, &x, &y).unwrap();
        let (start, _) = log_marginal_likelihood(&init, &x, &y).unwrap();
        assert!(m.log_marginal_likelihood >= start);
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let (x, y) = random_design(6, 20, 1, KernelKind::Autoregressive);
        let m = GpModel::fit(KernelKind::Autoregressive, 1, &x, &y, &GpFitOptions { restarts: 1, ..Default::default() }).unwrap();
        let (mean, var) = m.predict(&[1e4, -1e4]).unwrap();
        assert!(mean.abs() < 1e-9);
        assert!((var - m.kernel.prior_variance()).abs() < 1e-9);
        assert!(m.predict(&[0.0]).is_err());
    }

    #[test]
    fn variance_never_negative() {
        let (x, y) = random_design(8, 30, 2, KernelKind::SearchAutoregressive);
        let m = GpModel::fit(KernelKind::SearchAutoregressive, 2, &x, &y, &GpFitOptions { restarts: 2, ..Default::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let q: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..1.5)).collect();
            assert!(m.predict(&q).unwrap().1 >= 0.0);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let (x, y) = random_design(9, 25, 1, KernelKind::SearchAutoregressive);
        let opts = GpFitOptions { seed: 4, ..Default::default() };
        let a = GpModel::fit(KernelKind::SearchAutoregressive, 1, &x, &y, &opts).unwrap();
        let b = GpModel::fit(KernelKind::SearchAutoregressive, 1, &x, &y, &opts).unwrap();
        assert_eq!(a.kernel, b.kernel);
        assert_eq!(a.log_marginal_likelihood, b.log_marginal_likelihood);
    }
}
