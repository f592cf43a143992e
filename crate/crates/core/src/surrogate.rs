//! Per-objective Gaussian-process regression.
//!
//! One GP is fitted per objective on inputs scaled to the unit cube and
//! targets standardized to zero mean / unit variance. The kernel is
//! Matérn-5/2 with per-dimension lengthscales; hyperparameters (lengthscales,
//! signal variance, observation noise) are found by multi-start gradient
//! ascent on the log marginal likelihood in log-hyperparameter space.
//! Fitted models are immutable and cheap to query, so many candidates can be
//! scored concurrently.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;

/// Log-uniform hyperparameter search ranges.
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const NOISE_VARIANCE_BOUNDS: (f64, f64) = (1e-6, 1.0);

const BASE_JITTER: f64 = 1e-6;
const MAX_JITTER: f64 = 1e-3;
const MULTI_STARTS: usize = 8;
const MAX_ASCENT_ITERS: usize = 200;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Posterior mean and variance at one query point, in the target's original
/// (de-standardized) units. Variance includes observation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPrediction {
    pub mean: f64,
    pub variance: f64,
}

/// A fitted Gaussian-process surrogate for one objective.
///
/// Holds the training data, the log hyperparameters
/// `[ln l_1 .. ln l_d, ln sigma_f^2, ln sigma_n^2]`, and the cached Cholesky
/// factor of `K + sigma_n^2 I + jitter I`.
#[derive(Debug, Clone)]
pub struct GpModel {
    n: usize,
    d: usize,
    x: Vec<f64>, // n x d row-major, scaled to [0,1]
    y: Vec<f64>, // standardized targets
    y_mean: f64,
    y_scale: f64,
    log_hyper: Vec<f64>,
    chol: Vec<f64>,  // lower-triangular factor, n x n row-major
    alpha: Vec<f64>, // (K + noise)^-1 y
    // Pairwise scaled distances and exp(-sqrt5 r) under the current
    // lengthscales, cached for the gradient.
    r_cache: Vec<f64>,
    e_cache: Vec<f64>,
    jitter: f64,
}

impl GpModel {
    /// Builds a model at fixed hyperparameters (no fitting): validates the
    /// data, standardizes targets, and caches the factorization.
    pub fn with_hyperparameters(x: &[Vec<f64>], y: &[f64], log_hyper: Vec<f64>) -> Result<Self> {
        let (n, d, flat) = validate_inputs(x, y)?;
        if log_hyper.len() != d + 2 {
            return Err(Error::Argument(format!(
                "{} hyperparameters for input dimension {d} (need {})",
                log_hyper.len(),
                d + 2
            )));
        }
        let (y_std, y_mean, y_scale) = standardize(y);
        let mut model = Self {
            n,
            d,
            x: flat,
            y: y_std,
            y_mean,
            y_scale,
            log_hyper,
            chol: Vec::new(),
            alpha: Vec::new(),
            r_cache: Vec::new(),
            e_cache: Vec::new(),
            jitter: BASE_JITTER,
        };
        model.refactorize()?;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn training_size(&self) -> usize {
        self.n
    }

    pub fn log_hyperparameters(&self) -> &[f64] {
        &self.log_hyper
    }

    pub fn signal_variance(&self) -> f64 {
        math::exp(self.log_hyper[self.d])
    }

    pub fn noise_variance(&self) -> f64 {
        math::exp(self.log_hyper[self.d + 1])
    }

    pub fn target_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn lengthscale(&self, k: usize) -> f64 {
        math::exp(self.log_hyper[k])
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Scaled distance between two points under the current lengthscales.
    fn scaled_r(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.d {
            let t = (a[k] - b[k]) / self.lengthscale(k);
            s += t * t;
        }
        math::sqrt(s)
    }

    fn matern52(r: f64) -> f64 {
        let sr = SQRT5 * r;
        (1.0 + sr + sr * sr / 3.0) * math::exp(-sr)
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_variance() * Self::matern52(self.scaled_r(a, b))
    }

    /// Rebuilds the Cholesky factor and alpha, escalating jitter from 1e-6
    /// to 1e-3 until the matrix is positive definite.
    fn refactorize(&mut self) -> Result<()> {
        let n = self.n;
        let noise = self.noise_variance();
        let sf2 = self.signal_variance();
        let mut base = alloc::vec![0.0f64; n * n];
        let mut r_cache = alloc::vec![0.0f64; n * n];
        let mut e_cache = alloc::vec![1.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let r = self.scaled_r(self.row(i), self.row(j));
                let e = math::exp(-SQRT5 * r);
                let sr = SQRT5 * r;
                let v = sf2 * (1.0 + sr + sr * sr / 3.0) * e;
                base[i * n + j] = v;
                base[j * n + i] = v;
                r_cache[i * n + j] = r;
                r_cache[j * n + i] = r;
                e_cache[i * n + j] = e;
                e_cache[j * n + i] = e;
            }
        }
        self.r_cache = r_cache;
        self.e_cache = e_cache;
        let mut jitter = BASE_JITTER;
        loop {
            let mut k = base.clone();
            for i in 0..n {
                k[i * n + i] += noise + jitter;
            }
            if cholesky_in_place(&mut k, n).is_ok() {
                let mut alpha = self.y.clone();
                solve_lower(&k, n, &mut alpha);
                solve_lower_transpose(&k, n, &mut alpha);
                self.chol = k;
                self.alpha = alpha;
                self.jitter = jitter;
                return Ok(());
            }
            jitter *= 10.0;
            if jitter > MAX_JITTER * (1.0 + 1e-12) {
                return Err(Error::Numerical(format!(
                    "kernel matrix not positive definite after jitter escalation to {MAX_JITTER}"
                )));
            }
        }
    }

    /// Log marginal likelihood of the training data and its analytic
    /// gradient with respect to the log hyperparameters.
    pub fn log_marginal_likelihood(&self) -> (f64, Vec<f64>) {
        let n = self.n;
        let d = self.d;
        let value = self.lml_value();

        // A = alpha alpha^T - K^{-1}; gradient_h = 0.5 tr(A dK/dtheta_h).
        let mut kinv = alloc::vec![0.0f64; n * n];
        for c in 0..n {
            let mut e = alloc::vec![0.0f64; n];
            e[c] = 1.0;
            solve_lower(&self.chol, n, &mut e);
            solve_lower_transpose(&self.chol, n, &mut e);
            for r in 0..n {
                kinv[r * n + c] = e[r];
            }
        }

        let sf2 = self.signal_variance();
        let sn2 = self.noise_variance();
        let inv_ls: Vec<f64> = (0..d).map(|k| 1.0 / self.lengthscale(k)).collect();
        let mut grad = alloc::vec![0.0f64; d + 2];
        // A and dK/dtheta are symmetric: sum j <= i, doubling off-diagonals.
        for i in 0..n {
            for j in 0..=i {
                let w = if i == j { 0.5 } else { 1.0 };
                let a_ij = self.alpha[i] * self.alpha[j] - kinv[i * n + j];
                let (xi, xj) = (self.row(i), self.row(j));
                let r = self.r_cache[i * n + j];
                let e = self.e_cache[i * n + j];
                let sr = SQRT5 * r;
                // d k / d ln l_k = sf2 * (5/3)(1 + sqrt5 r) e^{-sqrt5 r} * d_k^2 / l_k^2
                let common = w * a_ij * sf2 * (5.0 / 3.0) * (1.0 + sr) * e;
                for k in 0..d {
                    let diff = (xi[k] - xj[k]) * inv_ls[k];
                    grad[k] += common * diff * diff;
                }
                grad[d] += w * a_ij * sf2 * (1.0 + sr + sr * sr / 3.0) * e;
                if i == j {
                    grad[d + 1] += w * a_ij * sn2;
                }
            }
        }
        (value, grad)
    }

    fn lml_value(&self) -> f64 {
        let n = self.n;
        let mut fit = 0.0;
        for i in 0..n {
            fit += self.y[i] * self.alpha[i];
        }
        let mut logdet = 0.0;
        for i in 0..n {
            logdet += math::ln(self.chol[i * n + i]);
        }
        -0.5 * fit - logdet - 0.5 * n as f64 * math::ln(2.0 * core::f64::consts::PI)
    }

    /// Posterior predictive mean and variance at `x_star` (de-standardized;
    /// variance includes observation noise and is clamped at zero).
    pub fn posterior(&self, x_star: &[f64]) -> Result<PosteriorPrediction> {
        if x_star.len() != self.d {
            return Err(Error::Argument(format!(
                "query dimension {} vs model dimension {}",
                x_star.len(),
                self.d
            )));
        }
        if x_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite query point".into()));
        }
        let mut k_star = alloc::vec![0.0f64; self.n];
        for i in 0..self.n {
            k_star[i] = self.kernel(self.row(i), x_star);
        }
        let mut mean = 0.0;
        for i in 0..self.n {
            mean += k_star[i] * self.alpha[i];
        }
        let mut v = k_star;
        solve_lower(&self.chol, self.n, &mut v);
        let mut explained = 0.0;
        for t in &v {
            explained += t * t;
        }
        let var = (self.signal_variance() + self.noise_variance() - explained).max(0.0);
        Ok(PosteriorPrediction {
            mean: self.y_mean + self.y_scale * mean,
            variance: self.y_scale * self.y_scale * var,
        })
    }

    /// Joint draws from the q-point predictive Gaussian, de-standardized.
    /// Returns `n_samples` rows of `q` values; deterministic per rng state.
    pub fn sample_posterior<R: Rng + ?Sized>(
        &self,
        x_stars: &[Vec<f64>],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let q = x_stars.len();
        if q == 0 || n_samples == 0 {
            return Err(Error::Argument("need q >= 1 and n_samples >= 1".into()));
        }
        for x in x_stars {
            if x.len() != self.d {
                return Err(Error::Argument(format!(
                    "query dimension {} vs model dimension {}",
                    x.len(),
                    self.d
                )));
            }
        }
        // v_a = L^{-1} k*_a per query point; cov_ab = k(a,b) - v_a . v_b.
        let mut means = alloc::vec![0.0f64; q];
        let mut vs = alloc::vec![0.0f64; q * self.n];
        for (a, xs) in x_stars.iter().enumerate() {
            let mut k_star = alloc::vec![0.0f64; self.n];
            for i in 0..self.n {
                k_star[i] = self.kernel(self.row(i), xs);
            }
            for i in 0..self.n {
                means[a] += k_star[i] * self.alpha[i];
            }
            solve_lower(&self.chol, self.n, &mut k_star);
            vs[a * self.n..(a + 1) * self.n].copy_from_slice(&k_star);
        }
        let noise = self.noise_variance();
        let mut base = alloc::vec![0.0f64; q * q];
        for a in 0..q {
            for b in 0..=a {
                let mut dot = 0.0;
                for i in 0..self.n {
                    dot += vs[a * self.n + i] * vs[b * self.n + i];
                }
                let mut c = self.kernel(&x_stars[a], &x_stars[b]) - dot;
                if a == b {
                    c += noise;
                }
                base[a * q + b] = c;
                base[b * q + a] = c;
            }
        }
        let mut jitter = 1e-9;
        let chol = loop {
            let mut c = base.clone();
            for a in 0..q {
                c[a * q + a] += jitter;
            }
            if cholesky_in_place(&mut c, q).is_ok() {
                break c;
            }
            jitter *= 10.0;
            if jitter > MAX_JITTER * (1.0 + 1e-12) {
                return Err(Error::Numerical(
                    "predictive covariance not positive definite after jitter escalation".into(),
                ));
            }
        };

        let mut out = alloc::vec![0.0f64; n_samples * q];
        let mut z = alloc::vec![0.0f64; q];
        for t in 0..n_samples {
            for zv in z.iter_mut() {
                *zv = rng.sample(StandardNormal);
            }
            for a in 0..q {
                let mut s = means[a];
                for b in 0..=a {
                    s += chol[a * q + b] * z[b];
                }
                out[t * q + a] = self.y_mean + self.y_scale * s;
            }
        }
        Ok(out)
    }
}

fn validate_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<(usize, usize, Vec<f64>)> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Argument(format!("{n} inputs vs {} targets", y.len())));
    }
    if n < 2 {
        return Err(Error::Argument("GP fitting needs at least 2 points".into()));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::Argument("inputs need at least one dimension".into()));
    }
    let mut flat = Vec::with_capacity(n * d);
    for row in x {
        if row.len() != d {
            return Err(Error::Argument("ragged input rows".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite input value".into()));
        }
        flat.extend_from_slice(row);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite target value".into()));
    }
    Ok((n, d, flat))
}

fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = math::sqrt(var);
    if scale < 1e-12 {
        (alloc::vec![0.0; y.len()], mean, 1.0)
    } else {
        (y.iter().map(|v| (v - mean) / scale).collect(), mean, scale)
    }
}

/// Fits hyperparameters by multi-start projected gradient ascent on the log
/// marginal likelihood (8 starts, up to 200 iterations each, adaptive step).
/// Deterministic given `(x, y, seed)`. All-constant targets return a
/// prior-mean model with the signal variance at its floor.
pub fn fit_gp(x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<GpModel> {
    let (_, d, _) = validate_inputs(x, y)?;
    let constant_targets = y
        .iter()
        .all(|v| math::abs(v - y[0]) < 1e-12 * (1.0 + math::abs(y[0])));
    if constant_targets {
        let mut hyper = alloc::vec![0.0; d + 2];
        hyper[d] = math::ln(SIGNAL_VARIANCE_BOUNDS.0);
        hyper[d + 1] = math::ln(NOISE_VARIANCE_BOUNDS.0);
        return GpModel::with_hyperparameters(x, y, hyper);
    }

    let lo = log_bounds_lo(d);
    let hi = log_bounds_hi(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in 0..MULTI_STARTS {
        let mut theta = if start == 0 {
            // Heuristic start: moderate lengthscales, unit signal variance,
            // small noise.
            let mut t = alloc::vec![math::ln(0.5); d + 2];
            t[d] = 0.0;
            t[d + 1] = math::ln(1e-2);
            t
        } else {
            (0..d + 2)
                .map(|k| lo[k] + rng.random::<f64>() * (hi[k] - lo[k]))
                .collect()
        };
        clip(&mut theta, &lo, &hi);

        let mut model = match GpModel::with_hyperparameters(x, y, theta.clone()) {
            Ok(m) => m,
            Err(_) => continue,
        };
        let (mut f, mut g) = model.log_marginal_likelihood();
        let mut step = 0.25;
        let mut stall = 0u32;
        for _ in 0..MAX_ASCENT_ITERS {
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
            if gmax < 1e-6 || step < 1e-8 || stall >= 12 {
                break;
            }
            let mut cand = theta.clone();
            for k in 0..cand.len() {
                cand[k] += step * g[k];
            }
            clip(&mut cand, &lo, &hi);
            match GpModel::with_hyperparameters(x, y, cand.clone()) {
                Ok(m) if m.lml_value() > f => {
                    if m.lml_value() - f < 1e-7 {
                        stall += 1;
                    } else {
                        stall = 0;
                    }
                    theta = cand;
                    model = m;
                    let (nf, ng) = model.log_marginal_likelihood();
                    f = nf;
                    g = ng;
                    step *= 1.2;
                }
                _ => {
                    step *= 0.5;
                    stall += 1;
                }
            }
        }
        if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
            best = Some((f, theta));
        }
    }
    let (_, theta) =
        best.ok_or_else(|| Error::Numerical("every fitting start failed to factorize".into()))?;
    GpModel::with_hyperparameters(x, y, theta)
}

fn log_bounds_lo(d: usize) -> Vec<f64> {
    let mut lo = alloc::vec![math::ln(LENGTHSCALE_BOUNDS.0); d + 2];
    lo[d] = math::ln(SIGNAL_VARIANCE_BOUNDS.0);
    lo[d + 1] = math::ln(NOISE_VARIANCE_BOUNDS.0);
    lo
}

fn log_bounds_hi(d: usize) -> Vec<f64> {
    let mut hi = alloc::vec![math::ln(LENGTHSCALE_BOUNDS.1); d + 2];
    hi[d] = math::ln(SIGNAL_VARIANCE_BOUNDS.1);
    hi[d + 1] = math::ln(NOISE_VARIANCE_BOUNDS.1);
    hi
}

fn clip(theta: &mut [f64], lo: &[f64], hi: &[f64]) {
    for k in 0..theta.len() {
        theta[k] = theta[k].max(lo[k]).min(hi[k]);
    }
}

/// Fisher information proxy: the mean over objectives of
/// `1 / (posterior variance + 1e-9)`. Strictly positive and strictly
/// decreasing in each per-objective variance; low values mark regions where
/// the surrogates are least certain.
pub fn fisher_information(gps: &[GpModel], x: &[f64]) -> Result<f64> {
    if gps.is_empty() {
        return Err(Error::Argument("fisher information needs at least one GP".into()));
    }
    let mut acc = 0.0;
    for gp in gps {
        let p = gp.posterior(x)?;
        acc += 1.0 / (p.variance + 1e-9);
    }
    Ok(acc / gps.len() as f64)
}

/// In-place Cholesky factorization (lower triangle); errors if the matrix is
/// not positive definite.
fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::Numerical("matrix not positive definite".into()));
        }
        let ljj = math::sqrt(diag);
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
        for k in (j + 1)..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L x = b` in place.
fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place.
fn solve_lower_transpose(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}
