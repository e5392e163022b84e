//! Gaussian signal detection models fitted to rating counts.
//!
//! Noise evidence is standard normal; signal evidence is `N(μ, σ_s²)`.
//! With ordered criteria `c_1 < … < c_{K−1}` (and `c_0 = −∞`, `c_K = +∞`)
//! the probability of landing in rating level `k` is
//!
//! ```text
//! noise:  Φ(c_k) − Φ(c_{k−1})
//! signal: Φ((c_k − μ)/σ_s) − Φ((c_{k−1} − μ)/σ_s)
//! ```
//!
//! and the multinomial log-likelihood of the per-level counts is maximised
//! with a bounded quasi-Newton search. Criteria are parameterised as the
//! first criterion plus log increments so they stay ordered. The search
//! starts from the z-ROC regression, adds lognormal perturbation restarts,
//! and finishes the best candidate with a few Newton steps on a
//! finite-difference Hessian that also yields Wald standard errors.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdtError};
use crate::normal;
use crate::optim::{self, Bounds, Objective};
use crate::rng;
use crate::roc::{self, Correction, RatingRoc};

pub const MU_BOUNDS: (f64, f64) = (-10.0, 10.0);
pub const SIGMA_BOUNDS: (f64, f64) = (0.1, 10.0);
const FIRST_CRITERION_BOUNDS: (f64, f64) = (-40.0, 40.0);
const LOG_INCREMENT_BOUNDS: (f64, f64) = (-25.0, 4.0);
const MIN_INIT_INCREMENT: f64 = 1e-3;
const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdtModel {
    Uvsd,
    Evsd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UvsdParams {
    /// Signal mean (noise mean is 0).
    pub mu: f64,
    /// Signal standard deviation (noise SD is 1).
    pub sigma_s: f64,
    /// Strictly ascending criteria, one fewer than the number of levels.
    pub criteria: Vec<f64>,
}

impl UvsdParams {
    pub fn new(mu: f64, sigma_s: f64, criteria: Vec<f64>) -> Result<Self> {
        if !(sigma_s > 0.0 && sigma_s.is_finite()) || !mu.is_finite() {
            return Err(SdtError::Config(format!(
                "invalid model parameters mu={mu}, sigma_s={sigma_s}"
            )));
        }
        if criteria.windows(2).any(|w| w[0] >= w[1]) || criteria.iter().any(|c| !c.is_finite()) {
            return Err(SdtError::Config(
                "criteria must be finite and strictly ascending".into(),
            ));
        }
        Ok(Self { mu, sigma_s, criteria })
    }

    /// Variance ratio `s = σ_noise / σ_signal`, the z-ROC slope.
    pub fn s(&self) -> f64 {
        1.0 / self.sigma_s
    }

    pub fn d_a(&self) -> f64 {
        self.mu * (2.0 / (1.0 + self.sigma_s * self.sigma_s)).sqrt()
    }

    /// Area under the model ROC, `Φ(d_a / √2)`.
    pub fn auc(&self) -> f64 {
        normal::cdf(self.d_a() / std::f64::consts::SQRT_2)
    }

    /// Model-implied `(far, hr)` at a criterion location.
    pub fn operating_point(&self, criterion: f64) -> (f64, f64) {
        (
            normal::cdf(-criterion),
            normal::cdf((self.mu - criterion) / self.sigma_s),
        )
    }

    /// Per-level probabilities `(noise, signal)`, lowest level first.
    pub fn level_probabilities(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.criteria.len() + 1;
        let mut noise = Vec::with_capacity(k);
        let mut signal = Vec::with_capacity(k);
        for level in 0..k {
            let lo = if level == 0 {
                f64::NEG_INFINITY
            } else {
                self.criteria[level - 1]
            };
            let hi = if level == k - 1 {
                f64::INFINITY
            } else {
                self.criteria[level]
            };
            noise.push(interval_prob(lo, hi));
            signal.push(interval_prob(
                (lo - self.mu) / self.sigma_s,
                (hi - self.mu) / self.sigma_s,
            ));
        }
        (noise, signal)
    }
}

/// `Φ(b) − Φ(a)` evaluated on whichever tail keeps precision.
fn interval_prob(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        normal::cdf(-a) - normal::cdf(-b)
    } else {
        normal::cdf(b) - normal::cdf(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub mu: f64,
    /// Absent for EVSD, where σ_s is fixed.
    pub sigma_s: Option<f64>,
    pub d_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub index: usize,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UvsdFit {
    pub model: SdtModel,
    pub params: UvsdParams,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub d_a: f64,
    pub auc_analytic: f64,
    pub converged: bool,
    pub n_restarts_used: usize,
    pub n_parameters: usize,
    pub n_trials: u64,
    /// Log-likelihood at the z-ROC initialisation.
    pub init_log_likelihood: f64,
    /// Max |∂ log L / ∂θ| at the returned optimum (free coordinates only).
    pub gradient_max_abs: f64,
    pub standard_errors: Option<StandardErrors>,
    pub restarts: Vec<RestartRecord>,
    /// Per-level counts the model was fitted to (empty bins removed).
    pub signal_counts: Vec<u64>,
    pub noise_counts: Vec<u64>,
}

impl UvsdFit {
    /// Wald interval `estimate ± z·se` for d_a.
    pub fn d_a_wald_ci(&self, level: f64) -> Option<(f64, f64)> {
        let se = self.standard_errors.as_ref()?.d_a;
        let z = normal::quantile(0.5 + level / 2.0);
        Some((self.d_a - z * se, self.d_a + z * se))
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub restarts: usize,
    /// SD of the lognormal multiplicative restart perturbation.
    pub perturbation_sd: f64,
    pub seed: u64,
    pub optimizer: optim::Options,
    /// Newton refinement steps after the quasi-Newton search.
    pub polish_steps: usize,
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            perturbation_sd: 0.2,
            seed: 0x5d7_f17,
            optimizer: optim::Options::default(),
            polish_steps: 8,
            standard_errors: true,
        }
    }
}

/// Negative log-likelihood over the reparameterised vector
/// `[μ, (σ_s), c_1, ln Δc_2, …]`.
struct NegLogLik<'a> {
    signal: &'a [u64],
    noise: &'a [u64],
    free_sigma: bool,
}

impl NegLogLik<'_> {
    fn n_levels(&self) -> usize {
        self.signal.len()
    }

    fn offset(&self) -> usize {
        if self.free_sigma {
            2
        } else {
            1
        }
    }

    fn unpack(&self, theta: &[f64]) -> UvsdParams {
        let off = self.offset();
        let sigma = if self.free_sigma { theta[1] } else { 1.0 };
        let mut criteria = Vec::with_capacity(self.n_levels() - 1);
        let mut c = theta[off];
        criteria.push(c);
        for eta in &theta[off + 1..] {
            c += eta.exp();
            criteria.push(c);
        }
        UvsdParams {
            mu: theta[0],
            sigma_s: sigma,
            criteria,
        }
    }

    fn pack(&self, p: &UvsdParams) -> Vec<f64> {
        let mut theta = vec![p.mu];
        if self.free_sigma {
            theta.push(p.sigma_s);
        }
        theta.push(p.criteria[0]);
        for w in p.criteria.windows(2) {
            theta.push((w[1] - w[0]).max(f64::MIN_POSITIVE).ln());
        }
        theta
    }

    fn bounds(&self) -> Bounds {
        let n = self.offset() + self.n_levels() - 1;
        let mut lower = vec![LOG_INCREMENT_BOUNDS.0; n];
        let mut upper = vec![LOG_INCREMENT_BOUNDS.1; n];
        lower[0] = MU_BOUNDS.0;
        upper[0] = MU_BOUNDS.1;
        if self.free_sigma {
            lower[1] = SIGMA_BOUNDS.0;
            upper[1] = SIGMA_BOUNDS.1;
        }
        let off = self.offset();
        lower[off] = FIRST_CRITERION_BOUNDS.0;
        upper[off] = FIRST_CRITERION_BOUNDS.1;
        Bounds { lower, upper }
    }

    fn log_likelihood(&self, p: &UvsdParams) -> f64 {
        let (pn, ps) = p.level_probabilities();
        let mut ll = 0.0;
        for k in 0..self.n_levels() {
            if self.noise[k] > 0 {
                ll += self.noise[k] as f64 * pn[k].max(PROB_FLOOR).ln();
            }
            if self.signal[k] > 0 {
                ll += self.signal[k] as f64 * ps[k].max(PROB_FLOOR).ln();
            }
        }
        ll
    }
}

impl Objective for NegLogLik<'_> {
    fn eval(&mut self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.unpack(theta);
        let k = self.n_levels();
        let (mu, sigma) = (p.mu, p.sigma_s);

        // Boundary values at c_0 = −∞ … c_K = +∞ for noise (x) and signal (z).
        let crit = |j: usize| -> f64 {
            if j == 0 {
                f64::NEG_INFINITY
            } else if j == k {
                f64::INFINITY
            } else {
                p.criteria[j - 1]
            }
        };
        let phi = |x: f64| if x.is_finite() { normal::pdf(x) } else { 0.0 };
        let zphi = |x: f64| if x.is_finite() { x * normal::pdf(x) } else { 0.0 };

        let mut nll = 0.0;
        let mut g_mu = 0.0;
        let mut g_sigma = 0.0;
        let mut g_c = vec![0.0; k - 1];
        for level in 0..k {
            let (lo, hi) = (crit(level), crit(level + 1));
            if self.noise[level] > 0 {
                let n = self.noise[level] as f64;
                let prob = interval_prob(lo, hi).max(PROB_FLOOR);
                nll -= n * prob.ln();
                let w = n / prob;
                if level + 1 < k {
                    g_c[level] -= w * phi(hi);
                }
                if level > 0 {
                    g_c[level - 1] += w * phi(lo);
                }
            }
            if self.signal[level] > 0 {
                let n = self.signal[level] as f64;
                let (zl, zh) = ((lo - mu) / sigma, (hi - mu) / sigma);
                let prob = interval_prob(zl, zh).max(PROB_FLOOR);
                nll -= n * prob.ln();
                let w = n / prob;
                if level + 1 < k {
                    g_c[level] -= w * phi(zh) / sigma;
                }
                if level > 0 {
                    g_c[level - 1] += w * phi(zl) / sigma;
                }
                g_mu += w * (phi(zh) - phi(zl)) / sigma;
                g_sigma += w * (zphi(zh) - zphi(zl)) / sigma;
            }
        }

        grad[0] = g_mu;
        if self.free_sigma {
            grad[1] = g_sigma;
        }
        // Chain rule: c_j = c_1 + Σ_{i≤j} exp(η_i).
        let off = self.offset();
        let mut tail = 0.0;
        for j in (0..k - 1).rev() {
            tail += g_c[j];
            if j == 0 {
                grad[off] = tail;
            } else {
                grad[off + j] = tail * theta[off + j].exp();
            }
        }
        nll
    }
}

/// Per-level counts with all-empty bins removed; they carry no likelihood
/// information and would leave their criteria unidentified.
fn occupied_levels(roc: &RatingRoc) -> (Vec<u64>, Vec<u64>) {
    roc.signal_counts
        .iter()
        .zip(&roc.noise_counts)
        .filter(|(s, n)| **s + **n > 0)
        .map(|(s, n)| (*s, *n))
        .unzip()
}

fn initial_params(signal: &[u64], noise: &[u64], free_sigma: bool) -> UvsdParams {
    let k = signal.len();
    let edges: Vec<f64> = (0..=k).map(|e| e as f64).collect();
    let roc = roc::roc_from_counts(edges, signal.to_vec(), noise.to_vec(), Correction::HautusLoglinear)
        .expect("caller checked both classes are present");

    let (mut mu, mut sigma) = (1.0, 1.0);
    if let Ok(z) = roc::zroc_fit(&roc) {
        if z.slope > 0.0 && z.slope.is_finite() {
            sigma = 1.0 / z.slope;
        }
        sigma = sigma.clamp(SIGMA_BOUNDS.0, SIGMA_BOUNDS.1);
        mu = z.intercept * sigma;
    }
    if !free_sigma {
        sigma = 1.0;
    }
    mu = mu.clamp(MU_BOUNDS.0 + 0.5, MU_BOUNDS.1 - 0.5);

    // Criteria from the noise side: c = −z(FAR) at each boundary, ascending.
    let mut criteria: Vec<f64> = roc.fa_rates.iter().rev().map(|&far| -normal::quantile(far)).collect();
    for j in 1..criteria.len() {
        if criteria[j] < criteria[j - 1] + MIN_INIT_INCREMENT {
            criteria[j] = criteria[j - 1] + MIN_INIT_INCREMENT;
        }
    }
    UvsdParams {
        mu,
        sigma_s: sigma,
        criteria,
    }
}

fn perturb(p: &UvsdParams, sd: f64, seed: u64, index: u64, free_sigma: bool) -> UvsdParams {
    let mut rng = rng::stream(seed, index);
    let mut factor = || -> f64 {
        let e: f64 = StandardNormal.sample(&mut rng);
        (sd * e).exp()
    };
    let mu = (p.mu * factor()).clamp(MU_BOUNDS.0, MU_BOUNDS.1);
    let sigma = if free_sigma {
        (p.sigma_s * factor()).clamp(SIGMA_BOUNDS.0, SIGMA_BOUNDS.1)
    } else {
        1.0
    };
    let mut criteria = Vec::with_capacity(p.criteria.len());
    criteria.push(p.criteria[0] * factor());
    for w in p.criteria.windows(2) {
        let inc = (w[1] - w[0]) * factor();
        criteria.push(criteria.last().expect("seeded above") + inc);
    }
    UvsdParams {
        mu,
        sigma_s: sigma,
        criteria,
    }
}

/// Central-difference Hessian of the objective from its analytic gradient.
fn hessian(obj: &mut NegLogLik<'_>, theta: &[f64]) -> Vec<f64> {
    let n = theta.len();
    let mut h = vec![0.0; n * n];
    let mut probe = theta.to_vec();
    let (mut gp, mut gm) = (vec![0.0; n], vec![0.0; n]);
    for j in 0..n {
        let step = 1e-5 * theta[j].abs().max(1.0);
        probe[j] = theta[j] + step;
        obj.eval(&probe, &mut gp);
        probe[j] = theta[j] - step;
        obj.eval(&probe, &mut gm);
        probe[j] = theta[j];
        for i in 0..n {
            h[i * n + j] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (h[i * n + j] + h[j * n + i]);
            h[i * n + j] = avg;
            h[j * n + i] = avg;
        }
    }
    h
}

fn free_mask(bounds: &Bounds, theta: &[f64]) -> Vec<bool> {
    theta
        .iter()
        .enumerate()
        .map(|(i, &t)| t > bounds.lower[i] && t < bounds.upper[i])
        .collect()
}

fn submatrix(h: &[f64], n: usize, idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let mut out = vec![0.0; m * m];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            out[a * m + b] = h[i * n + j];
        }
    }
    out
}

/// Newton refinement on the free coordinates; returns the refined point and
/// objective value.
fn polish(obj: &mut NegLogLik<'_>, bounds: &Bounds, theta: &[f64], f0: f64, steps: usize) -> (Vec<f64>, f64) {
    let n = theta.len();
    let mut x = theta.to_vec();
    let mut f = f0;
    let mut g = vec![0.0; n];
    for _ in 0..steps {
        obj.eval(&x, &mut g);
        let idx: Vec<usize> = free_mask(bounds, &x)
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() || idx.iter().all(|&i| g[i].abs() < 1e-10) {
            break;
        }
        let h = hessian(obj, &x);
        let Some(inv) = optim::invert_spd(&submatrix(&h, n, &idx), idx.len()) else {
            break;
        };
        let m = idx.len();
        let delta: Vec<f64> = (0..m)
            .map(|a| -(0..m).map(|b| inv[a * m + b] * g[idx[b]]).sum::<f64>())
            .collect();
        let mut step = 1.0;
        let mut improved = false;
        let mut trial = x.clone();
        let mut scratch = vec![0.0; n];
        for _ in 0..20 {
            for (a, &i) in idx.iter().enumerate() {
                trial[i] = x[i] + step * delta[a];
            }
            bounds.project(&mut trial);
            let ft = obj.eval(&trial, &mut scratch);
            if ft.is_finite() && ft <= f {
                improved = ft < f || trial != x;
                x.clone_from(&trial);
                f = ft;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, f)
}

/// Maximum-likelihood unequal-variance fit with the default options.
pub fn fit_uvsd(roc: &RatingRoc, restarts: usize) -> Result<UvsdFit> {
    fit_model(
        roc,
        SdtModel::Uvsd,
        &FitOptions {
            restarts,
            ..FitOptions::default()
        },
    )
}

/// Maximum-likelihood equal-variance fit (σ_s fixed at 1).
pub fn fit_evsd(roc: &RatingRoc, restarts: usize) -> Result<UvsdFit> {
    fit_model(
        roc,
        SdtModel::Evsd,
        &FitOptions {
            restarts,
            ..FitOptions::default()
        },
    )
}

pub fn fit_model(roc: &RatingRoc, model: SdtModel, opts: &FitOptions) -> Result<UvsdFit> {
    let (signal, noise) = occupied_levels(roc);
    let n_s: u64 = signal.iter().sum();
    let n_n: u64 = noise.iter().sum();
    if n_s == 0 || n_n == 0 {
        return Err(SdtError::InsufficientClass(format!(
            "{n_s} signal and {n_n} noise trials; both classes are required"
        )));
    }
    if signal.len() < 3 {
        return Err(SdtError::InsufficientData(format!(
            "{} occupied rating levels; at least 3 are required",
            signal.len()
        )));
    }

    let free_sigma = model == SdtModel::Uvsd;
    let mut obj = NegLogLik {
        signal: &signal,
        noise: &noise,
        free_sigma,
    };
    let bounds = obj.bounds();
    let init = initial_params(&signal, &noise, free_sigma);
    let mut theta0 = obj.pack(&init);
    bounds.project(&mut theta0);
    let init_ll = obj.log_likelihood(&obj.unpack(&theta0));

    let mut records = Vec::with_capacity(opts.restarts + 1);
    let mut best: Option<(usize, optim::Minimum)> = None;
    for index in 0..=opts.restarts {
        let start = if index == 0 {
            theta0.clone()
        } else {
            let mut t = obj.pack(&perturb(
                &init,
                opts.perturbation_sd,
                opts.seed,
                index as u64,
                free_sigma,
            ));
            bounds.project(&mut t);
            t
        };
        let m = optim::minimize(&mut obj, &start, &bounds, &opts.optimizer);
        let converged = m.converged() && m.f.is_finite();
        records.push(RestartRecord {
            index,
            log_likelihood: -m.f,
            converged,
            iterations: m.iterations,
        });
        if converged && best.as_ref().is_none_or(|(_, b)| m.f < b.f) {
            best = Some((index, m));
        }
    }

    let Some((_, best)) = best else {
        let table: Vec<String> = records
            .iter()
            .map(|r| format!("#{}: logL={:.6} iters={}", r.index, r.log_likelihood, r.iterations))
            .collect();
        return Err(SdtError::FitFailure(format!(
            "no restart converged ({})",
            table.join("; ")
        )));
    };

    let (theta, f) = polish(&mut obj, &bounds, &best.x, best.f, opts.polish_steps);
    let mut grad = vec![0.0; theta.len()];
    obj.eval(&theta, &mut grad);
    let free = free_mask(&bounds, &theta);
    let gradient_max_abs = grad
        .iter()
        .zip(&free)
        .filter(|(_, f)| **f)
        .fold(0.0_f64, |m, (g, _)| m.max(g.abs()));

    let params = obj.unpack(&theta);
    let standard_errors = if opts.standard_errors {
        wald_errors(&mut obj, &theta, &free, &params)
    } else {
        None
    };

    let log_likelihood = -f;
    let n_parameters = theta.len();
    let n_trials = n_s + n_n;
    let d_a = params.d_a();
    Ok(UvsdFit {
        model,
        auc_analytic: normal::cdf(d_a / std::f64::consts::SQRT_2),
        d_a,
        aic: 2.0 * n_parameters as f64 - 2.0 * log_likelihood,
        bic: n_parameters as f64 * (n_trials as f64).ln() - 2.0 * log_likelihood,
        log_likelihood,
        converged: true,
        n_restarts_used: opts.restarts + 1,
        n_parameters,
        n_trials,
        init_log_likelihood: init_ll,
        gradient_max_abs,
        standard_errors,
        restarts: records,
        signal_counts: signal,
        noise_counts: noise,
        params,
    })
}

fn wald_errors(obj: &mut NegLogLik<'_>, theta: &[f64], free: &[bool], p: &UvsdParams) -> Option<StandardErrors> {
    let n = theta.len();
    // μ (and σ_s) must be interior for the asymptotic covariance to apply.
    if !free[0] || (obj.free_sigma && !free[1]) {
        return None;
    }
    let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
    let h = hessian(obj, theta);
    let inv = optim::invert_spd(&submatrix(&h, n, &idx), idx.len())?;
    let m = idx.len();
    let var_mu = inv[0];
    let scale = (2.0 / (1.0 + p.sigma_s * p.sigma_s)).sqrt();
    let (sigma_se, var_da) = if obj.free_sigma {
        let var_sigma = inv[m + 1];
        let cov = inv[1];
        let d_mu = scale;
        let d_sigma = -p.mu * std::f64::consts::SQRT_2 * p.sigma_s / (1.0 + p.sigma_s * p.sigma_s).powf(1.5);
        (
            Some(var_sigma.sqrt()),
            d_mu * d_mu * var_mu + 2.0 * d_mu * d_sigma * cov + d_sigma * d_sigma * var_sigma,
        )
    } else {
        (None, scale * scale * var_mu)
    };
    if !(var_mu > 0.0 && var_da > 0.0) {
        return None;
    }
    Some(StandardErrors {
        mu: var_mu.sqrt(),
        sigma_s: sigma_se,
        d_a: var_da.sqrt(),
    })
}

/// Log-likelihood of rating counts under given parameters (criteria must
/// match the number of occupied levels).
pub fn log_likelihood(signal: &[u64], noise: &[u64], params: &UvsdParams) -> Result<f64> {
    if signal.len() != noise.len() || params.criteria.len() + 1 != signal.len() {
        return Err(SdtError::Mismatch("criteria do not match the number of levels".into()));
    }
    let obj = NegLogLik {
        signal,
        noise,
        free_sigma: true,
    };
    Ok(obj.log_likelihood(params))
}

/// Numerical gradient of the log-likelihood in the bounded
/// parameterisation, evaluated at a fit's optimum.
pub fn numerical_gradient(fit: &UvsdFit) -> Vec<f64> {
    let obj = NegLogLik {
        signal: &fit.signal_counts,
        noise: &fit.noise_counts,
        free_sigma: fit.model == SdtModel::Uvsd,
    };
    let theta = obj.pack(&fit.params);
    let mut fd = optim::FiniteDifference::new(|t: &[f64]| obj.log_likelihood(&obj.unpack(t)));
    fd.rel_step = 1e-6;
    let mut g = vec![0.0; theta.len()];
    fd.eval(&theta, &mut g);
    g
}

/// `d_a = √(2/(1+s²)) · (z(HR) − s·z(FAR))`, invariant across criteria of
/// a Gaussian model with z-ROC slope `s`.
pub fn d_a_from_point(hr: f64, far: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(SdtError::Domain(format!("variance ratio must be positive, got {s}")));
    }
    let (zh, zf) = (normal::z(hr)?, normal::z(far)?);
    Ok((2.0 / (1.0 + s * s)).sqrt() * (zh - s * zf))
}

pub fn d_a_from_fit(fit: &UvsdFit) -> Result<f64> {
    if !fit.converged {
        return Err(SdtError::FitFailure("fit did not converge".into()));
    }
    Ok(fit.params.d_a())
}

/// Criterion location `c = −(z(HR) + z(FAR)) / 2`; negative is liberal.
pub fn criterion_c(hr: f64, far: f64) -> Result<f64> {
    Ok(-(normal::z(hr)? + normal::z(far)?) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub d_a: f64,
    pub c: f64,
    pub hr: f64,
    pub far: f64,
    /// Which ROC criterion the point was taken from.
    pub criterion_index: usize,
    pub criterion_edge: f64,
}

/// Headline operating point at the ROC's median interior edge, with `d_a`
/// from the supplied fit.
pub fn headline_operating_point(roc: &RatingRoc, d_a: f64) -> Result<OperatingPoint> {
    if roc.criteria.is_empty() {
        return Err(SdtError::InsufficientPoints { needed: 1, found: 0 });
    }
    let i = roc.median_criterion();
    let (hr, far) = (roc.hit_rates[i], roc.fa_rates[i]);
    Ok(OperatingPoint {
        d_a,
        c: criterion_c(hr, far)?,
        hr,
        far,
        criterion_index: i,
        criterion_edge: roc.criteria[i],
    })
}

/// Moment-based `d_a` from raw signal and noise evidence samples.
pub fn distributional_da(signal: &[f64], noise: &[f64]) -> Result<f64> {
    if signal.len() < 2 || noise.len() < 2 {
        return Err(SdtError::InsufficientData(
            "each sample needs at least two values".into(),
        ));
    }
    let (ms, vs) = mean_var(signal);
    let (mn, vn) = mean_var(noise);
    let pooled = (vs + vn) / 2.0;
    if !(pooled > 0.0) {
        return Err(SdtError::DegenerateSupport("zero pooled variance".into()));
    }
    Ok((ms - mn) / pooled.sqrt())
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    /// AIC(UVSD) − AIC(EVSD); negative favours UVSD.
    pub delta_aic: f64,
    pub delta_bic: f64,
    /// 2·(logL_UVSD − logL_EVSD).
    pub likelihood_ratio: f64,
    pub preferred_by_aic: SdtModel,
    pub preferred_by_bic: SdtModel,
}

pub fn compare_models(uvsd: &UvsdFit, evsd: &UvsdFit) -> Result<ModelComparison> {
    if uvsd.model != SdtModel::Uvsd || evsd.model != SdtModel::Evsd {
        return Err(SdtError::Mismatch("expected one UVSD and one EVSD fit".into()));
    }
    if uvsd.signal_counts != evsd.signal_counts || uvsd.noise_counts != evsd.noise_counts {
        return Err(SdtError::Mismatch("fits were made on different counts".into()));
    }
    let delta_aic = uvsd.aic - evsd.aic;
    let delta_bic = uvsd.bic - evsd.bic;
    let pick = |d: f64| if d < 0.0 { SdtModel::Uvsd } else { SdtModel::Evsd };
    Ok(ModelComparison {
        delta_aic,
        delta_bic,
        likelihood_ratio: 2.0 * (uvsd.log_likelihood - evsd.log_likelihood),
        preferred_by_aic: pick(delta_aic),
        preferred_by_bic: pick(delta_bic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Expected counts (rounded) under a model, so fits recover the truth
    /// without sampling noise.
    fn expected_roc(p: &UvsdParams, n: f64) -> RatingRoc {
        let (pn, ps) = p.level_probabilities();
        let k = pn.len();
        let edges: Vec<f64> = (0..=k).map(|e| e as f64).collect();
        let noise = pn.iter().map(|q| (q * n).round() as u64).collect();
        let signal = ps.iter().map(|q| (q * n).round() as u64).collect();
        roc::roc_from_counts(edges, signal, noise, Correction::None).unwrap()
    }

    #[test]
    fn uvsd_recovers_expected_counts() {
        let truth = UvsdParams::new(1.5, 1.25, vec![-1.0, 0.0, 1.0]).unwrap();
        let roc = expected_roc(&truth, 1e6);
        let fit = fit_uvsd(&roc, 10).unwrap();
        assert!((fit.params.mu - 1.5).abs() < 0.02, "{:?}", fit.params);
        assert!((fit.params.sigma_s - 1.25).abs() < 0.02);
        for (c, t) in fit.params.criteria.iter().zip(&truth.criteria) {
            assert!((c - t).abs() < 0.02);
        }
        assert!(fit.log_likelihood >= fit.init_log_likelihood);
        assert!((fit.auc_analytic - normal::cdf(fit.d_a / std::f64::consts::SQRT_2)).abs() < 1e-15);
        let k = fit.n_parameters as f64;
        assert!((fit.aic - (2.0 * k - 2.0 * fit.log_likelihood)).abs() < 1e-9);
        assert!((fit.bic - (k * (fit.n_trials as f64).ln() - 2.0 * fit.log_likelihood)).abs() < 1e-9);
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let truth = UvsdParams::new(1.1, 1.6, vec![-1.2, -0.3, 0.4, 1.1, 1.9]).unwrap();
        let fit = fit_uvsd(&expected_roc(&truth, 5000.0), 10).unwrap();
        let g = numerical_gradient(&fit);
        assert!(g.iter().all(|v| v.abs() < 1e-4), "{g:?}");
        assert!(fit.gradient_max_abs < 1e-4);
    }

    #[test]
    fn evsd_recovers_mu_and_nests() {
        let truth = UvsdParams::new(0.8, 1.0, vec![-0.5, 0.3, 1.0]).unwrap();
        let roc = expected_roc(&truth, 1e6);
        let evsd = fit_evsd(&roc, 10).unwrap();
        assert!((evsd.params.mu - 0.8).abs() < 0.02);
        assert_eq!(evsd.params.sigma_s, 1.0);

        let wide = UvsdParams::new(1.0, 2.0, vec![-0.5, 0.3, 1.0, 1.8]).unwrap();
        let roc = expected_roc(&wide, 2000.0);
        let u = fit_uvsd(&roc, 10).unwrap();
        let e = fit_evsd(&roc, 10).unwrap();
        assert!(e.log_likelihood < u.log_likelihood);
        let cmp = compare_models(&u, &e).unwrap();
        assert_eq!(cmp.preferred_by_aic, SdtModel::Uvsd);
        assert_eq!(cmp.preferred_by_bic, SdtModel::Uvsd);
    }

    #[test]
    fn chance_data_gives_zero_mu() {
        let truth = UvsdParams::new(0.0, 1.0, vec![-1.0, 0.0, 1.0]).unwrap();
        let e = fit_evsd(&expected_roc(&truth, 1e5), 10).unwrap();
        assert!(e.params.mu.abs() < 0.01);
    }

    #[test]
    fn identical_likelihoods_prefer_evsd() {
        let truth = UvsdParams::new(1.0, 1.0, vec![-1.0, 0.0, 1.0]).unwrap();
        let roc = expected_roc(&truth, 1000.0);
        let e = fit_evsd(&roc, 2).unwrap();
        let mut u = fit_uvsd(&roc, 2).unwrap();
        u.log_likelihood = e.log_likelihood;
        u.aic = 2.0 * u.n_parameters as f64 - 2.0 * u.log_likelihood;
        u.bic = u.n_parameters as f64 * (u.n_trials as f64).ln() - 2.0 * u.log_likelihood;
        let cmp = compare_models(&u, &e).unwrap();
        assert_eq!(cmp.preferred_by_aic, SdtModel::Evsd);
        assert_eq!(cmp.preferred_by_bic, SdtModel::Evsd);
        assert!((cmp.delta_aic - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_counts_rejected() {
        let a = expected_roc(&UvsdParams::new(1.0, 1.0, vec![-1.0, 0.0, 1.0]).unwrap(), 1000.0);
        let b = expected_roc(&UvsdParams::new(1.0, 1.0, vec![-1.0, 0.0, 1.0]).unwrap(), 2000.0);
        assert!(compare_models(&fit_uvsd(&a, 1).unwrap(), &fit_evsd(&b, 1).unwrap()).is_err());
    }

    #[test]
    fn too_few_levels() {
        let edges = vec![0.0, 1.0, 2.0];
        let roc = roc::roc_from_counts(edges, vec![3, 7], vec![6, 4], Correction::None).unwrap();
        assert!(matches!(fit_uvsd(&roc, 10), Err(SdtError::InsufficientData(_))));
    }

    #[test]
    fn empty_bins_are_dropped() {
        let truth = UvsdParams::new(1.0, 1.3, vec![-0.5, 0.5, 1.5]).unwrap();
        let roc = expected_roc(&truth, 5000.0);
        let mut s = roc.signal_counts.clone();
        let mut n = roc.noise_counts.clone();
        s.insert(2, 0);
        n.insert(2, 0);
        let padded = roc::roc_from_counts((0..=5).map(f64::from).collect(), s, n, Correction::None).unwrap();
        let a = fit_uvsd(&roc, 3).unwrap();
        let b = fit_uvsd(&padded, 3).unwrap();
        assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-8);
        assert_eq!(b.params.criteria.len(), 3);
    }

    #[test]
    fn d_a_point_examples() {
        let d = d_a_from_point(normal::cdf(0.5), normal::cdf(-0.5), 1.0).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        for s in [0.5, 0.78, 1.0, 1.7] {
            assert_eq!(d_a_from_point(0.5, 0.5, s).unwrap(), 0.0);
        }
        assert!(d_a_from_point(0.3, 0.3, 1.0).unwrap().abs() < 1e-15);
        assert!(d_a_from_point(1.0, 0.2, 1.0).is_err());
        assert!(d_a_from_point(0.9, 0.0, 1.0).is_err());
    }

    #[test]
    fn d_a_is_criterion_invariant_on_model_points() {
        let p = UvsdParams::new(1.7, 1.45, vec![]).unwrap();
        let expected = p.d_a();
        for c in [-1.5, -0.4, 0.3, 1.1, 2.2] {
            let (far, hr) = p.operating_point(c);
            let d = d_a_from_point(hr, far, p.s()).unwrap();
            assert!((d - expected).abs() < 1e-12, "criterion {c}: {d} vs {expected}");
        }
    }

    #[test]
    fn d_a_from_fit_inverts_scaling() {
        for sigma in [0.6, 1.0, 1.28, 2.5] {
            let mu = 1.45 * ((1.0 + sigma * sigma) / 2.0_f64).sqrt();
            let p = UvsdParams::new(mu, sigma, vec![0.0]).unwrap();
            assert!((p.d_a() - 1.45).abs() < 1e-12);
        }
        assert_eq!(UvsdParams::new(0.0, 1.3, vec![0.0]).unwrap().d_a(), 0.0);
    }

    #[test]
    fn d_a_from_fit_requires_convergence() {
        let roc = expected_roc(&UvsdParams::new(1.0, 1.2, vec![-1.0, 0.0, 1.0]).unwrap(), 1000.0);
        let mut fit = fit_uvsd(&roc, 1).unwrap();
        assert!((d_a_from_fit(&fit).unwrap() - fit.d_a).abs() < 1e-15);
        fit.converged = false;
        assert!(d_a_from_fit(&fit).is_err());
    }

    #[test]
    fn criterion_examples() {
        assert!(criterion_c(0.8, 0.2).unwrap().abs() < 1e-12);
        // −(z(.99) + z(.5)) / 2 with z(.99) = 2.326347874040841.
        let c = criterion_c(0.99, 0.5).unwrap();
        assert!((c + 1.163_173_937_020_420_5).abs() < 1e-9, "{c}");
        assert!(criterion_c(1.0, 0.5).is_err());
    }

    #[test]
    fn distributional_examples() {
        let x = [0.1, 0.5, -0.3, 1.2];
        assert_eq!(distributional_da(&x, &x).unwrap(), 0.0);
        assert!(matches!(
            distributional_da(&[1.0, 1.0], &[2.0, 2.0]),
            Err(SdtError::DegenerateSupport(_))
        ));
        assert!(distributional_da(&[1.0], &[2.0, 3.0]).is_err());
    }
}
