//! Stratified percentile bootstrap and bootstrap TOST.
//!
//! Resample `i` draws its indices from the keyed stream `(seed, i)`, so a
//! bootstrap distribution is a pure function of `(seed, n, trial order)`
//! however the resamples are scheduled across threads. Signal and noise
//! trials are resampled separately to keep class sizes fixed. Bin edges
//! stay at the values computed from the original data.

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdtError};
use crate::fit::{self, FitOptions, SdtModel};
use crate::ingest::TrialRecord;
use crate::rng;
use crate::roc::{self, BinScheme, Correction, RatingRoc};

/// Convergence fraction below which a warning is logged.
pub const CONVERGENCE_WARNING: f64 = 0.9995;
/// Convergence fraction below which the bootstrap fails outright.
pub const CONVERGENCE_FAILURE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Trapezoidal area under the corrected ROC.
    Auc,
    /// `d_a` from the UVSD maximum-likelihood fit.
    DA,
    /// Criterion `c` at the median interior edge.
    C,
    /// z-ROC regression slope.
    ZSlope,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::Auc, Statistic::DA, Statistic::C, Statistic::ZSlope];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Auc => "auc",
            Statistic::DA => "d_a",
            Statistic::C => "c",
            Statistic::ZSlope => "zslope",
        }
    }
}

/// Everything needed to recompute a statistic from a set of trials.
#[derive(Debug, Clone)]
pub struct StatPipeline {
    pub edges: Vec<f64>,
    pub correction: Correction,
    pub fit: FitOptions,
}

impl StatPipeline {
    pub fn new(edges: Vec<f64>, correction: Correction) -> Self {
        Self {
            edges,
            correction,
            fit: FitOptions {
                standard_errors: false,
                ..FitOptions::default()
            },
        }
    }

    /// Pipeline with edges derived from the trials themselves.
    pub fn from_scheme(trials: &[TrialRecord], scheme: &BinScheme, correction: Correction) -> Result<Self> {
        Ok(Self::new(roc::make_bins(trials, scheme)?, correction))
    }

    fn bins_by_class(&self, trials: &[TrialRecord]) -> (Vec<usize>, Vec<usize>) {
        let mut signal = Vec::new();
        let mut noise = Vec::new();
        for t in trials {
            let b = roc::bin_index(&self.edges, t.evidence);
            if t.correct {
                signal.push(b);
            } else {
                noise.push(b);
            }
        }
        (signal, noise)
    }

    fn roc_from_bins(&self, signal: &[usize], noise: &[usize]) -> Result<RatingRoc> {
        let k = self.edges.len() - 1;
        let mut s = vec![0u64; k];
        let mut n = vec![0u64; k];
        for &b in signal {
            s[b] += 1;
        }
        for &b in noise {
            n[b] += 1;
        }
        roc::roc_from_counts(self.edges.clone(), s, n, self.correction)
    }

    pub fn evaluate_roc(&self, roc: &RatingRoc, stat: Statistic) -> Result<f64> {
        match stat {
            Statistic::Auc => roc::auc_trapezoid(roc),
            Statistic::ZSlope => roc::zroc_fit(roc).map(|z| z.slope),
            Statistic::C => fit::headline_operating_point(roc, f64::NAN).map(|op| op.c),
            Statistic::DA => fit::fit_model(roc, SdtModel::Uvsd, &self.fit).and_then(|f| fit::d_a_from_fit(&f)),
        }
    }

    pub fn evaluate(&self, trials: &[TrialRecord], stat: Statistic) -> Result<f64> {
        let (s, n) = self.bins_by_class(trials);
        self.evaluate_roc(&self.roc_from_bins(&s, &n)?, stat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub statistic: Statistic,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n_resamples: usize,
    pub n_converged: usize,
    pub seed: u64,
}

impl BootstrapResult {
    pub fn convergence_fraction(&self) -> f64 {
        self.n_converged as f64 / self.n_resamples as f64
    }
}

/// Order-statistic percentile interval of an already sorted sample.
pub fn percentile_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let b = sorted.len();
    let tail = (1.0 - level) / 2.0;
    // The guard absorbs rounding in p·B so exact products are not bumped up.
    let index = |p: f64| ((p * b as f64 - 1e-9).ceil() as usize).clamp(1, b) - 1;
    (sorted[index(tail)], sorted[index(1.0 - tail)])
}

fn resample(rng: &mut rng::StreamRng, bins: &[usize]) -> Vec<usize> {
    (0..bins.len()).map(|_| bins[rng.random_range(0..bins.len())]).collect()
}

/// Bootstrap distributions for several statistics from one set of resamples.
/// Returns, per statistic, the sorted converged values.
fn distributions(
    trials: &[TrialRecord],
    stats: &[Statistic],
    n: usize,
    seed: u64,
    pipeline: &StatPipeline,
) -> Vec<Vec<f64>> {
    let (signal, noise) = pipeline.bins_by_class(trials);
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            let s = resample(&mut rng, &signal);
            let nz = resample(&mut rng, &noise);
            match pipeline.roc_from_bins(&s, &nz) {
                Ok(roc) => stats
                    .iter()
                    .map(|&st| pipeline.evaluate_roc(&roc, st).ok().filter(|v| v.is_finite()))
                    .collect(),
                Err(_) => vec![None; stats.len()],
            }
        })
        .collect();
    (0..stats.len())
        .map(|j| {
            let mut v: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect()
}

/// Percentile bootstrap CIs for several statistics sharing the same resamples.
pub fn bootstrap_many(
    trials: &[TrialRecord],
    stats: &[Statistic],
    n: usize,
    seed: u64,
    level: f64,
    pipeline: &StatPipeline,
) -> Result<Vec<BootstrapResult>> {
    if n == 0 {
        return Err(SdtError::Config("bootstrap needs at least one resample".into()));
    }
    let points: Vec<f64> = stats
        .iter()
        .map(|&s| pipeline.evaluate(trials, s))
        .collect::<Result<_>>()?;
    let dists = distributions(trials, stats, n, seed, pipeline);
    stats
        .iter()
        .zip(points)
        .zip(dists)
        .map(|((&statistic, point), dist)| {
            let frac = dist.len() as f64 / n as f64;
            if frac < CONVERGENCE_FAILURE || dist.is_empty() {
                return Err(SdtError::BootstrapFailure {
                    converged: dist.len(),
                    total: n,
                });
            }
            if frac < CONVERGENCE_WARNING {
                warn!(
                    "bootstrap for {}: only {}/{} resamples converged ({:.4})",
                    statistic.name(),
                    dist.len(),
                    n,
                    frac
                );
            }
            let (ci_low, ci_high) = percentile_interval(&dist, level);
            Ok(BootstrapResult {
                statistic,
                point,
                ci_low,
                ci_high,
                level,
                n_resamples: n,
                n_converged: dist.len(),
                seed,
            })
        })
        .collect()
}

/// Percentile 95% bootstrap CI for one statistic.
pub fn bootstrap_ci(
    trials: &[TrialRecord],
    statistic: Statistic,
    n: usize,
    seed: u64,
    pipeline: &StatPipeline,
) -> Result<BootstrapResult> {
    let mut out = bootstrap_many(trials, &[statistic], n, seed, 0.95, pipeline)?;
    Ok(out.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Equivalent,
    NotEquivalent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    /// AUC(a) − AUC(b) on the original data.
    pub delta_observed: f64,
    pub bound: f64,
    pub ci90: (f64, f64),
    pub ci95: (f64, f64),
    pub ci_within_bound: bool,
    pub verdict: Verdict,
    pub n_resamples: usize,
    pub n_converged: usize,
}

impl EquivalenceVerdict {
    /// Re-judge the same bootstrap distribution against another bound.
    pub fn with_bound(&self, bound: f64) -> Self {
        let (within, verdict) = judge(self.ci90, self.ci95, bound);
        Self {
            bound,
            ci_within_bound: within,
            verdict,
            ..self.clone()
        }
    }
}

fn judge(ci90: (f64, f64), ci95: (f64, f64), bound: f64) -> (bool, Verdict) {
    let within = ci90.0 > -bound && ci90.1 < bound;
    let verdict = if within {
        Verdict::Equivalent
    } else if ci95.0 > bound || ci95.1 < -bound {
        Verdict::NotEquivalent
    } else {
        Verdict::Inconclusive
    };
    (within, verdict)
}

/// Bootstrap two one-sided tests on ΔAUC = AUC(a) − AUC(b): equivalent
/// when the 90% CI lies inside `(−bound, bound)`, not equivalent when the
/// 95% CI lies entirely outside `[−bound, bound]`.
pub fn tost_auc(
    cond_a: &[TrialRecord],
    cond_b: &[TrialRecord],
    bound: f64,
    n: usize,
    seed: u64,
    pipeline: &StatPipeline,
) -> Result<EquivalenceVerdict> {
    if !(bound > 0.0) {
        return Err(SdtError::Config(format!(
            "equivalence bound must be positive, got {bound}"
        )));
    }
    if n == 0 {
        return Err(SdtError::Config("bootstrap needs at least one resample".into()));
    }
    let delta_observed = pipeline.evaluate(cond_a, Statistic::Auc)? - pipeline.evaluate(cond_b, Statistic::Auc)?;
    let (sa, na) = pipeline.bins_by_class(cond_a);
    let (sb, nb) = pipeline.bins_by_class(cond_b);
    let (seed_a, seed_b) = (rng::derive_seed(seed, "tost/a"), rng::derive_seed(seed, "tost/b"));
    let mut deltas: Vec<f64> = (0..n)
        .into_par_iter()
        .filter_map(|i| {
            let auc = |seed: u64, s: &[usize], nz: &[usize]| {
                let mut rng = rng::stream(seed, i as u64);
                let rs = resample(&mut rng, s);
                let rn = resample(&mut rng, nz);
                pipeline
                    .roc_from_bins(&rs, &rn)
                    .and_then(|r| roc::auc_trapezoid(&r))
                    .ok()
            };
            Some(auc(seed_a, &sa, &na)? - auc(seed_b, &sb, &nb)?)
        })
        .collect();
    if (deltas.len() as f64) < CONVERGENCE_FAILURE * n as f64 || deltas.is_empty() {
        return Err(SdtError::BootstrapFailure {
            converged: deltas.len(),
            total: n,
        });
    }
    deltas.sort_by(f64::total_cmp);
    let ci90 = percentile_interval(&deltas, 0.90);
    let ci95 = percentile_interval(&deltas, 0.95);
    let (ci_within_bound, verdict) = judge(ci90, ci95, bound);
    Ok(EquivalenceVerdict {
        delta_observed,
        bound,
        ci90,
        ci95,
        ci_within_bound,
        verdict,
        n_resamples: n,
        n_converged: deltas.len(),
    })
}
