//! Synthetic rating data from known UVSD parameters.
//!
//! Used as ground truth for the fitting and inference code: trial
//! generation, Monte Carlo equivalence bounds for pure criterion shifts,
//! and parameter-recovery / interval-coverage studies.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdtError};
use crate::fit::{self, FitOptions, SdtModel, UvsdParams};
use crate::ingest::{ConditionKey, TrialRecord};
use crate::rng;
use crate::roc::{self, Correction};

pub const DEFAULT_MU_GRID: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
pub const DEFAULT_SIGMA_GRID: [f64; 5] = [1.0, 1.25, 1.6, 2.0, 2.5];
pub const DEFAULT_CRITERION_DELTAS: [f64; 5] = [-0.5, -0.25, 0.0, 0.25, 0.5];
pub const DEFAULT_SIM_BINS: usize = 20;

/// The 4 × 5 grid of (μ, σ_s) combinations used by default for bounds and
/// recovery studies.
pub fn default_grid() -> Vec<UvsdParams> {
    DEFAULT_MU_GRID
        .iter()
        .flat_map(|&mu| {
            DEFAULT_SIGMA_GRID
                .iter()
                .map(move |&s| UvsdParams::new(mu, s, Vec::new()).expect("grid values are valid"))
        })
        .collect()
}

/// Per-level change applied on top of the base truth. Each level becomes a
/// separate condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manipulation {
    #[default]
    None,
    /// Move the response criterion by `δ`; equivalently shift every
    /// evidence value by `−δ` while the distributions stay put.
    CriterionShift { deltas: Vec<f64> },
    /// Multiply σ_s by each factor.
    VarianceScale { factors: Vec<f64> },
}

impl Manipulation {
    /// `(evidence shift, σ_s factor)` per level.
    fn levels(&self) -> Vec<(f64, f64)> {
        match self {
            Manipulation::None => vec![(0.0, 1.0)],
            Manipulation::CriterionShift { deltas } => deltas.iter().map(|d| (-d, 1.0)).collect(),
            Manipulation::VarianceScale { factors } => factors.iter().map(|f| (0.0, *f)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub truth: UvsdParams,
    pub n_signal: usize,
    pub n_noise: usize,
    #[serde(default)]
    pub manipulation: Manipulation,
    pub seed: u64,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_dataset")]
    pub dataset: String,
    /// Temperature label for each manipulation level.
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
}

fn default_model() -> String {
    "synthetic".into()
}

fn default_dataset() -> String {
    "sim".into()
}

fn default_temperatures() -> Vec<f64> {
    vec![1.0]
}

impl SimSpec {
    pub fn new(truth: UvsdParams, n_signal: usize, n_noise: usize, seed: u64) -> Self {
        Self {
            truth,
            n_signal,
            n_noise,
            manipulation: Manipulation::None,
            seed,
            model: default_model(),
            dataset: default_dataset(),
            temperatures: default_temperatures(),
        }
    }

    pub fn with_manipulation(mut self, manipulation: Manipulation, temperatures: Vec<f64>) -> Self {
        self.manipulation = manipulation;
        self.temperatures = temperatures;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_signal == 0 || self.n_noise == 0 {
            return Err(SdtError::Config("n_signal and n_noise must be at least 1".into()));
        }
        UvsdParams::new(self.truth.mu, self.truth.sigma_s, self.truth.criteria.clone())?;
        let levels = self.manipulation.levels();
        if levels.is_empty() {
            return Err(SdtError::Config("manipulation has no levels".into()));
        }
        if levels.len() != self.temperatures.len() {
            return Err(SdtError::Config(format!(
                "{} manipulation levels but {} temperatures",
                levels.len(),
                self.temperatures.len()
            )));
        }
        if let Some((_, f)) = levels
            .iter()
            .find(|(s, f)| !s.is_finite() || !(*f > 0.0 && f.is_finite()))
        {
            return Err(SdtError::Config(format!(
                "invalid manipulation level (scale factor {f})"
            )));
        }
        if self.temperatures.iter().any(|t| !(*t > 0.0)) {
            return Err(SdtError::Config("temperatures must be positive".into()));
        }
        Ok(())
    }
}

fn normals(rng: &mut rng::StreamRng, n: usize, mean: f64, sd: f64) -> impl Iterator<Item = f64> + '_ {
    (0..n).map(move |_| mean + sd * rng.sample::<f64, _>(StandardNormal))
}

/// Draw trials: signal evidence ~ N(μ, σ_s), noise ~ N(0, 1), one condition
/// per manipulation level. Level `l` draws signal from stream `2l` and noise
/// from stream `2l + 1`.
pub fn generate_trials(spec: &SimSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let mut out = Vec::with_capacity((spec.n_signal + spec.n_noise) * spec.temperatures.len());
    for (l, ((shift, scale), &temp)) in spec
        .manipulation
        .levels()
        .into_iter()
        .zip(&spec.temperatures)
        .enumerate()
    {
        let key = ConditionKey::new(spec.model.clone(), spec.dataset.clone(), temp);
        let sigma = spec.truth.sigma_s * scale;
        let mut rs = rng::stream(spec.seed, 2 * l as u64);
        for (i, x) in normals(&mut rs, spec.n_signal, spec.truth.mu, sigma).enumerate() {
            out.push(TrialRecord::new(format!("L{l}-s{i}"), key.clone(), x + shift, true));
        }
        let mut rn = rng::stream(spec.seed, 2 * l as u64 + 1);
        for (i, x) in normals(&mut rn, spec.n_noise, 0.0, 1.0).enumerate() {
            out.push(TrialRecord::new(format!("L{l}-n{i}"), key.clone(), x + shift, false));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationBound {
    pub mu: f64,
    pub sigma_s: f64,
    pub auc_analytic: f64,
    /// Largest |ΔAUC| over all iterations and deltas.
    pub max_delta_auc: f64,
    pub p95_delta_auc: f64,
    pub mean_abs_delta_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub per_combination: Vec<CombinationBound>,
    pub global_max: f64,
    pub iterations: usize,
    pub n_per_class: usize,
    pub criterion_deltas: Vec<f64>,
    pub n_bins: usize,
    pub seed: u64,
}

fn equal_width_edges(x: &[f64], n_bins: usize) -> Option<Vec<f64>> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return None;
    }
    let w = (hi - lo) / n_bins as f64;
    let mut e: Vec<f64> = (0..n_bins).map(|k| lo + w * k as f64).collect();
    e.push(hi);
    Some(e)
}

fn auc_for(signal: &[f64], noise: &[f64], edges: &[f64]) -> Option<f64> {
    let k = edges.len() - 1;
    let mut s = vec![0u64; k];
    let mut n = vec![0u64; k];
    for &x in signal {
        s[roc::bin_index(edges, x)] += 1;
    }
    for &x in noise {
        n[roc::bin_index(edges, x)] += 1;
    }
    let r = roc::roc_from_counts(edges.to_vec(), s, n, Correction::HautusLoglinear).ok()?;
    roc::auc_trapezoid(&r).ok()
}

/// Monte Carlo bound on how far a pure criterion shift can move the
/// trapezoidal AUC.
///
/// Per iteration a baseline sample fixes 20 (by default) equal-width edges
/// and a baseline AUC. For each δ a fresh sample from the same
/// distributions is binned on the edges moved by δ, so only the threshold
/// sweep changes; ΔAUC is its AUC minus the baseline AUC. Iteration `i` of
/// combination `j` is seeded from `(seed, j, i)`.
pub fn derive_equivalence_bound(
    combinations: &[UvsdParams],
    criterion_deltas: &[f64],
    iterations: usize,
    n_per_class: usize,
    seed: u64,
    n_bins: usize,
) -> Result<BoundReport> {
    if combinations.is_empty() {
        return Err(SdtError::Config("no parameter combinations".into()));
    }
    if criterion_deltas.is_empty() || iterations == 0 || n_per_class < 2 || n_bins < 2 {
        return Err(SdtError::Config(
            "bounds need deltas, iterations >= 1, n_per_class >= 2 and n_bins >= 2".into(),
        ));
    }
    let per_combination = combinations
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let cseed = rng::derive_seed(seed, &format!("bound/{j}"));
            let mut deltas: Vec<f64> = (0..iterations)
                .into_par_iter()
                .flat_map_iter(|i| {
                    let mut rng = rng::stream(cseed, i as u64);
                    let sig: Vec<f64> = normals(&mut rng, n_per_class, p.mu, p.sigma_s).collect();
                    let noi: Vec<f64> = normals(&mut rng, n_per_class, 0.0, 1.0).collect();
                    let mut pooled = sig.clone();
                    pooled.extend_from_slice(&noi);
                    let edges = equal_width_edges(&pooled, n_bins);
                    let base = edges.as_ref().and_then(|e| auc_for(&sig, &noi, e));
                    let mut out = Vec::with_capacity(criterion_deltas.len());
                    if let (Some(edges), Some(base)) = (edges, base) {
                        for &d in criterion_deltas {
                            let s2: Vec<f64> = normals(&mut rng, n_per_class, p.mu, p.sigma_s).collect();
                            let n2: Vec<f64> = normals(&mut rng, n_per_class, 0.0, 1.0).collect();
                            let shifted: Vec<f64> = edges.iter().map(|e| e + d).collect();
                            if let Some(a) = auc_for(&s2, &n2, &shifted) {
                                out.push((a - base).abs());
                            }
                        }
                    }
                    out
                })
                .collect();
            if deltas.is_empty() {
                return Err(SdtError::InsufficientData(format!(
                    "no usable iterations for combination {j}"
                )));
            }
            deltas.sort_by(f64::total_cmp);
            let idx = ((0.95 * deltas.len() as f64).ceil() as usize).clamp(1, deltas.len()) - 1;
            Ok(CombinationBound {
                mu: p.mu,
                sigma_s: p.sigma_s,
                auc_analytic: p.auc(),
                max_delta_auc: *deltas.last().unwrap(),
                p95_delta_auc: deltas[idx],
                mean_abs_delta_auc: deltas.iter().sum::<f64>() / deltas.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let global_max = per_combination.iter().map(|c| c.max_delta_auc).fold(0.0, f64::max);
    Ok(BoundReport {
        per_combination,
        global_max,
        iterations,
        n_per_class,
        criterion_deltas: criterion_deltas.to_vec(),
        n_bins,
        seed,
    })
}

/// Summary of one (truth, n) cell of a recovery study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCell {
    pub mu: f64,
    pub sigma_s: f64,
    pub d_a: f64,
    pub n_per_class: usize,
    pub replications: usize,
    /// Replications whose fit converged with usable standard errors.
    pub n_fitted: usize,
    pub bias_mu: f64,
    pub bias_sigma_s: f64,
    pub bias_d_a: f64,
    pub rmse_mu: f64,
    pub rmse_sigma_s: f64,
    pub rmse_d_a: f64,
    /// Empirical coverage of the 95% Wald intervals.
    pub coverage_mu: f64,
    pub coverage_sigma_s: f64,
    pub coverage_d_a: f64,
    /// Mean fitted s = 1/σ_s.
    pub mean_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub cells: Vec<RecoveryCell>,
    pub n_bins: usize,
    pub seed: u64,
}

impl RecoveryReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Replicate {
    mu: f64,
    sigma_s: f64,
    d_a: f64,
    covers: [bool; 3],
}

fn replicate(truth: &UvsdParams, n: usize, seed: u64, n_bins: usize, opts: &FitOptions) -> Option<Replicate> {
    let spec = SimSpec::new(truth.clone(), n, n, seed);
    let trials = generate_trials(&spec).ok()?;
    let evidence: Vec<f64> = trials.iter().map(|t| t.evidence).collect();
    let edges = equal_width_edges(&evidence, n_bins)?;
    let r = roc::build_roc(&trials, &edges, Correction::HautusLoglinear).ok()?;
    let f = fit::fit_model(&r, SdtModel::Uvsd, opts).ok()?;
    if !f.converged {
        return None;
    }
    let se = f.standard_errors.as_ref()?;
    let z = crate::normal::quantile(0.975);
    let covers = |est: f64, se: f64, truth: f64| (est - truth).abs() <= z * se;
    Some(Replicate {
        mu: f.params.mu,
        sigma_s: f.params.sigma_s,
        d_a: f.d_a,
        covers: [
            covers(f.params.mu, se.mu, truth.mu),
            covers(f.params.sigma_s, se.sigma_s?, truth.sigma_s),
            covers(f.d_a, se.d_a, truth.d_a()),
        ],
    })
}

/// Bias, RMSE and Wald-interval coverage for every (truth, n) pair.
/// Replication `r` of cell `(j, k)` is seeded from `(seed, j, k, r)`.
pub fn recovery_study(
    truth_grid: &[UvsdParams],
    n_grid: &[usize],
    replications: usize,
    seed: u64,
    n_bins: usize,
) -> Result<RecoveryReport> {
    if truth_grid.is_empty() || n_grid.is_empty() || replications == 0 {
        return Err(SdtError::Config(
            "recovery needs a truth grid, an n grid and replications".into(),
        ));
    }
    let opts = FitOptions::default();
    let mut cells = Vec::new();
    for (j, truth) in truth_grid.iter().enumerate() {
        for (k, &n) in n_grid.iter().enumerate() {
            let cseed = rng::derive_seed(seed, &format!("recover/{j}/{k}"));
            let reps: Vec<Replicate> = (0..replications)
                .into_par_iter()
                .filter_map(|r| replicate(truth, n, rng::derive_seed(cseed, &r.to_string()), n_bins, &opts))
                .collect();
            let m = reps.len() as f64;
            let stats = |est: fn(&Replicate) -> f64, t: f64| {
                if reps.is_empty() {
                    return (f64::NAN, f64::NAN);
                }
                let bias = reps.iter().map(|r| est(r) - t).sum::<f64>() / m;
                let rmse = (reps.iter().map(|r| (est(r) - t).powi(2)).sum::<f64>() / m).sqrt();
                (bias, rmse)
            };
            let coverage = |i: usize| reps.iter().filter(|r| r.covers[i]).count() as f64 / m;
            let (bias_mu, rmse_mu) = stats(|r| r.mu, truth.mu);
            let (bias_sigma_s, rmse_sigma_s) = stats(|r| r.sigma_s, truth.sigma_s);
            let (bias_d_a, rmse_d_a) = stats(|r| r.d_a, truth.d_a());
            cells.push(RecoveryCell {
                mu: truth.mu,
                sigma_s: truth.sigma_s,
                d_a: truth.d_a(),
                n_per_class: n,
                replications,
                n_fitted: reps.len(),
                bias_mu,
                bias_sigma_s,
                bias_d_a,
                rmse_mu,
                rmse_sigma_s,
                rmse_d_a,
                coverage_mu: coverage(0),
                coverage_sigma_s: coverage(1),
                coverage_d_a: coverage(2),
                mean_slope: reps.iter().map(|r| 1.0 / r.sigma_s).sum::<f64>() / m,
            });
        }
    }
    Ok(RecoveryReport { cells, n_bins, seed })
}
