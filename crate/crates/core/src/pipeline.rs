//! Full-condition analysis runs behind the `analyze` and `afc` commands.
//!
//! Trials are grouped by (model, dataset, temperature). Bin edges come
//! from each model/dataset family's reference temperature, or from the
//! family's pooled evidence when that temperature is absent, and are held
//! fixed across the family. Conditions are analysed in parallel; a failure
//! in one is recorded in its slot and never touches the others.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afc::{self, AfcResult};
use crate::config::RunConfig;
use crate::error::{Result, SdtError};
use crate::fit::{self, FitOptions, ModelComparison, OperatingPoint, SdtModel, UvsdFit};
use crate::ingest::{self, ConditionKey, InputFormat, TrialRecord};
use crate::rng;
use crate::roc::{self, Correction, RatingRoc, ZRocFit};
use crate::stats::{
    self, BlandAltman, BootstrapResult, CalibrationReport, ConfidenceSource, EquivalenceVerdict, SpearmanResult,
    StatPipeline, Statistic,
};

/// Restarts used for the per-resample refits inside the bootstrap.
pub const BOOTSTRAP_FIT_RESTARTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    BootstrapPercentile,
    PointOnly,
}

/// A point estimate with its 95% interval, or an explicit point-only marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub ci: Option<(f64, f64)>,
    pub interval: IntervalKind,
}

impl Estimate {
    fn point_only(point: f64) -> Self {
        Self {
            point,
            ci: None,
            interval: IntervalKind::PointOnly,
        }
    }

    fn from_bootstrap(b: &BootstrapResult) -> Self {
        Self {
            point: b.point,
            ci: Some((b.ci_low, b.ci_high)),
            interval: IntervalKind::BootstrapPercentile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdtSummary {
    pub auc: Estimate,
    pub d_a: Estimate,
    pub c: Estimate,
    pub zslope: Estimate,
    /// Variance ratio from the UVSD fit, 1/σ_s.
    pub s_fitted: f64,
    pub mu: f64,
    pub sigma_s: f64,
    pub d_a_wald_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_bins: usize,
    pub sparse_bins: usize,
    pub fit_converged: bool,
    pub gradient_max_abs: f64,
    /// Minimum over bootstrapped statistics; absent without bootstrap.
    pub bootstrap_convergence: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub key: ConditionKey,
    pub n_signal: u64,
    pub n_noise: u64,
    pub n_refusals: usize,
    pub summary: SdtSummary,
    pub operating_point: OperatingPoint,
    pub roc: RatingRoc,
    pub zroc: ZRocFit,
    pub uvsd: UvsdFit,
    pub evsd: Option<UvsdFit>,
    pub comparison: Option<ModelComparison>,
    pub calibration: Option<CalibrationReport>,
    pub confidence_source: ConfidenceSource,
    pub bootstrap: Vec<BootstrapResult>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOutcome {
    pub key: ConditionKey,
    pub report: Option<ConditionReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEdges {
    pub model: String,
    pub dataset: String,
    /// `"T=<t>"` for a reference temperature, `"pooled"` otherwise.
    pub source: String,
    pub edges: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub model: String,
    pub dataset: String,
    pub statistic: Statistic,
    pub temperatures: Vec<f64>,
    pub values: Vec<f64>,
    pub result: Option<SpearmanResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TostRow {
    pub model: String,
    pub dataset: String,
    pub temperature_a: f64,
    pub temperature_b: f64,
    pub result: Option<EquivalenceVerdict>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRow {
    pub key: ConditionKey,
    pub n_signal: u64,
    pub n_noise: u64,
    pub auc: Option<f64>,
    pub d_a: Option<f64>,
    pub error: Option<String>,
}

/// Settings echoed into the report so a JSON file documents its own run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub bins: usize,
    pub bin_kind: roc::BinKind,
    pub correction: Correction,
    pub boot: usize,
    pub seed: u64,
    pub equiv_bound: f64,
    pub ece_bins: usize,
    pub restarts: usize,
    pub reference_temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub settings: RunSettings,
    pub edges: Vec<FamilyEdges>,
    pub conditions: Vec<ConditionOutcome>,
    pub trends: Vec<TrendRow>,
    pub tost: Vec<TostRow>,
    pub domains: Vec<DomainRow>,
}

impl AnalysisReport {
    pub fn n_failed(&self) -> usize {
        self.conditions.iter().filter(|c| c.report.is_none()).count()
    }

    pub fn reports(&self) -> impl Iterator<Item = &ConditionReport> {
        self.conditions.iter().filter_map(|c| c.report.as_ref())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

type Family = (String, String);

fn family_of(k: &ConditionKey) -> Family {
    (k.model.clone(), k.dataset.clone())
}

/// Read every input file and concatenate the trials in file order.
pub fn load_trials(cfg: &RunConfig) -> Result<Vec<TrialRecord>> {
    let mut all = Vec::new();
    for p in &cfg.inputs {
        let format = InputFormat::from_path(p)?;
        all.extend(ingest::ingest_trials(p, format, &cfg.scoring)?);
    }
    Ok(all)
}

fn family_edges(family: &Family, trials: &[&TrialRecord], cfg: &RunConfig) -> Result<FamilyEdges> {
    let at_ref: Vec<TrialRecord> = trials
        .iter()
        .filter(|t| t.condition.temperature == cfg.reference_temperature)
        .map(|t| (*t).clone())
        .collect();
    let (source, basis) = if at_ref.is_empty() {
        ("pooled".to_string(), trials.iter().map(|t| (*t).clone()).collect())
    } else {
        (format!("T={}", cfg.reference_temperature), at_ref)
    };
    let edges = roc::make_bins(&basis, &cfg.bin_scheme())?;
    info!("{}/{}: bin edges from {}", family.0, family.1, source);
    Ok(FamilyEdges {
        model: family.0.clone(),
        dataset: family.1.clone(),
        source,
        edges,
    })
}

fn fit_options(cfg: &RunConfig, key: &ConditionKey, seed: u64) -> FitOptions {
    FitOptions {
        restarts: cfg.restarts,
        seed: rng::derive_seed(seed, &format!("fit/{}", key.slug())),
        ..FitOptions::default()
    }
}

fn stat_pipeline(edges: &[f64], cfg: &RunConfig, key: &ConditionKey, seed: u64) -> StatPipeline {
    let mut p = StatPipeline::new(edges.to_vec(), cfg.correction);
    p.fit.restarts = BOOTSTRAP_FIT_RESTARTS.min(cfg.restarts);
    p.fit.seed = rng::derive_seed(seed, &format!("bootfit/{}", key.slug()));
    p
}

fn analyze_condition(
    key: &ConditionKey,
    trials: &[TrialRecord],
    edges: &[f64],
    cfg: &RunConfig,
    seed: u64,
) -> Result<ConditionReport> {
    let mut warnings = Vec::new();
    let roc = roc::build_roc(trials, edges, cfg.correction)?;
    let auc = roc::auc_trapezoid(&roc)?;
    let zroc = roc::zroc_fit(&roc)?;
    let opts = fit_options(cfg, key, seed);
    let uvsd = fit::fit_model(&roc, SdtModel::Uvsd, &opts)?;
    let d_a = fit::d_a_from_fit(&uvsd)?;
    let (evsd, comparison) = match fit::fit_model(
        &roc,
        SdtModel::Evsd,
        &FitOptions {
            standard_errors: false,
            ..opts
        },
    ) {
        Ok(e) => {
            let cmp = fit::compare_models(&uvsd, &e).ok();
            (Some(e), cmp)
        }
        Err(e) => {
            warnings.push(format!("EVSD fit failed: {e}"));
            (None, None)
        }
    };
    let op = fit::headline_operating_point(&roc, d_a)?;

    let (conf, confidence_source) = stats::confidence_for(trials);
    let correct: Vec<bool> = trials.iter().map(|t| t.correct).collect();
    let calibration = match stats::calibration_metrics(&conf, &correct, cfg.ece_bins) {
        Ok(c) => Some(c),
        Err(e) => {
            warnings.push(format!("calibration failed: {e}"));
            None
        }
    };

    let mut summary = SdtSummary {
        auc: Estimate::point_only(auc),
        d_a: Estimate::point_only(d_a),
        c: Estimate::point_only(op.c),
        zslope: Estimate::point_only(zroc.slope),
        s_fitted: uvsd.params.s(),
        mu: uvsd.params.mu,
        sigma_s: uvsd.params.sigma_s,
        d_a_wald_ci: uvsd.d_a_wald_ci(0.95),
    };
    let mut bootstrap = Vec::new();
    let mut bootstrap_convergence = None;
    if cfg.boot > 0 {
        let pipeline = stat_pipeline(edges, cfg, key, seed);
        let bseed = rng::derive_seed(seed, &format!("boot/{}", key.slug()));
        bootstrap = stats::bootstrap_many(trials, &Statistic::ALL, cfg.boot, bseed, 0.95, &pipeline)?;
        for b in &bootstrap {
            let est = Estimate::from_bootstrap(b);
            match b.statistic {
                Statistic::Auc => summary.auc = est,
                Statistic::DA => summary.d_a = Estimate { point: d_a, ..est },
                Statistic::C => summary.c = est,
                Statistic::ZSlope => summary.zslope = est,
            }
            if b.convergence_fraction() < stats::CONVERGENCE_WARNING {
                warnings.push(format!(
                    "{} bootstrap convergence {:.4}",
                    b.statistic.name(),
                    b.convergence_fraction()
                ));
            }
        }
        bootstrap_convergence = bootstrap.iter().map(|b| b.convergence_fraction()).reduce(f64::min);
    }
    let sparse = roc.sparse_bins();
    if sparse > 0 {
        warnings.push(format!(
            "{sparse} of {} bins hold fewer than {} trials",
            roc.n_bins(),
            roc::SPARSE_BIN_THRESHOLD
        ));
    }
    for w in &warnings {
        warn!("{key}: {w}");
    }
    Ok(ConditionReport {
        key: key.clone(),
        n_signal: roc.n_signal(),
        n_noise: roc.n_noise(),
        n_refusals: trials.iter().filter(|t| t.refusal).count(),
        summary,
        operating_point: op,
        diagnostics: Diagnostics {
            n_bins: roc.n_bins(),
            sparse_bins: sparse,
            fit_converged: uvsd.converged,
            gradient_max_abs: uvsd.gradient_max_abs,
            bootstrap_convergence,
            warnings,
        },
        roc,
        zroc,
        uvsd,
        evsd,
        comparison,
        calibration,
        confidence_source,
        bootstrap,
    })
}

fn trend_rows(family: &Family, reports: &[&ConditionReport]) -> Vec<TrendRow> {
    let temps: Vec<f64> = reports.iter().map(|r| r.key.temperature).collect();
    Statistic::ALL
        .iter()
        .map(|&stat| {
            let values: Vec<f64> = reports
                .iter()
                .map(|r| match stat {
                    Statistic::Auc => r.summary.auc.point,
                    Statistic::DA => r.summary.d_a.point,
                    Statistic::C => r.summary.c.point,
                    Statistic::ZSlope => r.summary.zslope.point,
                })
                .collect();
            let (result, error) = match stats::spearman_trend(&temps, &values) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            TrendRow {
                model: family.0.clone(),
                dataset: family.1.clone(),
                statistic: stat,
                temperatures: temps.clone(),
                values,
                result,
                error,
            }
        })
        .collect()
}

fn domain_rows(trials: &[TrialRecord], edges: &BTreeMap<Family, FamilyEdges>, cfg: &RunConfig) -> Vec<DomainRow> {
    let mut groups: BTreeMap<ConditionKey, Vec<TrialRecord>> = BTreeMap::new();
    for t in trials.iter().filter(|t| t.condition.domain.is_some()) {
        groups.entry(t.condition.clone()).or_default().push(t.clone());
    }
    let seed = cfg.seed.unwrap_or_default();
    groups
        .into_par_iter()
        .map(|(key, ts)| {
            let n_signal = ts.iter().filter(|t| t.correct).count() as u64;
            let n_noise = ts.len() as u64 - n_signal;
            let result = (|| -> Result<(f64, f64)> {
                let fe = edges
                    .get(&family_of(&key))
                    .ok_or_else(|| SdtError::InsufficientData("family has no bin edges".into()))?;
                let roc = roc::build_roc(&ts, &fe.edges, cfg.correction)?;
                let auc = roc::auc_trapezoid(&roc)?;
                let f = fit::fit_model(
                    &roc,
                    SdtModel::Uvsd,
                    &FitOptions {
                        standard_errors: false,
                        ..fit_options(cfg, &key, seed)
                    },
                )?;
                Ok((auc, fit::d_a_from_fit(&f)?))
            })();
            let (auc, d_a, error) = match result {
                Ok((a, d)) => (Some(a), Some(d), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            DomainRow {
                key,
                n_signal,
                n_noise,
                auc,
                d_a,
                error,
            }
        })
        .collect()
}

/// Analyse already-ingested trials.
pub fn analyze_trials(trials: &[TrialRecord], cfg: &RunConfig) -> Result<AnalysisReport> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    if trials.is_empty() {
        return Err(SdtError::InsufficientData("no trials to analyse".into()));
    }

    let mut conditions: BTreeMap<ConditionKey, Vec<TrialRecord>> = BTreeMap::new();
    for t in trials {
        conditions
            .entry(t.condition.without_domain())
            .or_default()
            .push(t.clone());
    }
    let mut families: BTreeMap<Family, Vec<&TrialRecord>> = BTreeMap::new();
    for t in trials {
        families.entry(family_of(&t.condition)).or_default().push(t);
    }
    let mut edges: BTreeMap<Family, FamilyEdges> = BTreeMap::new();
    let mut edge_errors: BTreeMap<Family, String> = BTreeMap::new();
    for (fam, ts) in &families {
        match family_edges(fam, ts, cfg) {
            Ok(e) => {
                edges.insert(fam.clone(), e);
            }
            Err(e) => {
                edge_errors.insert(fam.clone(), format!("bin edges: {e}"));
            }
        }
    }

    let outcomes: Vec<ConditionOutcome> = conditions
        .par_iter()
        .map(|(key, ts)| {
            let fam = family_of(key);
            let result = match edges.get(&fam) {
                Some(fe) => analyze_condition(key, ts, &fe.edges, cfg, seed).map_err(|e| e.to_string()),
                None => Err(edge_errors[&fam].clone()),
            };
            match result {
                Ok(r) => ConditionOutcome {
                    key: key.clone(),
                    report: Some(r),
                    error: None,
                },
                Err(e) => {
                    warn!("{key}: analysis failed: {e}");
                    ConditionOutcome {
                        key: key.clone(),
                        report: None,
                        error: Some(e),
                    }
                }
            }
        })
        .collect();

    let mut by_family: BTreeMap<Family, Vec<&ConditionReport>> = BTreeMap::new();
    for r in outcomes.iter().filter_map(|o| o.report.as_ref()) {
        by_family.entry(family_of(&r.key)).or_default().push(r);
    }
    // Rank trends need at least three temperatures.
    let trends: Vec<TrendRow> = by_family
        .iter()
        .filter(|(_, rs)| rs.len() >= 3)
        .flat_map(|(fam, rs)| trend_rows(fam, rs))
        .collect();

    let mut pairs: Vec<(Family, f64, f64)> = Vec::new();
    for (fam, keys) in conditions.keys().fold(BTreeMap::<Family, Vec<f64>>::new(), |mut m, k| {
        m.entry(family_of(k)).or_default().push(k.temperature);
        m
    }) {
        if cfg.tost_pairs.is_empty() {
            if keys.len() >= 2 {
                pairs.push((fam, keys[0], keys[keys.len() - 1]));
            }
        } else {
            for [a, b] in &cfg.tost_pairs {
                if keys.contains(a) && keys.contains(b) {
                    pairs.push((fam.clone(), *a, *b));
                }
            }
        }
    }
    let tost: Vec<TostRow> = pairs
        .par_iter()
        .map(|(fam, ta, tb)| {
            let key_a = ConditionKey::new(fam.0.clone(), fam.1.clone(), *ta);
            let key_b = ConditionKey::new(fam.0.clone(), fam.1.clone(), *tb);
            let result = (|| -> Result<EquivalenceVerdict> {
                if cfg.boot == 0 {
                    return Err(SdtError::Config(
                        "equivalence tests need bootstrap resamples (boot > 0)".into(),
                    ));
                }
                let fe = edges
                    .get(fam)
                    .ok_or_else(|| SdtError::InsufficientData(edge_errors[fam].clone()))?;
                let pipeline = StatPipeline::new(fe.edges.clone(), cfg.correction);
                let tseed = rng::derive_seed(seed, &format!("tost/{}/{}", key_a.slug(), key_b.slug()));
                stats::tost_auc(
                    &conditions[&key_a],
                    &conditions[&key_b],
                    cfg.equiv_bound,
                    cfg.boot,
                    tseed,
                    &pipeline,
                )
            })();
            let (result, error) = match result {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            TostRow {
                model: fam.0.clone(),
                dataset: fam.1.clone(),
                temperature_a: *ta,
                temperature_b: *tb,
                result,
                error,
            }
        })
        .collect();

    let domains = domain_rows(trials, &edges, cfg);

    Ok(AnalysisReport {
        settings: RunSettings {
            bins: cfg.bins,
            bin_kind: cfg.bin_kind,
            correction: cfg.correction,
            boot: cfg.boot,
            seed,
            equiv_bound: cfg.equiv_bound,
            ece_bins: cfg.ece_bins,
            restarts: cfg.restarts,
            reference_temperature: cfg.reference_temperature,
        },
        edges: edges.into_values().collect(),
        conditions: outcomes,
        trends,
        tost,
        domains,
    })
}

/// Run `f` on a pool with the configured worker count.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SdtError::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Ingest the configured inputs, analyse, and write the output bundle.
pub fn run_analyze(cfg: &RunConfig) -> Result<AnalysisReport> {
    cfg.validate_inputs()?;
    cfg.require_seed()?;
    let trials = load_trials(cfg)?;
    let report = with_workers(cfg.workers, || analyze_trials(&trials, cfg))??;
    write_analysis(&report, &cfg.out)?;
    Ok(report)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// `report.json` plus per-condition ROC and reliability CSVs.
pub fn write_analysis(report: &AnalysisReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut f = create(&out.join("report.json"))?;
    f.write_all(report.to_json()?.as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    for r in report.reports() {
        let dir = out.join("conditions").join(r.key.slug());
        r.roc.write_csv(create(&dir.join("roc.csv"))?)?;
        if let Some(c) = &r.calibration {
            c.write_csv(create(&dir.join("reliability.csv"))?)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfcRow {
    pub domain: String,
    pub result: AfcResult,
    pub d_a: Option<f64>,
    /// d' − d_a.
    pub delta: Option<f64>,
    pub convergent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfcReport {
    pub m: u32,
    pub convergence_bound: f64,
    pub pooled: AfcResult,
    pub rows: Vec<AfcRow>,
    pub bland_altman: Option<BlandAltman>,
}

#[derive(Debug, Deserialize)]
struct AfcTrialRow {
    #[serde(default)]
    domain: Option<String>,
    correct: bool,
}

#[derive(Debug, Deserialize)]
struct DaRow {
    domain: String,
    d_a: f64,
}

/// Per-domain correct/total counts from a forced-choice outcome file
/// (`correct` plus optional `domain` per row).
pub fn read_afc_counts(path: &Path) -> Result<BTreeMap<String, (u64, u64)>> {
    let rows: Vec<(usize, AfcTrialRow)> = match InputFormat::from_path(path)? {
        InputFormat::Jsonl => {
            let text = fs::read_to_string(path)?;
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str(l)
                        .map(|r| (i + 1, r))
                        .map_err(|e| SdtError::Parse {
                            path: path.to_path_buf(),
                            line: i + 1,
                            message: e.to_string(),
                        })
                })
                .collect::<Result<_>>()?
        }
        InputFormat::Csv => {
            let mut rdr = csv::Reader::from_path(path)?;
            rdr.deserialize()
                .enumerate()
                .map(|(i, r)| {
                    r.map(|r| (i + 2, r)).map_err(|e| SdtError::Parse {
                        path: path.to_path_buf(),
                        line: i + 2,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    if rows.is_empty() {
        return Err(SdtError::InsufficientData(format!(
            "{} has no outcomes",
            path.display()
        )));
    }
    let mut counts = BTreeMap::new();
    for (_, r) in rows {
        let e = counts
            .entry(r.domain.unwrap_or_else(|| "all".into()))
            .or_insert((0u64, 0u64));
        e.0 += u64::from(r.correct);
        e.1 += 1;
    }
    Ok(counts)
}

pub fn read_da_table(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, r) in rdr.deserialize::<DaRow>().enumerate() {
        let r = r.map_err(|e| SdtError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        out.insert(r.domain, r.d_a);
    }
    Ok(out)
}

/// Forced-choice d' per domain and pooled, compared with supplied d_a.
pub fn analyze_afc(
    counts: &BTreeMap<String, (u64, u64)>,
    da: &BTreeMap<String, f64>,
    m: u32,
    correct_boundaries: bool,
    convergence_bound: f64,
) -> Result<AfcReport> {
    let (c, n) = counts.values().fold((0, 0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    let pooled = afc::afc_from_counts(c, n, m, correct_boundaries)?;
    let mut rows = Vec::new();
    for (domain, &(c, n)) in counts {
        let result = afc::afc_from_counts(c, n, m, correct_boundaries)?;
        if result.corrected {
            warn!("{domain}: {c}/{n} correct is at a boundary; applied the 1/(2N) correction");
        }
        let d_a = da.get(domain).copied();
        let delta = d_a.map(|d| result.d_prime - d);
        rows.push(AfcRow {
            domain: domain.clone(),
            convergent: delta.map(|d| d.abs() <= convergence_bound),
            result,
            d_a,
            delta,
        });
    }
    let (dp, dv): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| Some((r.d_a?, r.result.d_prime))).unzip();
    let bland_altman = if dp.len() >= 2 {
        Some(stats::bland_altman(&dp, &dv)?)
    } else {
        None
    };
    Ok(AfcReport {
        m,
        convergence_bound,
        pooled,
        rows,
        bland_altman,
    })
}
