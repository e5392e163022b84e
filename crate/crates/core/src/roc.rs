//! Confidence-rating ROC construction.
//!
//! Evidence is cut into ordered bins; every interior bin edge acts as a
//! virtual criterion, giving one (false-alarm rate, hit rate) point per
//! edge. Rates are cumulative from the most conservative (highest) edge
//! downward, so they increase weakly along the sweep.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdtError};
use crate::ingest::{ConditionKey, TrialRecord};
use crate::normal;

/// Bins holding fewer trials than this are counted as sparse.
pub const SPARSE_BIN_THRESHOLD: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinKind {
    EqualWidth,
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScheme {
    pub kind: BinKind,
    pub n_bins: usize,
    /// Explicit ascending edges; overrides `kind` when present.
    pub edges: Option<Vec<f64>>,
    /// Condition whose evidence range fixes equal-width edges.
    pub reference_condition: Option<ConditionKey>,
}

impl Default for BinScheme {
    fn default() -> Self {
        Self {
            kind: BinKind::EqualWidth,
            n_bins: 20,
            edges: None,
            reference_condition: None,
        }
    }
}

impl BinScheme {
    pub fn equal_width(n_bins: usize) -> Self {
        Self {
            n_bins,
            ..Self::default()
        }
    }

    pub fn quantile(n_bins: usize) -> Self {
        Self {
            kind: BinKind::Quantile,
            n_bins,
            ..Self::default()
        }
    }

    pub fn with_reference(mut self, key: ConditionKey) -> Self {
        self.reference_condition = Some(key);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    /// Add 0.5 to each cumulative count and 1 to each class total.
    HautusLoglinear,
    None,
}

fn check_ascending(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(SdtError::Config("at least two bin edges are required".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SdtError::Config(
            "bin edges must be finite and strictly ascending".into(),
        ));
    }
    Ok(())
}

fn matches_reference(trial: &ConditionKey, reference: &ConditionKey) -> bool {
    if reference.domain.is_some() {
        trial == reference
    } else {
        trial.without_domain() == *reference
    }
}

/// Linear-interpolation sample quantile of sorted data.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bin edges (`n_bins + 1` values, both outer edges included).
pub fn make_bins(trials: &[TrialRecord], scheme: &BinScheme) -> Result<Vec<f64>> {
    if let Some(edges) = &scheme.edges {
        check_ascending(edges)?;
        return Ok(edges.clone());
    }
    if scheme.n_bins < 2 {
        return Err(SdtError::Config(format!(
            "n_bins must be at least 2, got {}",
            scheme.n_bins
        )));
    }
    if trials.is_empty() {
        return Err(SdtError::InsufficientData("no trials to bin".into()));
    }

    match scheme.kind {
        BinKind::EqualWidth => {
            let evidence: Vec<f64> = match &scheme.reference_condition {
                Some(reference) => trials
                    .iter()
                    .filter(|t| matches_reference(&t.condition, reference))
                    .map(|t| t.evidence)
                    .collect(),
                None => trials.iter().map(|t| t.evidence).collect(),
            };
            if evidence.is_empty() {
                return Err(SdtError::InsufficientData(format!(
                    "reference condition {} has no trials",
                    scheme
                        .reference_condition
                        .as_ref()
                        .expect("only a reference filter can empty the set")
                )));
            }
            let lo = evidence.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = evidence.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo >= hi {
                return Err(SdtError::DegenerateSupport(format!("all evidence equals {lo}")));
            }
            let width = (hi - lo) / scheme.n_bins as f64;
            let mut edges: Vec<f64> = (0..scheme.n_bins).map(|k| lo + width * k as f64).collect();
            edges.push(hi);
            Ok(edges)
        }
        BinKind::Quantile => {
            let mut sorted: Vec<f64> = trials.iter().map(|t| t.evidence).collect();
            sorted.sort_by(f64::total_cmp);
            let mut edges: Vec<f64> = (0..=scheme.n_bins)
                .map(|k| sorted_quantile(&sorted, k as f64 / scheme.n_bins as f64))
                .collect();
            edges.dedup();
            if edges.len() < 2 {
                return Err(SdtError::DegenerateSupport(format!(
                    "all evidence equals {}",
                    sorted[0]
                )));
            }
            Ok(edges)
        }
    }
}

/// Index of the bin holding `x`; values on an edge go to the higher bin and
/// values outside the outer edges go to the extreme bins.
pub fn bin_index(edges: &[f64], x: f64) -> usize {
    let interior = &edges[1..edges.len() - 1];
    interior.partition_point(|e| *e <= x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRoc {
    pub edges: Vec<f64>,
    /// Per-bin counts, lowest evidence first.
    pub signal_counts: Vec<u64>,
    pub noise_counts: Vec<u64>,
    /// Interior edges, most conservative (highest) first.
    pub criteria: Vec<f64>,
    /// Cumulative hit rates, one per entry of `criteria`.
    pub hit_rates: Vec<f64>,
    pub fa_rates: Vec<f64>,
    pub corrected: bool,
}

impl RatingRoc {
    pub fn n_bins(&self) -> usize {
        self.signal_counts.len()
    }

    pub fn n_signal(&self) -> u64 {
        self.signal_counts.iter().sum()
    }

    pub fn n_noise(&self) -> u64 {
        self.noise_counts.iter().sum()
    }

    /// `(far, hr)` pairs in criterion order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.fa_rates
            .iter()
            .copied()
            .zip(self.hit_rates.iter().copied())
            .collect()
    }

    /// Bins with fewer than [`SPARSE_BIN_THRESHOLD`] trials.
    pub fn sparse_bins(&self) -> usize {
        self.signal_counts
            .iter()
            .zip(&self.noise_counts)
            .filter(|(s, n)| *s + *n < SPARSE_BIN_THRESHOLD)
            .count()
    }

    /// Cumulative raw counts `(hits, false alarms)` per criterion.
    pub fn cumulative_counts(&self) -> Vec<(u64, u64)> {
        let k = self.n_bins();
        (1..k)
            .rev()
            .map(|c| {
                (
                    self.signal_counts[c..].iter().sum(),
                    self.noise_counts[c..].iter().sum(),
                )
            })
            .collect()
    }

    /// Index (into `criteria`) of the median interior edge, used for the
    /// headline criterion.
    pub fn median_criterion(&self) -> usize {
        self.criteria.len() / 2
    }

    /// Write the ROC table as CSV
    /// (`criterion_index,edge,hits,fas,hr,far,z_far,z_hr`).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["criterion_index", "edge", "hits", "fas", "hr", "far", "z_far", "z_hr"])?;
        for (i, (edge, (hits, fas))) in self.criteria.iter().zip(self.cumulative_counts()).enumerate() {
            let (hr, far) = (self.hit_rates[i], self.fa_rates[i]);
            w.write_record([
                i.to_string(),
                edge.to_string(),
                hits.to_string(),
                fas.to_string(),
                hr.to_string(),
                far.to_string(),
                normal::quantile(far).to_string(),
                normal::quantile(hr).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Count trials into bins and form cumulative hit / false-alarm rates.
pub fn build_roc(trials: &[TrialRecord], edges: &[f64], correction: Correction) -> Result<RatingRoc> {
    check_ascending(edges)?;
    let n_bins = edges.len() - 1;
    let mut signal_counts = vec![0u64; n_bins];
    let mut noise_counts = vec![0u64; n_bins];
    for t in trials {
        let b = bin_index(edges, t.evidence);
        if t.correct {
            signal_counts[b] += 1;
        } else {
            noise_counts[b] += 1;
        }
    }
    roc_from_counts(edges.to_vec(), signal_counts, noise_counts, correction)
}

/// Build a ROC from per-bin counts (lowest evidence bin first).
pub fn roc_from_counts(
    edges: Vec<f64>,
    signal_counts: Vec<u64>,
    noise_counts: Vec<u64>,
    correction: Correction,
) -> Result<RatingRoc> {
    if signal_counts.len() != noise_counts.len() || signal_counts.len() + 1 != edges.len() {
        return Err(SdtError::Mismatch("edge and count vectors disagree in length".into()));
    }
    let n_s: u64 = signal_counts.iter().sum();
    let n_n: u64 = noise_counts.iter().sum();
    if n_s == 0 || n_n == 0 {
        return Err(SdtError::InsufficientClass(format!(
            "{n_s} signal and {n_n} noise trials; both classes are required"
        )));
    }
    let (add, extra) = match correction {
        Correction::HautusLoglinear => (0.5, 1.0),
        Correction::None => (0.0, 0.0),
    };
    let k = signal_counts.len();
    let mut criteria = Vec::with_capacity(k - 1);
    let mut hit_rates = Vec::with_capacity(k - 1);
    let mut fa_rates = Vec::with_capacity(k - 1);
    let (mut hits, mut fas) = (0u64, 0u64);
    for c in (1..k).rev() {
        hits += signal_counts[c];
        fas += noise_counts[c];
        criteria.push(edges[c]);
        hit_rates.push((hits as f64 + add) / (n_s as f64 + extra));
        fa_rates.push((fas as f64 + add) / (n_n as f64 + extra));
    }
    Ok(RatingRoc {
        edges,
        signal_counts,
        noise_counts,
        criteria,
        hit_rates,
        fa_rates,
        corrected: correction == Correction::HautusLoglinear,
    })
}

/// Trapezoidal area under the ROC.
pub fn auc_trapezoid(roc: &RatingRoc) -> Result<f64> {
    auc_from_points(&roc.points())
}

/// Trapezoidal area under the piecewise-linear curve through (0,0), the
/// given `(far, hr)` points sorted by false-alarm rate, and (1,1).
pub fn auc_from_points(points: &[(f64, f64)]) -> Result<f64> {
    if points.is_empty() {
        return Err(SdtError::InsufficientPoints { needed: 1, found: 0 });
    }
    let mut pts = Vec::with_capacity(points.len() + 2);
    pts.push((0.0, 0.0));
    let mut interior = points.to_vec();
    interior.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.extend(interior);
    pts.push((1.0, 1.0));
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZRocFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(z_far, z_hit)` pairs used in the regression.
    pub points: Vec<(f64, f64)>,
}

pub fn zroc_fit(roc: &RatingRoc) -> Result<ZRocFit> {
    zroc_fit_points(&roc.points())
}

/// Ordinary least squares of z(HR) on z(FAR). Points with a rate at 0 or 1
/// are skipped.
pub fn zroc_fit_points(points: &[(f64, f64)]) -> Result<ZRocFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(f, h)| *f > 0.0 && *f < 1.0 && *h > 0.0 && *h < 1.0)
        .map(|&(f, h)| (normal::quantile(f), normal::quantile(h)))
        .collect();
    let n = usable.len();
    if n < 2 {
        return Err(SdtError::InsufficientPoints { needed: 2, found: n });
    }
    let nf = n as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * nf {
        return Err(SdtError::InsufficientPoints { needed: 2, found: 1 });
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ZRocFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: usable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(e: f64, correct: bool) -> TrialRecord {
        TrialRecord::new("t", ConditionKey::new("m", "d", 1.0), e, correct)
    }

    fn trials(evidence: &[f64]) -> Vec<TrialRecord> {
        evidence
            .iter()
            .enumerate()
            .map(|(i, &e)| trial(e, i % 2 == 0))
            .collect()
    }

    #[test]
    fn equal_width_edges() {
        let edges = make_bins(&trials(&[0.0, 1.0, 2.0, 3.0]), &BinScheme::equal_width(2)).unwrap();
        assert_eq!(edges, vec![0.0, 1.5, 3.0]);
    }

    #[test]
    fn quantile_edges_match_brute_force() {
        let data = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        // Oracle: position (n-1)·p in the sorted list, interpolated.
        // p = 1/3 -> 5/3 -> 1 + 2/3·(2 - 1); p = 2/3 -> 10/3 -> 2 + 1/3·(3 - 2).
        let edges = make_bins(&trials(&data), &BinScheme::quantile(3)).unwrap();
        let expected = [1.0, 1.0 + 2.0 / 3.0, 2.0 + 1.0 / 3.0, 3.0];
        assert_eq!(edges.len(), 4);
        for (a, b) in edges.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{edges:?}");
        }
    }

    #[test]
    fn constant_evidence_is_degenerate() {
        let t = trials(&[2.0; 6]);
        assert!(matches!(
            make_bins(&t, &BinScheme::equal_width(4)),
            Err(SdtError::DegenerateSupport(_))
        ));
        assert!(matches!(
            make_bins(&t, &BinScheme::quantile(4)),
            Err(SdtError::DegenerateSupport(_))
        ));
    }

    #[test]
    fn reference_condition_fixes_edges() {
        let mut t = trials(&[0.0, 4.0]);
        t.push(TrialRecord::new("x", ConditionKey::new("m", "d", 0.1), -10.0, true));
        let scheme = BinScheme::equal_width(2).with_reference(ConditionKey::new("m", "d", 1.0));
        assert_eq!(make_bins(&t, &scheme).unwrap(), vec![0.0, 2.0, 4.0]);
        let missing = BinScheme::equal_width(2).with_reference(ConditionKey::new("m", "d", 2.0));
        assert!(make_bins(&t, &missing).is_err());
    }

    #[test]
    fn rejects_bad_schemes() {
        assert!(make_bins(&trials(&[0.0, 1.0]), &BinScheme::equal_width(1)).is_err());
        let explicit = BinScheme {
            edges: Some(vec![0.0, 0.0, 1.0]),
            ..BinScheme::default()
        };
        assert!(make_bins(&trials(&[0.0, 1.0]), &explicit).is_err());
    }

    #[test]
    fn edge_values_go_to_higher_bin() {
        let edges = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(bin_index(&edges, 1.0), 1);
        assert_eq!(bin_index(&edges, 0.999), 0);
        assert_eq!(bin_index(&edges, 3.0), 2);
        assert_eq!(bin_index(&edges, -5.0), 0);
        assert_eq!(bin_index(&edges, 9.0), 2);
    }

    #[test]
    fn separated_classes_hand_counted() {
        // Cumulative table at the single criterion (edge 1.0): hits 10/10,
        // false alarms 0/10.
        let mut t: Vec<TrialRecord> = (0..10).map(|_| trial(1.5, true)).collect();
        t.extend((0..10).map(|_| trial(0.5, false)));
        let edges = [0.0, 1.0, 2.0];
        let raw = build_roc(&t, &edges, Correction::None).unwrap();
        assert_eq!(raw.points(), vec![(0.0, 1.0)]);
        let corrected = build_roc(&t, &edges, Correction::HautusLoglinear).unwrap();
        let (far, hr) = corrected.points()[0];
        assert!((hr - 10.5 / 11.0).abs() < 1e-15);
        assert!((far - 0.5 / 11.0).abs() < 1e-15);
        assert_eq!(corrected.n_signal(), 10);
        assert_eq!(corrected.n_noise(), 10);
    }

    #[test]
    fn identical_classes_give_chance_points() {
        let evidence: Vec<f64> = (0..50).map(|i| f64::from(i) / 10.0).collect();
        let mut t: Vec<TrialRecord> = evidence.iter().map(|&e| trial(e, true)).collect();
        t.extend(evidence.iter().map(|&e| trial(e, false)));
        let edges = make_bins(&t, &BinScheme::equal_width(5)).unwrap();
        let roc = build_roc(&t, &edges, Correction::HautusLoglinear).unwrap();
        for (far, hr) in roc.points() {
            assert!((far - hr).abs() < 1e-15);
        }
        assert!((auc_trapezoid(&roc).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_class_is_an_error() {
        let t: Vec<TrialRecord> = (0..4).map(|i| trial(f64::from(i), true)).collect();
        assert!(matches!(
            build_roc(&t, &[0.0, 1.0, 4.0], Correction::HautusLoglinear),
            Err(SdtError::InsufficientClass(_))
        ));
    }

    #[test]
    fn auc_reference_cases() {
        assert_eq!(auc_from_points(&[(0.5, 0.5)]).unwrap(), 0.5);
        assert_eq!(auc_from_points(&[(0.0, 1.0)]).unwrap(), 1.0);
        assert!(auc_from_points(&[]).is_err());
    }

    #[test]
    fn zroc_needs_two_points() {
        assert!(matches!(
            zroc_fit_points(&[(0.2, 0.4)]),
            Err(SdtError::InsufficientPoints { needed: 2, found: 1 })
        ));
        assert!(zroc_fit_points(&[(0.0, 0.4), (0.2, 1.0)]).is_err());
    }

    #[test]
    fn zroc_recovers_analytic_uvsd_slope() {
        // Exact UVSD points: HR = Φ((μ − c)/σ_s), FAR = Φ(−c); the z-ROC is
        // a line with slope 1/σ_s.
        let sigma = 1.0 / 0.78;
        let mu = 1.3;
        let pts: Vec<(f64, f64)> = [-1.5, -0.75, 0.0, 0.5, 1.2, 2.0]
            .iter()
            .map(|c| (normal::cdf(-c), normal::cdf((mu - c) / sigma)))
            .collect();
        let fit = zroc_fit_points(&pts).unwrap();
        assert!((fit.slope - 0.78).abs() < 1e-6, "{}", fit.slope);
        assert!((fit.intercept - mu / sigma).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_export_columns() {
        let t = vec![trial(0.2, false), trial(0.8, true), trial(1.8, true), trial(1.1, false)];
        let roc = build_roc(&t, &[0.0, 1.0, 2.0], Correction::HautusLoglinear).unwrap();
        let mut buf = Vec::new();
        roc.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "criterion_index,edge,hits,fas,hr,far,z_far,z_hr");
        assert!(lines.next().unwrap().starts_with("0,1,1,1,"));
    }
}
