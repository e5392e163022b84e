//! Expected calibration error, Brier score and its decomposition.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{mean, sample_variance};
use crate::error::{Result, SdtError};
use crate::ingest::TrialRecord;

pub const DEFAULT_ECE_BINS: usize = 15;

/// Where per-trial confidence values came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSource {
    /// Softmax probability recorded with each trial.
    Recorded,
    /// Logistic of the z-scored evidence within the condition (derived).
    LogisticEvidence,
}

/// Per-trial confidence: recorded values when every trial has one,
/// otherwise the logistic transform of standardised evidence.
pub fn confidence_for(trials: &[TrialRecord]) -> (Vec<f64>, ConfidenceSource) {
    if !trials.is_empty() && trials.iter().all(|t| t.confidence.is_some()) {
        return (
            trials.iter().map(|t| t.confidence.unwrap()).collect(),
            ConfidenceSource::Recorded,
        );
    }
    let ev: Vec<f64> = trials.iter().map(|t| t.evidence).collect();
    let (m, sd) = if ev.len() >= 2 {
        (mean(&ev), sample_variance(&ev).sqrt())
    } else {
        (0.0, 0.0)
    };
    let conf = ev
        .iter()
        .map(|e| {
            let z = if sd > 0.0 { (e - m) / sd } else { 0.0 };
            1.0 / (1.0 + (-z).exp())
        })
        .collect();
    (conf, ConfidenceSource::LogisticEvidence)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub confidence_mean: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// Calibration summary. With `f` the confidence, `o` the outcome and bars
/// denoting bin means, the Brier score splits exactly as
/// `brier = reliability − resolution + uncertainty + within_bin_variance − 2·within_bin_covariance`.
/// The last two terms vanish when confidence is constant inside each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub brier: f64,
    pub n_bins: usize,
    pub n: usize,
    pub reliability: f64,
    pub resolution: f64,
    pub uncertainty: f64,
    pub within_bin_variance: f64,
    pub within_bin_covariance: f64,
    /// Non-empty bins only, in increasing confidence order.
    pub reliability_diagram: Vec<ReliabilityBin>,
}

impl CalibrationReport {
    /// Right-hand side of the Brier decomposition.
    pub fn decomposed_brier(&self) -> f64 {
        self.reliability - self.resolution + self.uncertainty + self.within_bin_variance
            - 2.0 * self.within_bin_covariance
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lower", "upper", "confidence_mean", "accuracy", "count"])?;
        for b in &self.reliability_diagram {
            w.write_record([
                b.lower.to_string(),
                b.upper.to_string(),
                b.confidence_mean.to_string(),
                b.accuracy.to_string(),
                b.count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn calibration_metrics(confidence: &[f64], correct: &[bool], n_bins: usize) -> Result<CalibrationReport> {
    if confidence.len() != correct.len() {
        return Err(SdtError::Mismatch(format!(
            "{} confidences vs {} outcomes",
            confidence.len(),
            correct.len()
        )));
    }
    if confidence.is_empty() {
        return Err(SdtError::InsufficientData(
            "calibration needs at least one trial".into(),
        ));
    }
    if n_bins == 0 {
        return Err(SdtError::Config("ECE needs at least one bin".into()));
    }
    if let Some(c) = confidence.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(SdtError::Domain(format!("confidence {c} outside [0, 1]")));
    }
    let n = confidence.len();
    let nf = n as f64;
    let o: Vec<f64> = correct.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, &c) in confidence.iter().enumerate() {
        members[((c * n_bins as f64) as usize).min(n_bins - 1)].push(i);
    }

    let o_bar = o.iter().sum::<f64>() / nf;
    let brier = confidence.iter().zip(&o).map(|(f, o)| (f - o).powi(2)).sum::<f64>() / nf;
    let (mut ece, mut rel, mut res, mut wbv, mut wbc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut diagram = Vec::new();
    for (b, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let nb = idx.len() as f64;
        let f: Vec<f64> = idx.iter().map(|&i| confidence[i]).collect();
        let f_b = mean(&f);
        let o_b = idx.iter().map(|&i| o[i]).sum::<f64>() / nb;
        let w = nb / nf;
        ece += w * (o_b - f_b).abs();
        rel += w * (f_b - o_b).powi(2);
        res += w * (o_b - o_bar).powi(2);
        for &i in idx {
            wbv += (confidence[i] - f_b).powi(2) / nf;
            wbc += (confidence[i] - f_b) * (o[i] - o_b) / nf;
        }
        diagram.push(ReliabilityBin {
            lower: b as f64 / n_bins as f64,
            upper: (b + 1) as f64 / n_bins as f64,
            confidence_mean: f_b,
            accuracy: o_b,
            count: idx.len(),
        });
    }
    Ok(CalibrationReport {
        ece,
        brier,
        n_bins,
        n,
        reliability: rel,
        resolution: res,
        uncertainty: o_bar * (1.0 - o_bar),
        within_bin_variance: wbv,
        within_bin_covariance: wbc,
        reliability_diagram: diagram,
    })
}
