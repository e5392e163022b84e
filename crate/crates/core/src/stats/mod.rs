//! Inferential layer over the ROC and fit machinery.

mod agreement;
mod bootstrap;
mod calibration;
mod trend;

pub use agreement::{bland_altman, BlandAltman};
pub use bootstrap::{
    bootstrap_ci, bootstrap_many, percentile_interval, tost_auc, BootstrapResult, EquivalenceVerdict, StatPipeline,
    Statistic, Verdict, CONVERGENCE_FAILURE, CONVERGENCE_WARNING,
};
pub use calibration::{
    calibration_metrics, confidence_for, CalibrationReport, ConfidenceSource, ReliabilityBin, DEFAULT_ECE_BINS,
};
pub use trend::{spearman_trend, PValueMethod, SpearmanResult};

/// Mean with a compensation pass; constant inputs return their value exactly.
pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.iter().all(|v| *v == x[0]) {
        return x[0];
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    m + x.iter().map(|v| v - m).sum::<f64>() / n
}

/// Unbiased sample variance around [`mean`].
pub(crate) fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}
