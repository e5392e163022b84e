//! Bland–Altman agreement between two paired measurement vectors.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{mean, sample_variance};
use crate::error::{Result, SdtError};

pub const LOA_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    /// Mean of `a − b`.
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Per-pair `(mean, diff)` for plotting.
    pub pairs: Vec<(f64, f64)>,
}

impl BlandAltman {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["pair_mean", "diff"])?;
        for (m, d) in &self.pairs {
            w.write_record([m.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman> {
    if a.len() != b.len() {
        return Err(SdtError::Mismatch(format!(
            "lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(SdtError::InsufficientData("Bland-Altman needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = mean(&diffs);
    let sd_diff = if diffs.iter().all(|d| *d == diffs[0]) {
        0.0
    } else {
        sample_variance(&diffs).sqrt()
    };
    Ok(BlandAltman {
        mean_diff,
        sd_diff,
        loa_low: mean_diff - LOA_Z * sd_diff,
        loa_high: mean_diff + LOA_Z * sd_diff,
        pairs: a
            .iter()
            .zip(b)
            .zip(&diffs)
            .map(|((x, y), d)| ((x + y) / 2.0, *d))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_vectors() {
        let a = [1.2, 3.4, 0.7];
        let r = bland_altman(&a, &a).unwrap();
        assert_eq!((r.mean_diff, r.loa_low, r.loa_high), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_offset_is_exact() {
        let a = [0.5, 1.25, 2.0, 3.75, -7.5];
        let b: Vec<f64> = a.iter().map(|v| v + 1.875).collect();
        let r = bland_altman(&a, &b).unwrap();
        assert_eq!(r.mean_diff, -1.875);
        assert_eq!((r.loa_low, r.loa_high), (-1.875, -1.875));
    }

    #[test]
    fn non_dyadic_offset() {
        let a = [0.5, 1.25, 2.0, 3.75];
        let b: Vec<f64> = a.iter().map(|v| v + 1.9).collect();
        let r = bland_altman(&a, &b).unwrap();
        assert!((r.mean_diff + 1.9).abs() < 1e-14);
        assert!(r.loa_high - r.loa_low < 1e-14);
    }

    #[test]
    fn limits_match_direct_moments() {
        let mut rng = crate::rng::stream(42, 0);
        let a: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 4.0).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 4.0).collect();
        let r = bland_altman(&a, &b).unwrap();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let n = d.len() as f64;
        let m = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|v| v * v).sum::<f64>() / n - m * m).sqrt() * (n / (n - 1.0)).sqrt();
        assert!((r.mean_diff - m).abs() < 1e-12);
        assert!((r.loa_high - (m + 1.96 * sd)).abs() < 1e-10);
        assert!((r.loa_low - (m - 1.96 * sd)).abs() < 1e-10);
    }

    #[test]
    fn errors() {
        assert!(bland_altman(&[1.0], &[1.0]).is_err());
        assert!(bland_altman(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_pair() {
        let r = bland_altman(&[1.0, 2.0, 3.0], &[1.5, 2.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert!(s.starts_with("pair_mean,diff\n1.25,-0.5\n"));
    }
}
