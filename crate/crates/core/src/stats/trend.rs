//! Spearman rank correlation for trends across temperature.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Result, SdtError};

/// Largest n for which p is computed by enumerating all permutations.
pub const EXACT_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    ExactPermutation,
    TApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub n: usize,
    /// P(|ρ*| ≥ |ρ|) under the null.
    pub p_two_sided: f64,
    /// P(ρ* ≥ ρ) for ρ ≥ 0, P(ρ* ≤ ρ) otherwise.
    pub p_one_sided: f64,
    pub method: PValueMethod,
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub(crate) fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Visit every permutation of `v` (Heap's algorithm, iterative).
fn for_each_permutation(v: &mut [f64], mut f: impl FnMut(&[f64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            f(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

pub fn spearman_trend(xs: &[f64], ys: &[f64]) -> Result<SpearmanResult> {
    if xs.len() != ys.len() {
        return Err(SdtError::Mismatch(format!(
            "lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 3 {
        return Err(SdtError::InsufficientData(format!(
            "Spearman needs at least 3 pairs, got {n}"
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(SdtError::Domain("non-finite value in trend input".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let constant = |r: &[f64]| r.iter().all(|v| *v == r[0]);
    if constant(&rx) || constant(&ry) {
        return Err(SdtError::UndefinedCorrelation(
            "a constant vector has no ranks to correlate".into(),
        ));
    }
    let rho = pearson(&rx, &ry);
    // Exact-equality comparisons need slack for rounding in the statistic.
    let eps = 1e-12;

    if n <= EXACT_MAX_N {
        let mut perm = ry.clone();
        let (mut total, mut two, mut one) = (0u64, 0u64, 0u64);
        for_each_permutation(&mut perm, |p| {
            let r = pearson(&rx, p);
            total += 1;
            if r.abs() >= rho.abs() - eps {
                two += 1;
            }
            if (rho >= 0.0 && r >= rho - eps) || (rho < 0.0 && r <= rho + eps) {
                one += 1;
            }
        });
        return Ok(SpearmanResult {
            rho,
            n,
            p_two_sided: two as f64 / total as f64,
            p_one_sided: one as f64 / total as f64,
            method: PValueMethod::ExactPermutation,
        });
    }

    let df = (n - 2) as f64;
    let (p_two_sided, p_one_sided) = if rho.abs() >= 1.0 {
        (0.0, 0.0)
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| SdtError::Domain(e.to_string()))?;
        let upper = dist.sf(t.abs());
        ((2.0 * upper).min(1.0), upper)
    };
    Ok(SpearmanResult {
        rho,
        n,
        p_two_sided,
        p_one_sided,
        method: PValueMethod::TApproximation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TEMPS: [f64; 7] = [0.1, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0];

    #[test]
    fn monotone_extremes() {
        let up: Vec<f64> = TEMPS.iter().map(|t| t * t).collect();
        let r = spearman_trend(&TEMPS, &up).unwrap();
        assert_eq!(r.rho, 1.0);
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        assert_eq!(spearman_trend(&TEMPS, &down).unwrap().rho, -1.0);
    }

    #[test]
    fn exact_p_for_perfect_rank_agreement() {
        let r = spearman_trend(&TEMPS, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        assert_eq!(r.method, PValueMethod::ExactPermutation);
        // Only the identity and the reversal reach |ρ| = 1 among 7! orderings.
        assert_eq!(r.p_two_sided, 2.0 / 5040.0);
        assert_eq!(r.p_one_sided, 1.0 / 5040.0);
    }

    #[test]
    fn exact_p_matches_brute_force_oracle() {
        // Oracle: Σd² statistic over explicitly listed permutations of 0..5.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        let d2 = |p: &[usize]| {
            p.iter()
                .enumerate()
                .map(|(i, &v)| ((i as i64 - v as i64).pow(2)) as u64)
                .sum::<u64>()
        };
        let observed = d2(&[1, 0, 3, 2, 4]);
        let mut count = 0;
        let mut all = 0;
        let mut p = [0usize, 1, 2, 3, 4];
        loop {
            all += 1;
            // ρ = 1 − 6Σd²/(n(n²−1)); symmetric around Σd² = 20.
            if (d2(&p) as i64 - 20).abs() >= (observed as i64 - 20).abs() {
                count += 1;
            }
            // next lexicographic permutation
            let Some(i) = (0..4).rev().find(|&i| p[i] < p[i + 1]) else {
                break;
            };
            let j = (i + 1..5).rev().find(|&j| p[j] > p[i]).unwrap();
            p.swap(i, j);
            p[i + 1..].reverse();
        }
        assert_eq!(all, 120);
        let r = spearman_trend(&x, &y).unwrap();
        assert!((r.rho - 0.8).abs() < 1e-12);
        assert_eq!(r.p_two_sided, count as f64 / 120.0);
    }

    #[test]
    fn ties_use_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn large_n_uses_t_approximation() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 1.7).sin() + v * 0.1).collect();
        let r = spearman_trend(&x, &y).unwrap();
        assert_eq!(r.method, PValueMethod::TApproximation);
        assert!(r.p_two_sided > 0.0 && r.p_two_sided <= 1.0);
        assert!((r.p_two_sided - 2.0 * r.p_one_sided).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            spearman_trend(&TEMPS, &[1.0; 7]),
            Err(SdtError::UndefinedCorrelation(_))
        ));
        assert!(spearman_trend(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman_trend(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_increasing_transform(ys in proptest::collection::vec(-5.0f64..5.0, 7)) {
            prop_assume!(ys.iter().any(|v| *v != ys[0]));
            let a = spearman_trend(&TEMPS, &ys).unwrap();
            let t: Vec<f64> = ys.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            let tx: Vec<f64> = TEMPS.iter().map(|v| v.ln()).collect();
            let b = spearman_trend(&tx, &t).unwrap();
            prop_assert!((a.rho - b.rho).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a.rho));
        }
    }
}
