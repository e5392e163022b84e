//! m-alternative forced choice: proportion correct <-> d'.
//!
//! An ideal observer picks the largest of one signal sample `N(d, 1)` and
//! `m − 1` noise samples `N(0, 1)`, so
//!
//! ```text
//! P(c) = ∫ φ(x − d) Φ(x)^{m−1} dx
//! ```
//!
//! Substituting `x = d + √2·t` turns this into a Gauss–Hermite integral,
//! evaluated with 128 nodes. The 64-node result provides the error
//! estimate; if it exceeds tolerance an adaptive Simpson rule takes over.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdtError};
use crate::normal;

pub const DEFAULT_NODES: usize = 128;
const FALLBACK_TOLERANCE: f64 = 1e-12;
const ROOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfcResult {
    pub m: u32,
    pub proportion_correct: f64,
    pub d_prime: f64,
    pub quadrature_error_bound: f64,
    pub n_correct: Option<u64>,
    pub n_total: Option<u64>,
    /// True when a ceiling/floor count correction was applied.
    pub corrected: bool,
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Gauss–Hermite rule for `∫ e^{−t²} f(t) dt` via Newton iteration on the
/// orthonormal Hermite recurrence.
fn gauss_hermite(n: usize) -> Rule {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(−1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    Rule { nodes: x, weights: w }
}

fn rule(n: usize) -> &'static Rule {
    static R128: OnceLock<Rule> = OnceLock::new();
    static R64: OnceLock<Rule> = OnceLock::new();
    match n {
        128 => R128.get_or_init(|| gauss_hermite(128)),
        64 => R64.get_or_init(|| gauss_hermite(64)),
        _ => panic!("only 64- and 128-node rules are cached"),
    }
}

fn integrand(x: f64, d: f64, m: u32) -> f64 {
    normal::pdf(x - d) * normal::cdf(x).powi(m as i32 - 1)
}

fn hermite_pc(d: f64, m: u32, r: &Rule) -> f64 {
    r.nodes
        .iter()
        .zip(&r.weights)
        .map(|(t, w)| w * normal::cdf(d + SQRT_2 * t).powi(m as i32 - 1))
        .sum::<f64>()
        / PI.sqrt()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Proportion correct and an absolute error estimate.
pub fn pc_from_dprime_with_error(d: f64, m: u32) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(SdtError::Domain(format!("m must be at least 2, got {m}")));
    }
    if !d.is_finite() {
        return Err(SdtError::Domain(format!("d' must be finite, got {d}")));
    }
    let fine = hermite_pc(d, m, rule(DEFAULT_NODES));
    let coarse = hermite_pc(d, m, rule(64));
    let err = (fine - coarse).abs();
    if err <= FALLBACK_TOLERANCE {
        return Ok((fine.clamp(0.0, 1.0), err));
    }
    let f = move |x: f64| integrand(x, d, m);
    let adaptive = adaptive_simpson(&f, d - 14.0, d + 14.0, 1e-14);
    Ok((adaptive.clamp(0.0, 1.0), (adaptive - fine).abs().max(1e-14)))
}

pub fn pc_from_dprime(d: f64, m: u32) -> Result<f64> {
    pc_from_dprime_with_error(d, m).map(|(p, _)| p)
}

/// Invert [`pc_from_dprime`] by bisection on an expanding bracket.
pub fn dprime_from_pc(pc: f64, m: u32) -> Result<f64> {
    if !(pc > 0.0 && pc < 1.0) {
        return Err(SdtError::Domain(format!(
            "proportion correct {pc} must lie strictly inside (0, 1); apply a count correction first"
        )));
    }
    if m < 2 {
        return Err(SdtError::Domain(format!("m must be at least 2, got {m}")));
    }
    let f = |d: f64| pc_from_dprime(d, m).map(|p| p - pc);
    let (mut lo, mut hi) = (-5.0, 5.0);
    while f(lo)? > 0.0 {
        lo *= 2.0;
        if lo < -80.0 {
            return Err(SdtError::Domain(format!("no d' reaches proportion correct {pc}")));
        }
    }
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 80.0 {
            return Err(SdtError::Domain(format!("no d' reaches proportion correct {pc}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_TOLERANCE * mid.abs().max(1.0) {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Proportion correct from counts; `0/N` and `N/N` are moved inward by
/// `1/(2N)` when `correct_boundaries` is set.
pub fn corrected_proportion(correct: u64, total: u64, correct_boundaries: bool) -> Result<(f64, bool)> {
    if total == 0 || correct > total {
        return Err(SdtError::Domain(format!("invalid counts {correct}/{total}")));
    }
    let n = total as f64;
    match correct {
        0 if correct_boundaries => Ok((0.5 / n, true)),
        c if c == total && correct_boundaries => Ok(((n - 0.5) / n, true)),
        c => Ok((c as f64 / n, false)),
    }
}

/// d' from forced-choice counts.
pub fn afc_from_counts(correct: u64, total: u64, m: u32, correct_boundaries: bool) -> Result<AfcResult> {
    let (pc, corrected) = corrected_proportion(correct, total, correct_boundaries)?;
    let d_prime = dprime_from_pc(pc, m)?;
    let (_, err) = pc_from_dprime_with_error(d_prime, m)?;
    Ok(AfcResult {
        m,
        proportion_correct: pc,
        d_prime,
        quadrature_error_bound: err,
        n_correct: Some(correct),
        n_total: Some(total),
        corrected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_integrates_moments() {
        let r = rule(128);
        let total: f64 = r.weights.iter().sum();
        assert!((total - PI.sqrt()).abs() < 1e-12);
        let second: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
        assert!((second - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn chance_is_one_over_m() {
        for m in 2..8 {
            assert!((pc_from_dprime(0.0, m).unwrap() - 1.0 / f64::from(m)).abs() < 1e-12);
        }
        assert!(dprime_from_pc(0.25, 4).unwrap().abs() < 1e-9);
    }

    #[test]
    fn two_afc_closed_form() {
        for i in -50..=50 {
            let d = f64::from(i) / 10.0;
            let got = pc_from_dprime(d, 2).unwrap();
            assert!((got - normal::cdf(d / SQRT_2)).abs() < 1e-8, "d = {d}");
        }
    }

    #[test]
    fn agrees_with_adaptive_quadrature() {
        for &(d, m) in &[(0.7, 3), (2.2, 4), (3.31, 4), (1.5, 10)] {
            let f = move |x: f64| integrand(x, d, m);
            let reference = adaptive_simpson(&f, d - 14.0, d + 14.0, 1e-14);
            assert!((pc_from_dprime(d, m).unwrap() - reference).abs() < 1e-10);
        }
    }

    #[test]
    fn four_afc_reported_values() {
        for &(pc, d) in &[(0.975, 3.31), (0.945, 2.85), (0.804, 1.91)] {
            let got = dprime_from_pc(pc, 4).unwrap();
            assert!((got - d).abs() < 0.02, "pc {pc}: {got}");
        }
    }

    #[test]
    fn inversion_round_trip() {
        for i in -20..=40 {
            let d = f64::from(i) / 10.0;
            for m in [2, 4, 6] {
                let pc = pc_from_dprime(d, m).unwrap();
                let back = dprime_from_pc(pc, m).unwrap();
                assert!((back - d).abs() < 1e-8, "d {d} m {m}: {back}");
                assert!((pc_from_dprime(back, m).unwrap() - pc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn decreasing_in_alternatives() {
        for d in [0.3, 1.0, 2.5] {
            let pcs: Vec<f64> = (2..8).map(|m| pc_from_dprime(d, m).unwrap()).collect();
            assert!(pcs.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn domain_errors() {
        assert!(dprime_from_pc(0.0, 4).is_err());
        assert!(dprime_from_pc(1.0, 4).is_err());
        assert!(pc_from_dprime(1.0, 1).is_err());
        assert!(pc_from_dprime(f64::NAN, 4).is_err());
    }

    #[test]
    fn count_correction() {
        let (pc, corrected) = corrected_proportion(20, 20, true).unwrap();
        assert!(corrected);
        assert!((pc - 39.0 / 40.0).abs() < 1e-15);
        assert_eq!(corrected_proportion(0, 10, true).unwrap(), (0.05, true));
        assert_eq!(corrected_proportion(3, 10, true).unwrap(), (0.3, false));
        let r = afc_from_counts(1955, 2005, 4, true).unwrap();
        assert!((r.proportion_correct - 0.975).abs() < 1e-3);
        assert!((r.d_prime - 3.31).abs() < 0.02);
    }
}
