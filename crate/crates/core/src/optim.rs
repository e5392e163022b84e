//! Box-constrained limited-memory quasi-Newton minimisation.
//!
//! A projected L-BFGS: variables pinned at a bound with the gradient
//! pointing outward are held fixed, the two-loop recursion runs on the free
//! subspace, and a backtracking Armijo search follows the projected path.

use std::collections::VecDeque;

/// Objective returning `f(x)` and writing `∇f(x)` into the second argument.
pub trait Objective {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective for F {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

/// Wraps a value-only function with a central finite-difference gradient.
pub struct FiniteDifference<F> {
    pub f: F,
    pub rel_step: f64,
}

impl<F: FnMut(&[f64]) -> f64> FiniteDifference<F> {
    pub fn new(f: F) -> Self {
        Self { f, rel_step: 1e-6 }
    }
}

impl<F: FnMut(&[f64]) -> f64> Objective for FiniteDifference<F> {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let h = self.rel_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = (self.f)(&probe);
            probe[i] = x[i] - h;
            let down = (self.f)(&probe);
            probe[i] = x[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        (self.f)(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    }

    /// Gradient with components that would push through an active bound zeroed.
    pub fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&xi, &gi))| {
                if (xi <= self.lower[i] && gi > 0.0) || (xi >= self.upper[i] && gi < 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when `(f_k − f_{k+1}) ≤ ftol · max(|f_k|, |f_{k+1}|, 1)`.
    pub ftol: f64,
    /// Stop when the projected gradient's max-norm falls below this.
    pub pgtol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iter: 3_000,
            memory: 10,
            ftol: 1e-10,
            pgtol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    RelativeImprovement,
    LineSearchFailed,
    MaxIterations,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance | Termination::RelativeImprovement
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn minimize<O: Objective>(obj: &mut O, x0: &[f64], bounds: &Bounds, opts: &Options) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);

    let finish = |x: Vec<f64>, f: f64, grad: Vec<f64>, iterations, evaluations, termination| Minimum {
        x,
        f,
        grad,
        iterations,
        evaluations,
        termination,
    };

    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(x, f, g, 0, evaluations, Termination::NonFinite);
    }

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    for iter in 0..opts.max_iter {
        let pg = bounds.projected_gradient(&x, &g);
        if max_abs(&pg) < opts.pgtol {
            return finish(x, f, g, iter, evaluations, Termination::GradientTolerance);
        }
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != 0.0 || *gi == 0.0).collect();

        let mut dir = two_loop(&pg, &history);
        for (d, fr) in dir.iter_mut().zip(&free) {
            if !fr {
                *d = 0.0;
            }
        }
        if dot(&dir, &pg) >= 0.0 {
            history.clear();
            dir = pg.iter().map(|v| -v).collect();
        }

        let mut step = if history.is_empty() {
            (1.0 / max_abs(&pg)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            bounds.project(&mut x_new);
            let moved: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            if max_abs(&moved) == 0.0 {
                break;
            }
            let fv = obj.eval(&x_new, &mut g_new);
            evaluations += 1;
            if fv.is_finite() && fv <= f + 1e-4 * dot(&g, &moved) {
                accepted = Some(fv);
                break;
            }
            step *= 0.5;
        }

        let Some(f_new) = accepted else {
            if !history.is_empty() {
                history.clear();
                continue;
            }
            return finish(x, f, g, iter, evaluations, Termination::LineSearchFailed);
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let improvement = f - f_new;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        if improvement <= opts.ftol * f.abs().max((f + improvement).abs()).max(1.0) {
            let termination = if max_abs(&bounds.projected_gradient(&x, &g)) < opts.pgtol {
                Termination::GradientTolerance
            } else {
                Termination::RelativeImprovement
            };
            return finish(x, f, g, iter + 1, evaluations, termination);
        }
    }
    finish(x, f, g, opts.max_iter, evaluations, Termination::MaxIterations)
}

/// Two-loop recursion: approximate `−H·g`.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alpha.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alpha.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Invert a symmetric positive-definite matrix (row-major, `n × n`) via
/// Cholesky. Returns `None` when the matrix is not positive definite.
pub fn invert_spd(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // Solve L Lᵀ X = I column by column.
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for c in 0..n {
        for i in 0..n {
            let mut sum = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                sum -= l[i * n + k] * col[k];
            }
            col[i] = sum / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = col[i];
            for k in i + 1..n {
                sum -= l[k * n + i] * inv[k * n + c];
            }
            inv[i * n + c] = sum / l[i * n + i];
        }
    }
    Some(inv)
}
