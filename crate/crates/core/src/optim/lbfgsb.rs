//! Box-constrained limited-memory quasi-Newton minimizer.
//!
//! Projected L-BFGS: the two-loop recursion supplies a direction on the free variables, a
//! projected backtracking search keeps iterates feasible. Stopping rules follow the usual
//! L-BFGS-B conventions (relative reduction `ftol`, projected-gradient `gtol`).

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsbOptions {
    pub ftol: f64,
    pub gtol: f64,
    /// Finite-difference step.
    pub eps: f64,
    pub maxfun: usize,
    pub maxiter: usize,
    /// Number of correction pairs kept.
    pub memory: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        LbfgsbOptions { ftol: 1e-6, gtol: 1e-5, eps: 1e-8, maxfun: 10_000, maxiter: 1000, memory: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Ftol,
    Gtol,
    MaxFun,
    MaxIter,
    /// Line search could not decrease the objective along the search direction.
    LineSearch,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Termination::Ftol => "relative reduction below ftol",
            Termination::Gtol => "projected gradient below gtol",
            Termination::MaxFun => "function evaluation limit reached",
            Termination::MaxIter => "iteration limit reached",
            Termination::LineSearch => "line search failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub f: f64,
    pub nit: usize,
    pub nfev: usize,
    pub status: Termination,
}

/// Objective with an optional analytic or structured gradient.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    /// Gradient at `x` where `fx = value(x)`. Returns the gradient and the number of objective
    /// evaluations spent. The default is a forward difference of step `eps`, switching to a
    /// backward difference where the forward point would leave the box.
    fn gradient(&self, x: &[f64], fx: f64, hi: &[f64], eps: f64) -> (Vec<f64>, usize) {
        forward_difference(|z| self.value(z), x, fx, hi, eps)
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Step used for coordinate `i`: `+eps`, or `-eps` when `x_i + eps` exceeds the upper bound.
#[inline]
pub fn fd_step(x: f64, hi: f64, eps: f64) -> f64 {
    if x + eps > hi {
        -eps
    } else {
        eps
    }
}

pub fn forward_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], fx: f64, hi: &[f64], eps: f64) -> (Vec<f64>, usize) {
    let mut z = x.to_vec();
    let g = (0..x.len())
        .map(|i| {
            let h = fd_step(x[i], hi[i], eps);
            z[i] = x[i] + h;
            let d = (f(&z) - fx) / h;
            z[i] = x[i];
            d
        })
        .collect();
    (g, x.len())
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Infinity norm of the projected gradient `P(x − g) − x`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len()).map(|i| ((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs()).fold(0.0, f64::max)
}

/// Minimizes `obj` over the box `[lo, hi]` starting from `x0` (projected into the box).
///
/// Errors only when the objective is non-finite at the starting point; the caller decides how
/// to report that.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &LbfgsbOptions,
) -> Result<Solution, NonFinite> {
    let n = x0.len();
    assert!(lo.len() == n && hi.len() == n, "bound length must match the variable count");
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut f = obj.value(&x);
    let mut nfev = 1;
    if !f.is_finite() {
        return Err(NonFinite { x, value: f });
    }
    if n == 0 {
        return Ok(Solution { x, f, nit: 0, nfev, status: Termination::Gtol });
    }
    let (mut g, used) = obj.gradient(&x, f, hi, opts.eps);
    nfev += used;

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut nit = 0;
    let status = loop {
        if projected_gradient_norm(&x, &g, lo, hi) <= opts.gtol {
            break Termination::Gtol;
        }
        if nit >= opts.maxiter {
            break Termination::MaxIter;
        }
        if nfev >= opts.maxfun {
            break Termination::MaxFun;
        }

        // Variables held at a bound by the gradient stay fixed for this iteration.
        let free: Vec<bool> =
            (0..n).map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))).collect();
        let mut d = two_loop(&g, &pairs, &free);
        let mut slope = dot(&d, &g);
        if slope >= 0.0 || !slope.is_finite() {
            pairs.clear();
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            slope = dot(&d, &g);
        }
        let mut t = if pairs.is_empty() {
            let gmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (1.0 / gmax).min(1.0)
        } else {
            1.0
        };

        // Projected Armijo backtracking.
        let mut trial = vec![0.0; n];
        let mut accepted = None;
        let mut remaining = 40;
        while remaining > 0 && nfev < opts.maxfun {
            for i in 0..n {
                trial[i] = x[i] + t * d[i];
            }
            project(&mut trial, lo, hi);
            let step: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
            let decrease = dot(&g, &step);
            let ft = obj.value(&trial);
            nfev += 1;
            if ft.is_finite() && ft <= f + 1e-4 * decrease.min(0.0) {
                accepted = Some((ft, step));
                break;
            }
            t *= 0.5;
            remaining -= 1;
        }
        let Some((ft, s)) = accepted else {
            break if nfev >= opts.maxfun { Termination::MaxFun } else { Termination::LineSearch };
        };
        nit += 1;

        let (gt, used) = obj.gradient(&trial, ft, hi, opts.eps);
        nfev += used;
        let y: Vec<f64> = (0..n).map(|i| gt[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y) && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let reduction = (f - ft) / f.abs().max(ft.abs()).max(1.0);
        x.copy_from_slice(&trial);
        f = ft;
        g = gt;
        if reduction <= opts.ftol {
            break Termination::Ftol;
        }
    };
    Ok(Solution { x, f, nit, nfev, status })
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, free: &[bool]) -> Vec<f64> {
    let n = g.len();
    let mask = |v: &mut Vec<f64>| {
        for i in 0..n {
            if !free[i] {
                v[i] = 0.0;
            }
        }
    };
    let mut q = g.to_vec();
    mask(&mut q);
    let mut alpha = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        alpha[k] = rho * dot(s, &q);
        for i in 0..n {
            q[i] -= alpha[k] * y[i];
        }
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for v in &mut q {
            *v *= gamma;
        }
    }
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * dot(y, &q);
        for i in 0..n {
            q[i] += s[i] * (alpha[k] - beta);
        }
    }
    for v in &mut q {
        *v = -*v;
    }
    mask(&mut q);
    q
}

/// Objective value was not finite at the given point.
#[derive(Debug, Clone)]
pub struct NonFinite {
    pub x: Vec<f64>,
    pub value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (0..x.len() - 1).map(|i| 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2)).sum()
    }

    #[test]
    fn unconstrained_quadratic() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 10.0 * (x[1] + 0.2).powi(2);
        let opts = LbfgsbOptions { ftol: 1e-14, gtol: 1e-8, ..Default::default() };
        let s = minimize(&f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &opts).unwrap();
        assert!((s.x[0] - 0.3).abs() < 1e-5 && (s.x[1] + 0.2).abs() < 1e-5, "{:?}", s);
    }

    #[test]
    fn active_bound_is_respected() {
        let f = |x: &[f64]| (x[0] - 2.0).powi(2) + (x[1] + 0.5).powi(2);
        let s = minimize(&f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &LbfgsbOptions::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.x[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn rosenbrock_in_box() {
        let opts = LbfgsbOptions { ftol: 1e-15, gtol: 1e-7, ..Default::default() };
        let s = minimize(&rosenbrock, &[-1.2, 1.0, 0.5], &[-2.0; 3], &[0.8; 3], &opts).unwrap();
        assert!(s.f < rosenbrock(&[-1.2, 1.0, 0.5]));
        assert!((s.x[0] - 0.8).abs() < 1e-3 || s.x[0] <= 0.8);
        assert!(s.x.iter().all(|v| (-2.0..=0.8).contains(v)));
    }

    #[test]
    fn start_outside_box_is_projected() {
        let f = |x: &[f64]| x[0] * x[0];
        let s = minimize(&f, &[5.0], &[-1.0], &[1.0], &LbfgsbOptions::default()).unwrap();
        assert!(s.x[0].abs() < 1e-4);
    }

    #[test]
    fn non_finite_start_is_reported() {
        let f = |_: &[f64]| f64::NAN;
        assert!(minimize(&f, &[0.0], &[-1.0], &[1.0], &LbfgsbOptions::default()).is_err());
    }

    #[test]
    fn maxfun_is_honored() {
        let opts = LbfgsbOptions { maxfun: 25, ftol: 0.0, gtol: 0.0, ..Default::default() };
        let s = minimize(&rosenbrock, &[-1.2, 1.0], &[-2.0; 2], &[2.0; 2], &opts).unwrap();
        assert_eq!(s.status, Termination::MaxFun);
        assert!(s.nfev <= 25 + 2);
    }
}
