//! (μ/μ_w, λ)-CMA-ES with rank-one and rank-μ covariance updates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmaesOptions {
    pub sigma0: f64,
    /// Population size; `None` selects 4 + ⌊3 ln n⌋.
    pub lambda: Option<usize>,
    /// Maximum number of objective evaluations, excluding the evaluation of the initial mean.
    pub max_evals: usize,
    /// Stop when every coordinate's step size falls below this.
    pub tolx: f64,
    pub seed: u64,
    /// Evaluate each population concurrently.
    pub parallel: bool,
}

impl Default for CmaesOptions {
    fn default() -> Self {
        CmaesOptions { sigma0: 0.5, lambda: None, max_evals: 300, tolx: 1e-6, seed: 0, parallel: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub generation: usize,
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct CmaesResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    /// Every evaluation in order, the initial mean first (generation 0).
    pub history: Vec<Evaluation>,
    pub generations: usize,
}

pub fn default_population(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

/// Minimizes `f` starting from `mean`. Non-finite values rank last.
pub fn minimize<F>(f: F, mean: &[f64], opts: &CmaesOptions) -> CmaesResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = mean.len();
    let nf = n as f64;
    let lambda = opts.lambda.unwrap_or_else(|| default_population(n)).max(2);
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln()).collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
    let cs = (mueff + 2.0) / (nf + mueff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
    let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
    let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut m = DVector::from_column_slice(mean);
    let mut sigma = opts.sigma0;
    let mut c = DMatrix::<f64>::identity(n, n);
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut d = DVector::<f64>::from_element(n, 1.0);
    let mut pc = DVector::<f64>::zeros(n);
    let mut ps = DVector::<f64>::zeros(n);

    let f0 = f(mean);
    let mut history = vec![Evaluation { generation: 0, x: mean.to_vec(), value: f0 }];
    let (mut best_x, mut best_value) = (mean.to_vec(), f0);
    let mut evals = 0;
    let mut generation = 0;

    while evals + lambda <= opts.max_evals {
        generation += 1;
        let z: Vec<DVector<f64>> =
            (0..lambda).map(|_| DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))).collect();
        let y: Vec<DVector<f64>> = z.iter().map(|zi| &b * zi.component_mul(&d)).collect();
        let xs: Vec<DVector<f64>> = y.iter().map(|yi| &m + yi * sigma).collect();
        let values: Vec<f64> = if opts.parallel {
            xs.par_iter().map(|x| f(x.as_slice())).collect()
        } else {
            xs.iter().map(|x| f(x.as_slice())).collect()
        };
        evals += lambda;
        for (x, &v) in xs.iter().zip(&values) {
            history.push(Evaluation { generation, x: x.as_slice().to_vec(), value: v });
            if v < best_value || !best_value.is_finite() && v.is_finite() {
                best_value = v;
                best_x = x.as_slice().to_vec();
            }
        }

        let mut order: Vec<usize> = (0..lambda).collect();
        let key = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
        order.sort_by(|&i, &j| key(values[i]).total_cmp(&key(values[j])).then(i.cmp(&j)));

        let mut yw = DVector::zeros(n);
        for (w, &i) in weights.iter().zip(&order) {
            yw += &y[i] * *w;
        }
        m += &yw * sigma;

        // C^{-1/2} yw = B D^{-1} Bᵀ yw
        let inv_sqrt = &b * DMatrix::from_diagonal(&d.map(|v| 1.0 / v)) * b.transpose();
        ps = &ps * (1.0 - cs) + &inv_sqrt * &yw * (cs * (2.0 - cs) * mueff).sqrt();
        let ps_norm = ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - cs).powi(2 * generation as i32)).sqrt() / chi_n < 1.4 + 2.0 / (nf + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        pc = &pc * (1.0 - cc) + &yw * (hs * (cc * (2.0 - cc) * mueff).sqrt());

        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, &i) in weights.iter().zip(&order) {
            rank_mu += &y[i] * y[i].transpose() * *w;
        }
        let old = c.clone();
        c = old * (1.0 - c1 - cmu + (1.0 - hs) * c1 * cc * (2.0 - cc)) + &pc * pc.transpose() * c1 + rank_mu * cmu;
        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();

        c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c.clone());
        b = eig.eigenvectors;
        d = eig.eigenvalues.map(|v| v.max(1e-20).sqrt());

        let max_step = (0..n).map(|i| sigma * c[(i, i)].sqrt()).fold(0.0, f64::max);
        if max_step < opts.tolx {
            break;
        }
    }
    CmaesResult { best_x, best_value, history, generations: generation }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_for_two_dimensions() {
        assert_eq!(default_population(2), 6);
    }

    #[test]
    fn converges_on_shifted_ellipsoid() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 25.0 * (x[1] + 2.0).powi(2);
        let r = minimize(f, &[0.0, 0.0], &CmaesOptions { max_evals: 1200, tolx: 1e-9, parallel: false, ..Default::default() });
        assert!((r.best_x[0] - 1.0).abs() < 1e-3 && (r.best_x[1] + 2.0).abs() < 1e-3, "{:?}", r.best_x);
    }

    #[test]
    fn zero_budget_returns_initial_mean() {
        let f = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let r = minimize(f, &[0.5, -0.5], &CmaesOptions { max_evals: 0, ..Default::default() });
        assert_eq!(r.best_x, vec![0.5, -0.5]);
        assert_eq!(r.best_value, 0.5);
        assert_eq!(r.history.len(), 1);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let f = |x: &[f64]| (x[0] - 0.2).abs() + (x[1] * x[1]);
        let o = CmaesOptions { max_evals: 60, seed: 11, ..Default::default() };
        let a = minimize(f, &[1.0, 1.0], &o);
        let b = minimize(f, &[1.0, 1.0], &o);
        let va: Vec<f64> = a.history.iter().map(|e| e.value).collect();
        let vb: Vec<f64> = b.history.iter().map(|e| e.value).collect();
        assert_eq!(va, vb);
    }
}
