//! Maximum-likelihood logistic regression by iteratively reweighted least
//! squares on standardized predictors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const IRLS_TOLERANCE: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 100;

/// Coefficient magnitude (standardized scale) taken as divergence.
const DIVERGENCE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    /// Coefficients on the standardized predictors.
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub intercept: f64,
    pub intercept_se: f64,
    /// Estimation-sample mean and sample sd of each raw predictor.
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub n: usize,
    pub iterations: usize,
    pub deviance: f64,
    pub converged: bool,
    /// Largest absolute component of the score vector at the estimate.
    pub max_score: f64,
}

impl RegressionResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Coefficient per unit of the raw predictor.
    pub fn raw_coef(&self, i: usize) -> f64 {
        self.coef[i] / self.sds[i]
    }

    pub fn raw_intercept(&self) -> f64 {
        self.intercept
            - (0..self.coef.len())
                .map(|i| self.coef[i] * self.means[i] / self.sds[i])
                .sum::<f64>()
    }

    pub fn odds_ratio(&self, i: usize) -> f64 {
        self.coef[i].exp()
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn deviance(eta: &DVector<f64>, y: &[f64]) -> f64 {
    -2.0 * eta.iter().zip(y).map(|(&e, &yi)| yi * e - softplus(e)).sum::<f64>()
}

/// First column (if any) that separates the outcome on its own.
fn univariate_separation(x: &DMatrix<f64>, y: &[f64]) -> Option<usize> {
    (0..x.ncols()).find(|&j| {
        let (mut max0, mut min0) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut max1, mut min1) = (f64::NEG_INFINITY, f64::INFINITY);
        for (i, &yi) in y.iter().enumerate() {
            let v = x[(i, j)];
            if yi > 0.5 {
                max1 = max1.max(v);
                min1 = min1.min(v);
            } else {
                max0 = max0.max(v);
                min0 = min0.min(v);
            }
        }
        max0 <= min1 || max1 <= min0
    })
}

/// Fits `P(y = 1) = sigmoid(b0 + sum_j b_j z_j)` where `z_j` is column `j`
/// of `x` standardized on this sample. The intercept is added here.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[bool], names: &[&str]) -> Result<RegressionResult> {
    let (n, k) = x.shape();
    if y.len() != n || names.len() != k {
        return Err(Error::Data(format!(
            "design is {n}x{k} but got {} outcomes and {} names",
            y.len(),
            names.len()
        )));
    }
    let ones = y.iter().filter(|&&v| v).count();
    if ones == 0 || ones == n {
        return Err(Error::Boundary(format!(
            "all {n} outcomes equal {}",
            if ones == 0 { 0 } else { 1 }
        )));
    }
    let yf: Vec<f64> = y.iter().map(|&v| v as u8 as f64).collect();

    let mut means = Vec::with_capacity(k);
    let mut sds = Vec::with_capacity(k);
    let mut z = DMatrix::from_element(n, k + 1, 1.0);
    for j in 0..k {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let (s, m, sd) = stats::standardize(&col)
            .ok_or_else(|| Error::Singular(format!("predictor `{}` has zero variance", names[j])))?;
        means.push(m);
        sds.push(sd);
        z.column_mut(j + 1).copy_from_slice(&s);
    }
    if let Some(j) = univariate_separation(x, &yf) {
        return Err(Error::Separation {
            predictor: names[j].to_string(),
        });
    }

    let yv = DVector::from_vec(yf.clone());
    let mut beta = DVector::zeros(k + 1);
    let mut eta = &z * &beta;
    let mut dev = deviance(&eta, &yf);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let mu = eta.map(stats::sigmoid);
        let w = mu.map(|m| m * (1.0 - m));
        let score = z.transpose() * (&yv - &mu);
        let info = information(&z, &w);
        let step = info
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("after {iterations} iterations")))?
            .solve(&score);
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut next_eta = &z * &next;
        let mut next_dev = deviance(&next_eta, &yf);
        // step halving guards against overshoot far from the optimum
        while next_dev > dev * (1.0 + 1e-12) + 1e-12 && scale > 1e-6 {
            scale *= 0.5;
            next = &beta + &step * scale;
            next_eta = &z * &next;
            next_dev = deviance(&next_eta, &yf);
        }
        let delta = (&next - &beta).amax();
        beta = next;
        eta = next_eta;
        dev = next_dev;
        if delta < IRLS_TOLERANCE {
            converged = true;
            break;
        }
    }

    let slope_max = (1..=k).map(|j| beta[j].abs()).fold(0.0, f64::max);
    if !converged && (slope_max > DIVERGENCE || dev < 1e-6) {
        let j = (1..=k)
            .max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs()))
            .unwrap_or(1);
        return Err(Error::Separation {
            predictor: names.get(j - 1).map_or("intercept", |s| s).to_string(),
        });
    }

    let mu = eta.map(stats::sigmoid);
    let w = mu.map(|m| m * (1.0 - m));
    let score = z.transpose() * (&yv - &mu);
    let cov = information(&z, &w)
        .try_inverse()
        .ok_or_else(|| Error::Singular("at the estimate".into()))?;
    let se: Vec<f64> = (0..=k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let zstat: Vec<f64> = (1..=k).map(|j| beta[j] / se[j]).collect();
    Ok(RegressionResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        coef: (1..=k).map(|j| beta[j]).collect(),
        se: se[1..].to_vec(),
        p: zstat.iter().map(|&t| stats::two_sided_p(t)).collect(),
        z: zstat,
        intercept: beta[0],
        intercept_se: se[0],
        means,
        sds,
        n,
        iterations,
        deviance: dev,
        converged,
        max_score: score.amax(),
    })
}

fn information(z: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut wz = z.clone();
    for (i, &wi) in w.iter().enumerate() {
        wz.row_mut(i).scale_mut(wi);
    }
    z.transpose() * wz
}

/// Log-likelihood of raw-scale parameters; used by oracles.
pub fn log_likelihood(x: &DMatrix<f64>, y: &[bool], intercept: f64, beta: &[f64]) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let eta = intercept + (0..beta.len()).map(|j| beta[j] * x[(i, j)]).sum::<f64>();
            (y[i] as u8 as f64) * eta - softplus(eta)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn simulate(n: usize, beta: f64, intercept: f64, seed: u64) -> (DMatrix<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y = xs
            .iter()
            .map(|&x| rng.random::<f64>() < stats::sigmoid(intercept + beta * x))
            .collect();
        (DMatrix::from_vec(n, 1, xs), y)
    }

    #[test]
    fn recovers_known_slope() {
        let (x, y) = simulate(5000, 0.5, -2.0, 11);
        let fit = fit_logistic(&x, &y, &["x"]).unwrap();
        assert!(fit.converged);
        assert!((fit.raw_coef(0) - 0.5).abs() < 0.1, "{}", fit.raw_coef(0));
        assert!((fit.raw_intercept() + 2.0).abs() < 0.15);
        assert!(fit.max_score < 1e-6);
        assert!(fit.p[0] < 1e-6);
    }

    #[test]
    fn null_slope_within_three_se() {
        let (x, y) = simulate(2000, 0.0, 0.3, 5);
        let fit = fit_logistic(&x, &y, &["x"]).unwrap();
        assert!(fit.coef[0].abs() < 3.0 * fit.se[0]);
        assert!((0.0..=1.0).contains(&fit.p[0]));
    }

    #[test]
    fn rescaling_predictor_leaves_standardized_fit_unchanged() {
        let (x, y) = simulate(800, 0.7, -0.5, 2);
        let a = fit_logistic(&x, &y, &["x"]).unwrap();
        let b = fit_logistic(&(&x * 1234.5), &y, &["x"]).unwrap();
        assert!((a.coef[0] - b.coef[0]).abs() < 1e-8);
        assert!((a.z[0] - b.z[0]).abs() < 1e-8);
        assert!((a.p[0] - b.p[0]).abs() < 1e-8);
    }

    #[test]
    fn degenerate_outcomes() {
        let x = DMatrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(fit_logistic(&x, &[false; 4], &["x"]), Err(Error::Boundary(_))));
        match fit_logistic(&x, &[false, false, true, true], &["x"]) {
            Err(Error::Separation { predictor }) => assert_eq!(predictor, "x"),
            other => panic!("{other:?}"),
        }
        let c = DMatrix::from_vec(4, 1, vec![1.0; 4]);
        assert!(matches!(
            fit_logistic(&c, &[false, true, false, true], &["c"]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn collinear_columns_are_singular() {
        let (x1, y) = simulate(200, 0.4, 0.0, 9);
        let x = DMatrix::from_fn(200, 2, |i, j| if j == 0 { x1[(i, 0)] } else { 2.0 * x1[(i, 0)] + 1.0 });
        assert!(matches!(fit_logistic(&x, &y, &["a", "b"]), Err(Error::Singular(_))));
    }

    fn golden(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - r * (hi - lo);
            let b = lo + r * (hi - lo);
            if f(a) > f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        (lo + hi) / 2.0
    }

    #[test]
    fn matches_direct_likelihood_maximizer() {
        for seed in 0..5 {
            let (x, y) = simulate(50, 0.8, 0.2, 100 + seed);
            let Ok(fit) = fit_logistic(&x, &y, &["x"]) else {
                continue;
            };
            // profile likelihood: inner maximization over the intercept
            let profile = |b: f64| {
                let a = golden(-10.0, 10.0, |a| log_likelihood(&x, &y, a, &[b]));
                log_likelihood(&x, &y, a, &[b])
            };
            let b = golden(-10.0, 10.0, profile);
            let a = golden(-10.0, 10.0, |a| log_likelihood(&x, &y, a, &[b]));
            assert!((fit.raw_coef(0) - b).abs() < 1e-4, "{} vs {b}", fit.raw_coef(0));
            assert!((fit.raw_intercept() - a).abs() < 1e-4);
        }
    }
}
