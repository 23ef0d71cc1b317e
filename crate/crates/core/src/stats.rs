//! Batch-means estimation.
//!
//! Samples are split into contiguous batches. A statistic is a function of
//! sample means; its point estimate uses the overall means and its standard
//! error the spread of the same function applied to each batch.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Default number of batches.
pub const DEFAULT_BATCHES: usize = 40;
/// Minimum number of batches accepted by estimators.
pub const MIN_BATCHES: usize = 30;
/// Half-width of reported confidence intervals, in standard errors.
pub const CI_Z: f64 = 3.0;

/// A scalar estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub const fn new(value: f64, se: f64) -> Self {
        Estimate { value, se }
    }

    pub const fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    pub fn lo(&self) -> f64 {
        self.value - CI_Z * self.se
    }

    pub fn hi(&self) -> f64 {
        self.value + CI_Z * self.se
    }

    /// Whether `[value - z se, value + z se]` contains `x`.
    pub fn contains(&self, x: f64, z: f64) -> bool {
        (self.value - x).abs() <= z * self.se
    }

    /// Whether the default confidence interval excludes zero.
    pub fn excludes_zero(&self) -> bool {
        !self.contains(0.0, CI_Z)
    }
}

/// Quadrature sum of standard errors.
pub fn combined_se(ses: &[f64]) -> f64 {
    libm::sqrt(ses.iter().map(|s| s * s).sum())
}

/// Difference of two estimates with the quadrature-sum standard error.
pub fn difference(a: Estimate, b: Estimate) -> Estimate {
    Estimate::new(a.value - b.value, combined_se(&[a.se, b.se]))
}

/// How an estimate was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    Plain,
    ControlVariate,
    Identity,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::ControlVariate => "control_variate",
            Variant::Identity => "identity",
        }
    }
}

/// A possibly vector-valued estimate with provenance.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimateReport {
    pub name: String,
    pub value: Vec<f64>,
    pub se: Vec<f64>,
    pub n: u64,
    pub variant: Variant,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
}

impl EstimateReport {
    pub fn new(name: &str, est: &[Estimate], n: u64, variant: Variant) -> Self {
        EstimateReport {
            name: name.into(),
            value: est.iter().map(|e| e.value).collect(),
            se: est.iter().map(|e| e.se).collect(),
            n,
            variant,
            epsilon: None,
            lambda: None,
        }
    }

    pub fn with_params(mut self, epsilon: Option<f64>, lambda: Option<f64>) -> Self {
        self.epsilon = epsilon;
        self.lambda = lambda;
        self
    }

    pub fn component(&self, i: usize) -> Estimate {
        Estimate::new(self.value[i], self.se[i])
    }

    pub fn components(&self) -> Vec<Estimate> {
        (0..self.value.len()).map(|i| self.component(i)).collect()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.value.iter().map(|v| v * v).sum())
    }
}

/// Overall and per-batch means of a fixed list of per-sample quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchedMeans {
    pub n: u64,
    pub total: Vec<f64>,
    pub batches: Vec<Vec<f64>>,
}

/// Contiguous batch boundaries; sizes differ by at most one.
pub fn batch_bounds(n: usize, batches: usize) -> Vec<(usize, usize)> {
    let batches = batches.min(n).max(1);
    (0..batches)
        .map(|b| (b * n / batches, (b + 1) * n / batches))
        .collect()
}

impl BatchedMeans {
    /// Means of `width` quantities, where `f(i, out)` adds sample `i`'s values into `out`.
    pub fn accumulate(n: usize, batches: usize, width: usize, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut total = vec![0.0; width];
        let mut per = Vec::with_capacity(batches);
        for (lo, hi) in batch_bounds(n, batches) {
            let mut acc = vec![0.0; width];
            for i in lo..hi {
                f(i, &mut acc);
            }
            for (t, a) in total.iter_mut().zip(&acc) {
                *t += a;
            }
            let inv = 1.0 / (hi - lo) as f64;
            per.push(acc.into_iter().map(|a| a * inv).collect());
        }
        let inv = 1.0 / n as f64;
        BatchedMeans {
            n: n as u64,
            total: total.into_iter().map(|t| t * inv).collect(),
            batches: per,
        }
    }

    /// Combines partial results computed over consecutive sample ranges.
    pub fn concat(parts: Vec<BatchedMeans>) -> Self {
        let n: u64 = parts.iter().map(|p| p.n).sum();
        let width = parts.first().map_or(0, |p| p.total.len());
        let mut total = vec![0.0; width];
        let mut batches = Vec::new();
        for p in parts {
            for (t, v) in total.iter_mut().zip(&p.total) {
                *t += v * p.n as f64;
            }
            batches.extend(p.batches);
        }
        let inv = 1.0 / n as f64;
        BatchedMeans {
            n,
            total: total.into_iter().map(|t| t * inv).collect(),
            batches,
        }
    }

    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    /// Estimate of `f(means)`.
    pub fn estimate(&self, f: impl Fn(&[f64]) -> f64) -> Estimate {
        let value = f(&self.total);
        let per: Vec<f64> = self.batches.iter().map(|b| f(b)).collect();
        Estimate::new(value, batch_se(&per))
    }

    pub fn mean(&self, i: usize) -> Estimate {
        self.estimate(|m| m[i])
    }
}

/// Standard error of the mean of equally weighted batch values.
pub fn batch_se(values: &[f64]) -> f64 {
    let b = values.len();
    if b < 2 {
        return f64::INFINITY;
    }
    let mean = values.iter().sum::<f64>() / b as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1) as f64;
    libm::sqrt(var / b as f64)
}

/// Pearson correlation of paired samples.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / libm::sqrt(sxx * syy)
}

/// Least squares coefficients of `y ~ sum_j beta_j x^{p_j}`.
pub fn monomial_fit(x: &[f64], y: &[f64], powers: &[i32]) -> Vec<f64> {
    let k = powers.len();
    let mut a = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for (xi, yi) in x.iter().zip(y) {
        let row: Vec<f64> = powers.iter().map(|&p| libm::pow(*xi, p as f64)).collect();
        for i in 0..k {
            rhs[i] += row[i] * yi;
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    solve(a, rhs)
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Estimated sample count for `est` to reach standard error `target_se`,
/// assuming SE scales as `1/sqrt(n)`.
pub fn required_n(n: u64, se: f64, target_se: f64) -> u64 {
    if !(target_se > 0.0) || !se.is_finite() {
        return u64::MAX;
    }
    let ratio = se / target_se;
    let need = n as f64 * ratio * ratio;
    if need >= u64::MAX as f64 {
        u64::MAX
    } else {
        libm::ceil(need) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn batch_bounds_partition() {
        let b = batch_bounds(103, 10);
        assert_eq!(b.len(), 10);
        assert_eq!(b[0].0, 0);
        assert_eq!(b[9].1, 103);
        for w in b.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn mean_se_matches_iid_formula() {
        let mut rng = CounterRng::new(1, 2);
        let xs: Vec<f64> = (0..200_000).map(|_| rng.uniform()).collect();
        let m = BatchedMeans::accumulate(xs.len(), 40, 1, |i, o| o[0] += xs[i]);
        let e = m.mean(0);
        let iid = libm::sqrt(1.0 / 12.0 / xs.len() as f64);
        assert!((e.value - 0.5).abs() < 4.0 * iid);
        // batch-means SE scatters around the iid value with ~11% relative spread at 40 batches
        assert!((e.se / iid - 1.0).abs() < 0.45, "{} {}", e.se, iid);
    }

    #[test]
    fn concat_equals_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let whole = BatchedMeans::accumulate(1000, 10, 1, |i, o| o[0] += xs[i]);
        let a = BatchedMeans::accumulate(500, 5, 1, |i, o| o[0] += xs[i]);
        let b = BatchedMeans::accumulate(500, 5, 1, |i, o| o[0] += xs[500 + i]);
        let c = BatchedMeans::concat(alloc::vec![a, b]);
        assert_eq!(whole.batches, c.batches);
        assert!((whole.total[0] - c.total[0]).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_polynomial() {
        let x = [0.02, 0.04, 0.06, 0.08, 0.1, 0.12];
        let y: Vec<f64> = x.iter().map(|e| -2.0 * e * e + 5.0 * e * e * e).collect();
        let c = monomial_fit(&x, &y, &[2, 3]);
        assert!((c[0] + 2.0).abs() < 1e-9 && (c[1] - 5.0).abs() < 1e-7);
    }

    #[test]
    fn correlation_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert!((correlation(&x, &y) - 1.0).abs() < 1e-15);
        let z = [8.0, 6.0, 4.0, 2.0];
        assert!((correlation(&x, &z) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn required_n_scales_quadratically() {
        assert_eq!(required_n(1000, 2.0, 1.0), 4000);
        assert_eq!(required_n(1000, 0.5, 1.0), 250);
    }

    #[test]
    fn ci_logic() {
        let e = Estimate::new(1.0, 0.2);
        assert!(e.excludes_zero());
        assert!(!Estimate::new(0.5, 0.2).excludes_zero());
        assert!(e.contains(1.5, 3.0));
        assert_eq!(difference(e, e).value, 0.0);
    }
}
