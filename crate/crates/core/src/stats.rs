//! Small statistical helpers shared by the estimators and their tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// Summation runs in slice order, so equal inputs give equal bits.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let nf = n as f64;
        let mean = compensated_sum(values.iter().copied()) / nf;
        let var = if n > 1 {
            compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (nf - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / nf).sqrt(),
            n,
        }
    }

    /// `mean ≤ bound + k·stderr`.
    pub fn within(&self, bound: f64, k: f64) -> bool {
        self.mean <= bound + k * self.stderr
    }
}

/// Neumaier summation: long replica sums stay accurate to a few ulps.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov survival function with Stephens' small-sample
/// correction, evaluated at `D` for effective size `n`.
fn kolmogorov_p(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_p(d, n),
    }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_p(d, na * nb / (na + nb)),
    }
}

/// Largest count still compatible at level `level` with `Binomial(n, p)`:
/// the `level`-quantile of that law.
pub fn binomial_upper_count(n: u64, p: f64, level: f64) -> u64 {
    let p = p.clamp(0.0, 1.0);
    if p >= 1.0 {
        return n;
    }
    if p <= 0.0 {
        return 0;
    }
    Binomial::new(p, n).map(|b| b.inverse_cdf(level)).unwrap_or(n)
}

/// Binned total-variation distance between two samples on a common grid of
/// `bins` equal cells over `[0, max]`, with a delta-method standard error.
pub fn binned_tv(a: &[f64], b: &[f64], bins: usize) -> (f64, f64) {
    let bins = bins.max(2);
    let top = a.iter().chain(b).copied().fold(0.0_f64, f64::max);
    if top <= 0.0 || a.is_empty() || b.is_empty() {
        return (0.0, 0.0);
    }
    let width = top / bins as f64;
    let hist = |xs: &[f64]| {
        let mut h = vec![0usize; bins];
        for &x in xs {
            let k = ((x / width) as usize).min(bins - 1);
            h[k] += 1;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut tv = 0.0;
    let mut se = 0.0;
    for k in 0..bins {
        let (p, q) = (ha[k] as f64 / na, hb[k] as f64 / nb);
        tv += (p - q).abs();
        se += (p * (1.0 - p) / na + q * (1.0 - q) / nb).sqrt();
    }
    (0.5 * tv, 0.5 * se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_reference_points() {
        // P(K > 1.358) ≈ 0.05 and P(K > 1.628) ≈ 0.01 in the n → ∞ limit
        let big: f64 = 1e12;
        assert!((kolmogorov_p(1.358 / big.sqrt(), big) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_p(1.628 / big.sqrt(), big) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn binomial_quantile_brackets_mean() {
        let k = binomial_upper_count(10_000, 0.1, 0.99);
        // mean 1000, sd 30, 99% quantile ≈ mean + 2.33 sd
        assert!((1065..=1075).contains(&k), "{k}");
        assert_eq!(binomial_upper_count(100, 0.0, 0.99), 0);
        assert_eq!(binomial_upper_count(100, 1.5, 0.99), 100);
    }

    #[test]
    fn tv_of_identical_samples_is_zero() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(binned_tv(&a, &a, 10).0, 0.0);
        let b: Vec<f64> = (0..100).map(|i| 200.0 + i as f64).collect();
        assert!((binned_tv(&a, &b, 10).0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_estimate_basic() {
        let m = MeanEstimate::from_values(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
