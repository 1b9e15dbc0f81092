//! Summary statistics, bootstrap intervals and goodness-of-fit tests used
//! by the runner, the verification suites and the acceptance checks.

use rand::{Rng, SeedableRng};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::numeric::compensated_sum;
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for one value.
    pub std: f64,
    pub std_err: f64,
}

impl Summary {
    pub fn two_std(&self) -> f64 {
        2.0 * self.std
    }
}

pub fn summarize(xs: &[f64]) -> Option<Summary> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len();
    let mean = compensated_sum(xs.iter().copied()) / n as f64;
    let std = if n > 1 {
        (compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        n,
        mean,
        std,
        std_err: std / (n as f64).sqrt(),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Lower end of the one-sided `level` bootstrap interval for
/// `mean(a) - mean(b)`, resampling each group independently.
pub fn bootstrap_diff_lower(a: &[f64], b: &[f64], resamples: usize, level: f64, seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut diffs: Vec<f64> = (0..resamples)
        .map(|_| resample_mean(a, &mut rng) - resample_mean(b, &mut rng))
        .collect();
    diffs.sort_by(f64::total_cmp);
    let idx = ((1.0 - level) * resamples as f64).floor() as usize;
    diffs[idx.min(resamples - 1)]
}

fn resample_mean(xs: &[f64], rng: &mut SimRng) -> f64 {
    (0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]).sum::<f64>() / xs.len() as f64
}

/// Two-sample Kolmogorov-Smirnov test: statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = 2.0 * if k % 2 == 1 { 1.0 } else { -1.0 } * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Pearson chi-square test of observed counts against expected
/// probabilities; cells with zero probability must have zero counts.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            if c > 0 {
                return 0.0;
            }
            continue;
        }
        let e = p * total as f64;
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).expect("positive dof").cdf(stat)
}

/// Wilson score lower bound for a binomial proportion at normal quantile `z`.
pub fn wilson_lower(successes: u64, trials: u64, z: f64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let center = p + z2 / (2.0 * n);
    let margin = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - margin) / (1.0 + z2 / n)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_sample() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.std_err - s.std / 2.0).abs() < 1e-15);
        assert!(summarize(&[]).is_none());
        assert_eq!(summarize(&[3.0]).unwrap().std, 0.0);
    }

    #[test]
    fn bootstrap_separates_clear_differences() {
        let a = vec![1.0; 30];
        let b: Vec<f64> = (0..30).map(|i| (i % 2) as f64 * 0.2).collect();
        assert!(bootstrap_diff_lower(&a, &b, 2000, 0.95, 1) > 0.8);
        assert!(bootstrap_diff_lower(&b, &a, 2000, 0.95, 1) < 0.0);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!((d - 0.5).abs() <= 1.0 / 200.0 + 1e-12);
        assert!(p < 1e-6);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Q(1.36) is the classical 5% point
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn chi_square_accepts_exact_counts() {
        assert!(chi_square_p(&[250, 250, 500], &[0.25, 0.25, 0.5]) > 0.99);
        assert!(chi_square_p(&[400, 100, 500], &[0.25, 0.25, 0.5]) < 1e-6);
        assert_eq!(chi_square_p(&[1, 0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn wilson_bound_is_below_the_rate() {
        let lo = wilson_lower(30, 100, 2.326);
        assert!(lo < 0.3 && lo > 0.18);
    }
}
