//! Estimators and goodness-of-fit tests, plus the verification experiments
//! built on them.

pub mod appendix;
pub mod experiments;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailEstimator {
    Hill,
    LoglogRegression,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub index: f64,
    pub k_used: usize,
    /// 95% interval.
    pub ci: (f64, f64),
    pub sample_size: usize,
    pub estimator: TailEstimator,
}

impl TailEstimate {
    /// Half-width of the interval divided by 1.96.
    pub fn stderr(&self) -> f64 {
        (self.ci.1 - self.ci.0) / (2.0 * 1.96)
    }
}

fn top_k(samples: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k >= samples.len() {
        return Err(Error::InvalidArgument(format!(
            "need 0 < k < n, got k={k}, n={}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidArgument("samples must be positive and finite".into()));
    }
    let mut s = samples.to_vec();
    s.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let mut head = s[..=k].to_vec();
    head.sort_by(|a, b| b.total_cmp(a));
    Ok(head)
}

/// Default number of order statistics, `⌈n^{0.6}⌉`.
pub fn default_k(n: usize) -> usize {
    ((n as f64).powf(0.6).ceil() as usize).min(n.saturating_sub(1)).max(1)
}

/// Hill estimator `k / Σ_{i<k} ln(x_(i) / x_(k))` on the `k` largest
/// values, with the asymptotic-normal interval `index (1 ± 1.96/√k)`.
pub fn hill(samples: &[f64], k: usize) -> Result<TailEstimate> {
    let head = top_k(samples, k)?;
    let lk = head[k].ln();
    let h: f64 = head[..k].iter().map(|x| x.ln() - lk).sum::<f64>() / k as f64;
    if h <= 0.0 {
        return Err(Error::Degenerate("the top order statistics are all equal".into()));
    }
    let index = 1.0 / h;
    let half = 1.96 * index / (k as f64).sqrt();
    Ok(TailEstimate {
        index,
        k_used: k,
        ci: (index - half, index + half),
        sample_size: samples.len(),
        estimator: TailEstimator::Hill,
    })
}

/// Least-squares slope of `ln P(X > x)` against `ln x` over the `k`
/// largest values.
pub fn loglog_regression(samples: &[f64], k: usize) -> Result<TailEstimate> {
    let head = top_k(samples, k)?;
    let n = samples.len() as f64;
    let pts: Vec<(f64, f64)> = head[..k]
        .iter()
        .enumerate()
        .map(|(i, x)| (x.ln(), ((i as f64 + 0.5) / n).ln()))
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("the top order statistics are all equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum::<f64>()
        / (k as f64 - 2.0).max(1.0);
    let se = (resid / sxx).sqrt();
    let index = -slope;
    Ok(TailEstimate {
        index,
        k_used: k,
        ci: (index - 1.96 * se, index + 1.96 * se),
        sample_size: samples.len(),
        estimator: TailEstimator::LoglogRegression,
    })
}

/// Hill estimates at `k = ⌈n^e⌉` for each exponent `e`.
pub fn hill_sweep(samples: &[f64], exponents: &[f64]) -> Result<Vec<TailEstimate>> {
    let n = samples.len();
    exponents
        .iter()
        .map(|e| hill(samples, ((n as f64).powf(*e).ceil() as usize).min(n - 1)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub cells: usize,
}

/// Pearson goodness of fit of `observed` counts to cell probabilities
/// `probs`. Mass not covered by `probs` forms one extra cell whose count is
/// `rest`, and adjacent cells are pooled until every expected count reaches
/// `min_expected`.
pub fn chi_square(observed: &[u64], rest: u64, probs: &[f64], min_expected: f64) -> Result<ChiSquareTest> {
    if observed.len() != probs.len() {
        return Err(Error::InvalidArgument("length mismatch".into()));
    }
    let total: u64 = observed.iter().sum::<u64>() + rest;
    if total == 0 {
        return Err(Error::Degenerate("no observations".into()));
    }
    let n = total as f64;
    let listed: f64 = probs.iter().sum();
    let rest_p = (1.0 - listed).max(0.0);
    let mut cells: Vec<(f64, f64)> = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| (o as f64, n * p))
        .collect();
    cells.push((rest as f64, n * rest_p));
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for c in cells {
        acc.0 += c.0;
        acc.1 += c.1;
        if acc.1 >= min_expected {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => pooled.push(acc),
        }
    }
    if pooled.len() < 2 {
        return Err(Error::Degenerate("fewer than two cells after pooling".into()));
    }
    let statistic: f64 = pooled
        .iter()
        .map(|(o, e)| if *e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let dof = pooled.len() - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(statistic);
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value,
        cells: pooled.len(),
    })
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Empirical quantile by linear interpolation.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(a - b) / sqrt(se_a^2 + se_b^2)`.
pub fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let s = (se_a * se_a + se_b * se_b).sqrt();
    if s == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b) / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;
    use rand::Rng;

    fn pareto(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Domain::Test, 0);
        (0..n)
            .map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / alpha))
            .collect()
    }

    #[test]
    fn hill_recovers_pareto_indices() {
        let x = pareto(1.5, 1_000_000, 1);
        let h = hill(&x, 10_000).unwrap();
        assert!((1.45..=1.55).contains(&h.index), "{h:?}");
        assert!(h.ci.0 < h.index && h.index < h.ci.1);
        let x = pareto(1.0, 1_000_000, 2);
        let h = hill(&x, 10_000).unwrap();
        assert!((0.97..=1.03).contains(&h.index), "{h:?}");
    }

    #[test]
    fn loglog_regression_on_pareto() {
        let x = pareto(1.5, 200_000, 3);
        let h = loglog_regression(&x, 2000).unwrap();
        assert!((h.index - 1.5).abs() < 0.1, "{h:?}");
    }

    #[test]
    fn hill_rejects_constant_and_bad_input() {
        assert!(matches!(hill(&[2.0; 100], 10), Err(Error::Degenerate(_))));
        assert!(hill(&[1.0, 2.0], 2).is_err());
        assert!(hill(&[1.0, -2.0, 3.0], 1).is_err());
    }

    #[test]
    fn chi_square_accepts_the_true_law_and_rejects_a_wrong_one() {
        let mut rng = stream(4, Domain::Test, 0);
        let p = [0.5, 0.25, 0.125];
        let mut counts = [0u64; 3];
        let n = 100_000;
        let mut rest = 0;
        for _ in 0..n {
            let u: f64 = rng.random();
            match u {
                u if u < 0.5 => counts[0] += 1,
                u if u < 0.75 => counts[1] += 1,
                u if u < 0.875 => counts[2] += 1,
                _ => rest += 1,
            }
        }
        assert!(rest > 0);
        let t = chi_square(&counts, rest, &p, 5.0).unwrap();
        assert_eq!(t.dof, 3);
        assert!(t.p_value > 0.001);
        let bad = chi_square(&counts, rest, &[0.45, 0.3, 0.125], 5.0).unwrap();
        assert!(bad.p_value < 1e-6);
    }

    #[test]
    fn ks_distance_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_distance(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn default_k_grows_like_n_to_the_point_six() {
        assert_eq!(default_k(1_000_000), 3982);
        assert_eq!(default_k(2), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn hill_is_scale_invariant(seed in 0u64..1000, c in 1e-3f64..1e3) {
            let x = pareto(1.3, 2000, seed);
            let y: Vec<f64> = x.iter().map(|v| v * c).collect();
            let (a, b) = (hill(&x, 100).unwrap(), hill(&y, 100).unwrap());
            prop_assert!((a.index - b.index).abs() <= 1e-9 * a.index);
        }

        #[test]
        fn ks_distance_is_a_symmetric_fraction(a in prop::collection::vec(0.0f64..1.0, 1..50), b in prop::collection::vec(0.0f64..1.0, 1..50)) {
            let d = ks_distance(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_distance(&b, &a));
        }
    }
}
