//! Numerical checks of the three technical lemmas: the Lyapunov drift of
//! the `φ` chain, the moment bound for negative binomial variables, and the
//! stochastic envelope of a sequence converging in `L^p`.

use serde::{Deserialize, Serialize};

use crate::env::{ln_binomial, EnvironmentModel};
use crate::error::{Error, Result};
use crate::spine::ln_lyapunov_weight;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentBoundReport {
    pub n: u64,
    pub p: f64,
    pub alpha: f64,
    /// `E[X^{1+α}]` for `X ~ NB(n, p)`.
    pub lhs: f64,
    /// `16n(q + q^{1+α}) + 2n^{1+α}q^{1+α}` with `q = p/(1-p)`.
    pub rhs: f64,
    /// Number of series terms summed.
    pub terms: usize,
    /// Bound on the neglected tail of the series.
    pub remainder: f64,
    pub pass: bool,
    /// Set when the series had not reached relative accuracy `1e-12`.
    pub warning: Option<String>,
}

const NEGBIN_MAX_TERMS: usize = 50_000_000;

/// `E[X^{1+α}]` for the number `X` of successes of probability `p` before
/// the `n`-th failure, by direct summation of the series. The tail beyond
/// the last term is bounded by a geometric series once the term ratio has
/// dropped below one, and summation stops when that bound falls below
/// `1e-12` of the partial sum.
pub fn verify_negbin_bound(n: u64, p: f64, alpha: f64) -> Result<MomentBoundReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} is not in (0, 1)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} is not in (0, 1)")));
    }
    let q = p / (1.0 - p);
    let nf = n as f64;
    let rhs = 16.0 * nf * (q + q.powf(1.0 + alpha)) + 2.0 * nf.powf(1.0 + alpha) * q.powf(1.0 + alpha);
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let ln_term = |k: u64| -> f64 {
        let kf = k as f64;
        ln_binomial(n + k - 1, k) + kf * lp + nf * lq + (1.0 + alpha) * kf.ln()
    };
    let mut lhs = 0.0;
    let mut k = 1u64;
    let mut remainder = f64::INFINITY;
    let mut terms = 0;
    while terms < NEGBIN_MAX_TERMS {
        let t = ln_term(k).exp();
        lhs += t;
        terms += 1;
        let kf = k as f64;
        // t_{k+1}/t_k, nonincreasing in k
        let ratio = p * (nf + kf) / (kf + 1.0) * ((kf + 1.0) / kf).powf(1.0 + alpha);
        if ratio < 1.0 {
            remainder = t * ratio / (1.0 - ratio);
            if remainder <= 1e-12 * lhs {
                break;
            }
        }
        k += 1;
    }
    let warning = (remainder > 1e-12 * lhs)
        .then(|| format!("series not converged after {terms} terms, remainder bound {remainder:e}"));
    Ok(MomentBoundReport {
        n,
        p,
        alpha,
        lhs,
        rhs,
        terms,
        remainder,
        pass: lhs + remainder <= rhs,
        warning,
    })
}

/// The 27-cell grid `n ∈ {1, 5, 20}`, `p ∈ {0.1, 0.5, 0.9}`,
/// `α ∈ {0.2, 0.5, 0.8}`.
pub fn negbin_grid() -> Result<Vec<MomentBoundReport>> {
    let mut out = Vec::new();
    for n in [1, 5, 20] {
        for p in [0.1, 0.5, 0.9] {
            for alpha in [0.2, 0.5, 0.8] {
                out.push(verify_negbin_bound(n, p, alpha)?);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub alpha: f64,
    pub i_range: (u64, u64),
    /// `r_i = Σ_j p̂_{i,j} F(j) / F(i)` for `i` in the range.
    pub ratios: Vec<f64>,
    /// Upper bounds on the truncated part of each `r_i`.
    pub remainders: Vec<f64>,
    /// Largest remainder bound.
    pub truncation_bound: f64,
    /// `max r_i` over the range.
    pub d_observed: f64,
    pub all_below_one: bool,
    /// `ψ(1+α)`, the limit of `r_i`.
    pub psi_limit: f64,
    pub warning: Option<String>,
}

/// `Σ_{j ≥ 1} C(i+j-1, i) s^j/(1+s)^{i+j} F(j)/F(i)` for one displacement
/// with `s = e^{-V}`, summed up to `j_max` with a geometric bound on the
/// rest. Returns `(sum, remainder bound)`.
fn drift_series(i: u64, s: f64, alpha: f64, j_max: u64) -> (f64, f64) {
    let fi = i as f64;
    let x = s / (1.0 + s);
    let (ls, l1s) = (s.ln(), s.ln_1p());
    let lfi = ln_lyapunov_weight(i, alpha);
    let ln_term = |j: u64| -> f64 {
        let jf = j as f64;
        ln_binomial(i + j - 1, i) + jf * ls - (fi + jf) * l1s + ln_lyapunov_weight(j, alpha) - lfi
    };
    let mut sum = 0.0;
    let mut remainder = f64::INFINITY;
    for j in 1..=j_max {
        let t = ln_term(j).exp();
        sum += t;
        let jf = j as f64;
        // t_{j+1}/t_j, nonincreasing in j
        let ratio = x * (fi + jf) / jf * (jf + 1.0 + alpha) / (jf + 1.0);
        if ratio < 1.0 {
            remainder = t * ratio / (1.0 - ratio);
            if remainder <= 1e-16 * sum {
                break;
            }
        }
    }
    (sum, remainder)
}

/// Evaluates the drift ratios `r_i` exactly over the environment law, each
/// `j`-series truncated at `j_truncation` with a bounded remainder. A
/// warning is raised when a remainder bound exceeds `1e-6`.
pub fn verify_lyapunov(
    model: &EnvironmentModel,
    alpha: f64,
    i_range: (u64, u64),
    j_truncation: u64,
) -> Result<DriftReport> {
    if alpha < 0.0 {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} is negative")));
    }
    if let Some(k) = model.kappa().finite() {
        if alpha >= k - 1.0 {
            return Err(Error::Precondition(format!(
                "alpha = {alpha} is not below kappa - 1 = {}",
                k - 1.0
            )));
        }
    }
    let (lo, hi) = i_range;
    if lo == 0 || hi < lo {
        return Err(Error::InvalidArgument(format!("bad i range [{lo}, {hi}]")));
    }
    let mut ratios = Vec::new();
    let mut remainders = Vec::new();
    for i in lo..=hi {
        let r = model.first_moment(|v| drift_series(i, (-v).exp(), alpha, j_truncation).0);
        let rem = model.first_moment(|v| drift_series(i, (-v).exp(), alpha, j_truncation).1);
        ratios.push(r);
        remainders.push(rem);
    }
    let truncation_bound = remainders.iter().copied().fold(0.0, f64::max);
    let d_observed = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let warning = (truncation_bound > 1e-6)
        .then(|| format!("truncation remainder {truncation_bound:e} exceeds 1e-6; raise j_truncation"));
    Ok(DriftReport {
        alpha,
        i_range,
        all_below_one: ratios.iter().zip(&remainders).all(|(r, e)| r + e < 1.0),
        ratios,
        remainders,
        truncation_bound,
        d_observed,
        psi_limit: model.psi(1.0 + alpha),
        warning,
    })
}

/// The envelope `a_n Y` dominating `X_k` for all `k >= n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub r: f64,
    pub s: f64,
    /// `max_i E[X_i^s]`
    pub max_moment: f64,
    /// `a_n = (max_{i>=n} E[X_i^s] / max_i E[X_i^s])^{1/s}`, indexed from
    /// `n = 1`.
    pub a: Vec<f64>,
}

impl Envelope {
    /// `P(Y <= x) = (1 - M/x^s)^+`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            (1.0 - self.max_moment / x.powf(self.s)).max(0.0)
        }
    }

    /// `P(a_n Y > x)`.
    pub fn scaled_tail(&self, n: usize, x: f64) -> f64 {
        let a = self.a[n - 1];
        if a == 0.0 {
            if x < 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - self.cdf(x / a)
        }
    }
}

/// Builds the envelope from a table of moments `E[X_i^s]`, `i = 1, 2, ..`.
pub fn dominating_envelope(moments: &[f64], r: f64, s: f64) -> Result<Envelope> {
    if !(r > 0.0 && r < s) {
        return Err(Error::InvalidArgument(format!("need 0 < r < s, got r={r}, s={s}")));
    }
    if moments.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::InvalidArgument("moments must be finite and nonnegative".into()));
    }
    let max_moment = moments.iter().copied().fold(0.0, f64::max);
    if max_moment == 0.0 {
        return Err(Error::Degenerate("all moments vanish".into()));
    }
    let mut a = vec![0.0; moments.len()];
    let mut run = 0.0f64;
    for n in (0..moments.len()).rev() {
        run = run.max(moments[n]);
        a[n] = (run / max_moment).powf(1.0 / s);
    }
    Ok(Envelope { r, s, max_moment, a })
}

/// Counts grid points where an empirical tail `P(X_k > x)` exceeds
/// `P(a_n Y > x)` for some `k >= n`. `samples[k]` holds draws of `X_{k+1}`;
/// the envelope must be built from the moments of those same draws, in
/// which case Markov's inequality rules out any violation.
pub fn count_domination_violations(envelope: &Envelope, samples: &[Vec<f64>], grid: &[f64]) -> usize {
    let mut violations = 0;
    for n in 1..=samples.len() {
        for x in grid {
            let bound = envelope.scaled_tail(n, *x);
            for xs in &samples[n - 1..] {
                let tail = xs.iter().filter(|v| **v > *x).count() as f64 / xs.len() as f64;
                if tail > bound * (1.0 + 1e-12) {
                    violations += 1;
                }
            }
        }
    }
    violations
}

/// Empirical `E[|X|^s]` of each sample.
pub fn empirical_moments(samples: &[Vec<f64>], s: f64) -> Vec<f64> {
    samples
        .iter()
        .map(|xs| xs.iter().map(|x| x.abs().powf(s)).sum::<f64>() / xs.len() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::calibrate_two_point;
    use crate::spine::phat_row;

    #[test]
    fn negbin_first_case() {
        let r = verify_negbin_bound(1, 0.5, 0.5).unwrap();
        assert!((r.rhs - 34.0).abs() < 1e-12);
        // X ~ Geometric(1/2) on {0,1,..}: E[X^{1.5}] = Σ k^{1.5} 2^{-k-1}
        let direct: f64 = (1..200).map(|k| (k as f64).powf(1.5) * 0.5f64.powi(k + 1)).sum();
        assert!((r.lhs - direct).abs() < 1e-12 * direct);
        assert!(r.pass);
        assert!(r.warning.is_none());
    }

    #[test]
    fn negbin_small_p_vanishes() {
        let r = verify_negbin_bound(1, 1e-9, 0.3).unwrap();
        assert!(r.lhs < 2e-9 && r.pass);
    }

    #[test]
    fn negbin_grid_is_monotone() {
        for alpha in [0.2, 0.5, 0.8] {
            for n in [1, 5, 20] {
                let mut prev = 0.0;
                for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
                    let r = verify_negbin_bound(n, p, alpha).unwrap();
                    assert!(r.lhs >= prev);
                    prev = r.lhs;
                }
            }
            for p in [0.1, 0.5, 0.9] {
                let mut prev = 0.0;
                for n in [1, 2, 5, 10, 20] {
                    let r = verify_negbin_bound(n, p, alpha).unwrap();
                    assert!(r.lhs >= prev);
                    prev = r.lhs;
                }
            }
        }
    }

    #[test]
    fn negbin_rejects_bad_input() {
        assert!(verify_negbin_bound(0, 0.5, 0.5).is_err());
        assert!(verify_negbin_bound(1, 1.0, 0.5).is_err());
        assert!(verify_negbin_bound(1, 0.5, 1.0).is_err());
    }

    #[test]
    fn drift_at_alpha_zero_is_the_row_sum() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let d = verify_lyapunov(&m, 0.0, (1, 10), 100_000).unwrap();
        for (k, r) in d.ratios.iter().enumerate() {
            let row = phat_row(&m, k as u64 + 1, 2000);
            let sum: f64 = row.cells.iter().sum::<f64>() + row.tail_mass;
            assert!((r - sum).abs() < 1e-12, "{r} vs {sum}");
            assert!((r - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn drift_matches_explicit_cells() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let alpha = 0.3;
        let i = 7;
        let d = verify_lyapunov(&m, alpha, (i, i), 100_000).unwrap();
        let row = phat_row(&m, i, 3000);
        let lfi = ln_lyapunov_weight(i, alpha);
        let direct: f64 = row
            .cells
            .iter()
            .enumerate()
            .map(|(k, p)| p * (ln_lyapunov_weight(k as u64 + 1, alpha) - lfi).exp())
            .sum();
        assert!((d.ratios[0] - direct).abs() < 1e-10, "{} vs {direct}", d.ratios[0]);
    }

    #[test]
    fn drift_requires_alpha_below_kappa_minus_one() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        assert!(matches!(verify_lyapunov(&m, 0.6, (1, 2), 100), Err(Error::Precondition(_))));
    }

    #[test]
    fn drift_decreases_to_psi() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let d = verify_lyapunov(&m, 0.3, (20, 60), 100_000).unwrap();
        assert!(d.all_below_one && d.warning.is_none());
        assert!(d.ratios.windows(2).all(|w| w[1] < w[0]));
        assert!(d.ratios.iter().all(|r| *r > d.psi_limit));
        // r_i = ψ(1+α) + c/i + O(i^-2)
        let r = |i| verify_lyapunov(&m, 0.3, (i, i), 200_000).unwrap().ratios[0];
        let limit = 2.0 * r(3200) - r(1600);
        assert!((limit - d.psi_limit).abs() < 1e-7, "{limit} vs {}", d.psi_limit);
    }

    #[test]
    fn constant_moments_give_unit_envelope() {
        let e = dominating_envelope(&[2.0; 5], 0.5, 1.0).unwrap();
        assert!(e.a.iter().all(|a| *a == 1.0));
    }

    #[test]
    fn geometric_moments_give_geometric_envelope() {
        let (c, rho, s) = (3.0, 0.5f64, 1.3);
        let m: Vec<f64> = (1..=10).map(|n| c * rho.powi(n)).collect();
        let e = dominating_envelope(&m, 1.0, s).unwrap();
        for n in 1..=10 {
            let expect = rho.powf(n as f64 / s) * rho.powf(-1.0 / s);
            assert!((e.a[n - 1] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn envelope_rejects_zero_moments() {
        assert!(matches!(dominating_envelope(&[0.0, 0.0], 0.5, 1.0), Err(Error::Degenerate(_))));
        assert!(dominating_envelope(&[1.0], 1.0, 1.0).is_err());
    }
}
