//! Marked Galton-Watson environments.
//!
//! An environment is the law of the point process `(ν, (Δ_1, .., Δ_ν))`
//! describing the displacements of the children of a vertex relative to
//! that vertex. The branching potential `V` is the running sum of
//! displacements along ancestral lines, with `V(root) = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub prob: f64,
    pub marks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentModel {
    /// Every vertex has `m` children, all displaced by `ln λ`.
    LambdaBiased { m: u32, lambda: f64 },
    /// `offspring` children with i.i.d. marks: `mark_low` with probability
    /// `prob_low`, `mark_high` otherwise.
    TwoPointMarks {
        offspring: u32,
        mark_low: f64,
        mark_high: f64,
        prob_low: f64,
    },
    /// Finitely many point configurations with given probabilities.
    Tabulated { atoms: Vec<Atom> },
}

/// Value of `inf{t > 1 : ψ(t) >= 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Kappa {
    Finite(f64),
    Infinite,
    Indeterminate,
}

impl Kappa {
    pub fn finite(self) -> Option<f64> {
        match self {
            Kappa::Finite(k) => Some(k),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub mean_offspring: f64,
    pub psi_at_one: f64,
    pub psi_prime_at_one: f64,
    pub psi_min_on_unit: f64,
    pub argmin_on_unit: f64,
    pub kappa: Kappa,
    pub psi_at_kappa: Option<f64>,
    /// `E[Σ (-V ∨ 0) e^{-κV}]`
    pub negative_part_moment: Option<f64>,
    /// `E[(Σ e^{-V})^κ]`
    pub weight_sum_moment: Option<f64>,
    pub non_lattice: bool,
    pub passes_hc: bool,
    pub passes_hk: bool,
}

/// Search horizon for κ.
const KAPPA_T_MAX: f64 = 1.0e4;

impl EnvironmentModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidModel(s));
        match self {
            EnvironmentModel::LambdaBiased { m, lambda } => {
                if *m == 0 {
                    return bad("m must be positive".into());
                }
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return bad(format!("lambda must be positive and finite, got {lambda}"));
                }
            }
            EnvironmentModel::TwoPointMarks {
                offspring,
                mark_low,
                mark_high,
                prob_low,
            } => {
                if *offspring == 0 {
                    return bad("offspring must be positive".into());
                }
                if !(mark_low.is_finite() && mark_high.is_finite()) {
                    return bad("marks must be finite".into());
                }
                if !(*prob_low > 0.0 && *prob_low < 1.0) {
                    return bad(format!("prob_low must lie in (0,1), got {prob_low}"));
                }
            }
            EnvironmentModel::Tabulated { atoms } => {
                if atoms.is_empty() {
                    return bad("no atoms".into());
                }
                let mut total = 0.0;
                for a in atoms {
                    if !(a.prob >= 0.0 && a.prob.is_finite()) {
                        return bad(format!("atom probability {} is not in [0,1]", a.prob));
                    }
                    if a.marks.iter().any(|m| !m.is_finite()) {
                        return bad("marks must be finite".into());
                    }
                    total += a.prob;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("atom probabilities sum to {total}"));
                }
            }
        }
        Ok(())
    }

    /// `E[Σ_{|u|=1} f(V(u))]`.
    pub fn first_moment(&self, f: impl Fn(f64) -> f64) -> f64 {
        match self {
            EnvironmentModel::LambdaBiased { m, lambda } => f64::from(*m) * f(lambda.ln()),
            EnvironmentModel::TwoPointMarks {
                offspring,
                mark_low,
                mark_high,
                prob_low,
            } => {
                f64::from(*offspring)
                    * (prob_low * f(*mark_low) + (1.0 - prob_low) * f(*mark_high))
            }
            EnvironmentModel::Tabulated { atoms } => atoms
                .iter()
                .map(|a| a.prob * a.marks.iter().map(|&v| f(v)).sum::<f64>())
                .sum(),
        }
    }

    /// `E[g(Σ_{|u|=1} e^{-V(u)})]`.
    pub fn weight_sum_moment(&self, g: impl Fn(f64) -> f64) -> f64 {
        match self {
            EnvironmentModel::LambdaBiased { m, lambda } => g(f64::from(*m) / lambda),
            EnvironmentModel::TwoPointMarks {
                offspring,
                mark_low,
                mark_high,
                prob_low,
            } => {
                let n = *offspring;
                let (wl, wh) = ((-mark_low).exp(), (-mark_high).exp());
                (0..=n)
                    .map(|k| {
                        let lp = ln_binomial(u64::from(n), u64::from(k))
                            + f64::from(k) * prob_low.ln()
                            + f64::from(n - k) * (1.0 - prob_low).ln();
                        lp.exp() * g(f64::from(k) * wl + f64::from(n - k) * wh)
                    })
                    .sum()
            }
            EnvironmentModel::Tabulated { atoms } => atoms
                .iter()
                .map(|a| a.prob * g(a.marks.iter().map(|v| (-v).exp()).sum()))
                .sum(),
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.first_moment(|v| (-t * v).exp())
    }

    pub fn psi_derivative(&self, t: f64) -> f64 {
        self.first_moment(|v| -v * (-t * v).exp())
    }

    pub fn mean_offspring(&self) -> f64 {
        self.first_moment(|_| 1.0)
    }

    pub fn max_offspring(&self) -> usize {
        match self {
            EnvironmentModel::LambdaBiased { m, .. } => *m as usize,
            EnvironmentModel::TwoPointMarks { offspring, .. } => *offspring as usize,
            EnvironmentModel::Tabulated { atoms } => {
                atoms.iter().map(|a| a.marks.len()).max().unwrap_or(0)
            }
        }
    }

    /// Distinct marks charged with positive probability.
    pub fn support(&self) -> Vec<f64> {
        let mut s: Vec<f64> = match self {
            EnvironmentModel::LambdaBiased { lambda, .. } => vec![lambda.ln()],
            EnvironmentModel::TwoPointMarks {
                mark_low,
                mark_high,
                ..
            } => vec![*mark_low, *mark_high],
            EnvironmentModel::Tabulated { atoms } => atoms
                .iter()
                .filter(|a| a.prob > 0.0)
                .flat_map(|a| a.marks.iter().copied())
                .collect(),
        };
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    /// Law of one step of the tilted walk `Ŝ`: each mark `v` charged with
    /// `E[Σ 1{V(u)=v} e^{-V(u)}] / ψ(1)`. Atoms are sorted and merged.
    pub fn tilted_step_law(&self) -> Vec<(f64, f64)> {
        let mut raw: Vec<(f64, f64)> = match self {
            EnvironmentModel::LambdaBiased { m, lambda } => {
                vec![(lambda.ln(), f64::from(*m) / lambda)]
            }
            EnvironmentModel::TwoPointMarks {
                offspring,
                mark_low,
                mark_high,
                prob_low,
            } => {
                let n = f64::from(*offspring);
                vec![
                    (*mark_low, n * prob_low * (-mark_low).exp()),
                    (*mark_high, n * (1.0 - prob_low) * (-mark_high).exp()),
                ]
            }
            EnvironmentModel::Tabulated { atoms } => atoms
                .iter()
                .flat_map(|a| a.marks.iter().map(move |&v| (v, a.prob * (-v).exp())))
                .collect(),
        };
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut law: Vec<(f64, f64)> = Vec::new();
        for (v, w) in raw {
            match law.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => law.push((v, w)),
            }
        }
        let total: f64 = law.iter().map(|p| p.1).sum();
        law.retain(|p| p.1 > 0.0);
        for p in &mut law {
            p.1 /= total;
        }
        law
    }

    /// Fills `out` with the displacements of the children of one vertex.
    pub fn sample_children<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        match self {
            EnvironmentModel::LambdaBiased { m, lambda } => {
                out.extend(std::iter::repeat_n(lambda.ln(), *m as usize));
            }
            EnvironmentModel::TwoPointMarks {
                offspring,
                mark_low,
                mark_high,
                prob_low,
            } => {
                for _ in 0..*offspring {
                    out.push(if rng.random::<f64>() < *prob_low {
                        *mark_low
                    } else {
                        *mark_high
                    });
                }
            }
            EnvironmentModel::Tabulated { atoms } => {
                let a = pick_atom(atoms, rng.random::<f64>());
                out.extend_from_slice(&atoms[a].marks);
            }
        }
    }

    /// Fills `out` with children drawn from the law size-biased by
    /// `Σ e^{-V}`, and returns the index of the spine child, chosen with
    /// probability proportional to `e^{-V}`.
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) -> usize {
        out.clear();
        match self {
            EnvironmentModel::LambdaBiased { m, lambda } => {
                out.extend(std::iter::repeat_n(lambda.ln(), *m as usize));
                rng.random_range(0..*m as usize)
            }
            EnvironmentModel::TwoPointMarks {
                offspring,
                mark_low,
                mark_high,
                prob_low,
            } => {
                let n = *offspring as usize;
                let spine = rng.random_range(0..n);
                let wl = prob_low * (-mark_low).exp();
                let wh = (1.0 - prob_low) * (-mark_high).exp();
                let tilted_low = wl / (wl + wh);
                for i in 0..n {
                    let p = if i == spine { tilted_low } else { *prob_low };
                    out.push(if rng.random::<f64>() < p {
                        *mark_low
                    } else {
                        *mark_high
                    });
                }
                spine
            }
            EnvironmentModel::Tabulated { atoms } => {
                let total: f64 = atoms
                    .iter()
                    .map(|a| a.prob * a.marks.iter().map(|v| (-v).exp()).sum::<f64>())
                    .sum();
                let mut r = rng.random::<f64>() * total;
                let mut last = None;
                for (ai, a) in atoms.iter().enumerate() {
                    for (i, v) in a.marks.iter().enumerate() {
                        let w = a.prob * (-v).exp();
                        if w <= 0.0 {
                            continue;
                        }
                        last = Some((ai, i));
                        if r < w {
                            out.extend_from_slice(&a.marks);
                            return i;
                        }
                        r -= w;
                    }
                }
                let (ai, i) = last.expect("size-biased law needs a positive weight");
                out.extend_from_slice(&atoms[ai].marks);
                i
            }
        }
    }

    /// `inf{t > 1 : ψ(t) >= 1}`.
    pub fn kappa(&self) -> Kappa {
        if self.psi(1.0) >= 1.0 && self.psi_derivative(1.0) >= 0.0 {
            return Kappa::Finite(1.0);
        }
        let mut lo = 1.0;
        let mut step = 1e-3;
        loop {
            let hi = lo + step;
            if hi > KAPPA_T_MAX {
                break;
            }
            if self.psi(hi) >= 1.0 {
                return Kappa::Finite(bisect(|t| self.psi(t) - 1.0, lo, hi));
            }
            lo = hi;
            step *= 1.1;
        }
        let support = self.support();
        if support.first().is_some_and(|&v| v >= 0.0) {
            Kappa::Infinite
        } else {
            Kappa::Indeterminate
        }
    }

    pub fn check_hypotheses(&self, tol: f64) -> HypothesisReport {
        let m = self.mean_offspring();
        let psi1 = self.psi(1.0);
        let dpsi1 = self.psi_derivative(1.0);
        let (argmin, psi_min) = golden_min(|t| self.psi(t), 0.0, 1.0);
        let (argmin, psi_min) = if psi1 <= psi_min { (1.0, psi1) } else { (argmin, psi_min) };
        let kappa = self.kappa();
        let (psi_k, neg, wsum) = match kappa {
            Kappa::Finite(k) => (
                Some(self.psi(k)),
                Some(self.first_moment(|v| (-v).max(0.0) * (-k * v).exp())),
                Some(self.weight_sum_moment(|s| s.powf(k))),
            ),
            _ => (None, None, None),
        };
        let passes_hc = m > 1.0 && (psi_min - 1.0).abs() <= tol && dpsi1 < 0.0;
        let passes_hk = match kappa {
            Kappa::Finite(k) => {
                k > 1.0
                    && psi_k.is_some_and(|p| (p - 1.0).abs() <= tol)
                    && neg.is_some_and(f64::is_finite)
                    && wsum.is_some_and(f64::is_finite)
            }
            _ => false,
        };
        HypothesisReport {
            mean_offspring: m,
            psi_at_one: psi1,
            psi_prime_at_one: dpsi1,
            psi_min_on_unit: psi_min,
            argmin_on_unit: argmin,
            kappa,
            psi_at_kappa: psi_k,
            negative_part_moment: neg,
            weight_sum_moment: wsum,
            non_lattice: !is_lattice(&self.support()),
            passes_hc,
            passes_hk,
        }
    }
}

/// Two-point model with `ψ(1) = 1` and `ψ(κ) = 1`.
///
/// The probability of the low mark is fixed at `0.2 / offspring`; the two
/// marks are then determined by the two moment equations.
pub fn calibrate_two_point(kappa: f64, offspring: u32) -> Result<EnvironmentModel> {
    if !(kappa.is_finite() && kappa > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "kappa must be finite and > 1, got {kappa}"
        )));
    }
    if offspring < 2 {
        return Err(Error::InvalidArgument(
            "calibration needs at least two children".into(),
        ));
    }
    let n = f64::from(offspring);
    let p = 0.2 / n;
    let y_of = |x: f64| (1.0 / n - p * x) / (1.0 - p);
    let g = |x: f64| p * x.powf(kappa) + (1.0 - p) * y_of(x).powf(kappa) - 1.0 / n;
    let x = bisect(g, 1.0 / n, 1.0 / (n * p));
    let y = y_of(x);
    let model = EnvironmentModel::TwoPointMarks {
        offspring,
        mark_low: -x.ln(),
        mark_high: -y.ln(),
        prob_low: p,
    };
    let (p1, pk) = (model.psi(1.0), model.psi(kappa));
    if (p1 - 1.0).abs() > 1e-10 || (pk - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!(
            "calibration residuals too large: psi(1)={p1}, psi(kappa)={pk}"
        )));
    }
    Ok(model)
}

fn pick_atom(atoms: &[Atom], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, a) in atoms.iter().enumerate() {
        acc += a.prob;
        if u < acc {
            return i;
        }
    }
    atoms.iter().rposition(|a| a.prob > 0.0).unwrap_or(0)
}

/// Root of `f` on `[lo, hi]`, assuming `f(lo) < 0 <= f(hi)`.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let (fa0, fx) = (f(0.0), f(x));
    if fa0 <= fx {
        (0.0, fa0)
    } else {
        (x, fx)
    }
}

/// Heuristic lattice test: every nonzero mark is a rational multiple, with
/// denominator at most 10^4, of the first nonzero mark.
pub fn is_lattice(marks: &[f64]) -> bool {
    let nonzero: Vec<f64> = marks.iter().copied().filter(|v| *v != 0.0).collect();
    let Some(&base) = nonzero.first() else {
        return true;
    };
    nonzero
        .iter()
        .all(|v| rationalize(v / base, 10_000, 1e-9).is_some())
}

fn rationalize(x: f64, max_den: i64, tol: f64) -> Option<(i64, i64)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e12 {
            return None;
        }
        let a = a as i64;
        let (h2, k2) = (a * h1 + h0, a * k1 + k0);
        if k2 > max_den {
            return None;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol * x.abs().max(1.0) {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac == 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

pub(crate) fn ln_binomial(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn lambda_biased_is_critical_with_infinite_kappa() {
        let m = EnvironmentModel::LambdaBiased { m: 2, lambda: 2.0 };
        assert!(close(m.psi(1.0), 1.0, 1e-15));
        assert_eq!(m.kappa(), Kappa::Infinite);
        let r = m.check_hypotheses(1e-9);
        assert!(r.passes_hc);
        assert!(!r.passes_hk);
        assert!(!r.non_lattice);
    }

    #[test]
    fn calibration_at_kappa_two_is_closed_form() {
        // p = 0.1 forces e^{-a} = 2 and e^{-b} = 1/3.
        let m = calibrate_two_point(2.0, 2).unwrap();
        let EnvironmentModel::TwoPointMarks {
            mark_low,
            mark_high,
            prob_low,
            ..
        } = m
        else {
            unreachable!()
        };
        assert!(close(prob_low, 0.1, 1e-15));
        assert!(close(mark_low, -(2f64.ln()), 1e-12));
        assert!(close(mark_high, 3f64.ln(), 1e-12));
        assert!(close(m.kappa().finite().unwrap(), 2.0, 1e-9));
    }

    #[test]
    fn calibration_at_kappa_three_halves_matches_frozen_values() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let EnvironmentModel::TwoPointMarks {
            mark_low, mark_high, ..
        } = m
        else {
            unreachable!()
        };
        assert!(close(mark_low, -0.842_692_319_863_042_6, 1e-10));
        assert!(close(mark_high, 1.212_382_802_892_177_3, 1e-10));
        let r = m.check_hypotheses(1e-9);
        assert!(r.passes_hc && r.passes_hk && r.non_lattice);
        assert!(close(r.kappa.finite().unwrap(), 1.5, 1e-9));
    }

    #[test]
    fn calibration_rejects_bad_arguments() {
        assert!(calibrate_two_point(1.0, 2).is_err());
        assert!(calibrate_two_point(f64::NAN, 2).is_err());
        assert!(calibrate_two_point(1.5, 1).is_err());
    }

    #[test]
    fn lattice_detection() {
        assert!(is_lattice(&[1.0, 2.0]));
        assert!(is_lattice(&[0.5, -1.5, 0.0]));
        assert!(is_lattice(&[2f64.ln(), 4f64.ln()]));
        assert!(!is_lattice(&[2f64.ln(), 3f64.ln()]));
        assert!(!is_lattice(&[1.0, std::f64::consts::PI]));
    }

    #[test]
    fn tabulated_model_moments() {
        let m = EnvironmentModel::Tabulated {
            atoms: vec![
                Atom { prob: 0.5, marks: vec![0.0] },
                Atom { prob: 0.5, marks: vec![1.0, 2.0] },
            ],
        };
        m.validate().unwrap();
        let e = std::f64::consts::E;
        assert!(close(m.psi(1.0), 0.5 + 0.5 * (1.0 / e + 1.0 / (e * e)), 1e-15));
        assert!(close(m.mean_offspring(), 1.5, 1e-15));
        let ws = m.weight_sum_moment(|s| s);
        assert!(close(ws, m.psi(1.0), 1e-15));
        let law = m.tilted_step_law();
        assert_eq!(law.len(), 3);
        assert!(close(law.iter().map(|p| p.1).sum::<f64>(), 1.0, 1e-15));
    }

    #[test]
    fn validation_catches_bad_tables() {
        let m = EnvironmentModel::Tabulated {
            atoms: vec![Atom { prob: 0.4, marks: vec![0.0] }],
        };
        assert!(m.validate().is_err());
        let m = EnvironmentModel::TwoPointMarks {
            offspring: 2,
            mark_low: 0.0,
            mark_high: 1.0,
            prob_low: 1.0,
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn weight_sum_moment_of_two_point_matches_sampling() {
        let m = calibrate_two_point(1.5, 3).unwrap();
        let exact = m.weight_sum_moment(|s| s * s);
        let mut rng = stream(1, Domain::Test, 0);
        let mut buf = Vec::new();
        let n = 200_000;
        let (mut acc, mut acc2) = (0.0, 0.0);
        for _ in 0..n {
            m.sample_children(&mut rng, &mut buf);
            let s: f64 = buf.iter().map(|v| (-v).exp()).sum();
            acc += s * s;
            acc2 += s.powi(4);
        }
        let mean = acc / n as f64;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn size_biased_sampling_tilts_the_spine_mark() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let law = m.tilted_step_law();
        let mut rng = stream(2, Domain::Test, 0);
        let mut buf = Vec::new();
        let n = 200_000;
        let mut low = 0usize;
        for _ in 0..n {
            let s = m.sample_size_biased(&mut rng, &mut buf);
            if buf[s] == law[0].0 {
                low += 1;
            }
        }
        let p = law[0].1;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((low as f64 / n as f64) - p).abs() < 4.0 * se);
    }

    proptest! {
        #[test]
        fn calibration_hits_both_moment_equations(kappa in 1.05f64..=2.0, n in 2u32..5) {
            let m = calibrate_two_point(kappa, n).unwrap();
            prop_assert!(close(m.psi(1.0), 1.0, 1e-10));
            prop_assert!(close(m.psi(kappa), 1.0, 1e-10));
            prop_assert!(m.psi_derivative(1.0) < 0.0);
            let k = m.kappa().finite().unwrap();
            prop_assert!(close(k, kappa, 1e-8));
            prop_assert!(m.check_hypotheses(1e-9).passes_hk);
        }

        #[test]
        fn psi_is_convex(s in -2.0f64..4.0, t in -2.0f64..4.0, kappa in 1.1f64..2.0) {
            let m = calibrate_two_point(kappa, 2).unwrap();
            let mid = m.psi(0.5 * (s + t));
            prop_assert!(mid <= 0.5 * (m.psi(s) + m.psi(t)) * (1.0 + 1e-12));
        }
    }
}
