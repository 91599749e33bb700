//! Local times sampled directly, without running the walk.
//!
//! Given `β(u) = b`, the local times of the children of `u` are negative
//! multinomial with `b` trials: the total is `NB(b, S/(1+S))` with
//! `S = Σ e^{-(V(child) - V(u))}`, split multinomially in proportion to the
//! child weights. Expanding generation by generation yields the law of the
//! local-time tree under `P_b`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};

use crate::env::EnvironmentModel;
use crate::error::{Error, Result};

/// `NB(trials, odds/(1+odds))`: failures before `trials` successes when a
/// failure has probability `odds/(1+odds)`.
pub fn sample_negative_binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, odds: f64) -> u64 {
    if trials == 0 || odds <= 0.0 {
        return 0;
    }
    let lambda = Gamma::new(trials as f64, odds)
        .expect("positive gamma parameters")
        .sample(rng);
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
}

/// Splits `total` multinomially over `weights`, writing into `out`.
pub fn sample_multinomial<R: Rng + ?Sized>(
    rng: &mut R,
    total: u64,
    weights: &[f64],
    out: &mut Vec<u64>,
) {
    out.clear();
    let mut left = total;
    let mut mass: f64 = weights.iter().sum();
    for (i, &w) in weights.iter().enumerate() {
        if i + 1 == weights.len() {
            out.push(left);
            break;
        }
        let k = if left == 0 || w <= 0.0 {
            0
        } else {
            let p = (w / mass).clamp(0.0, 1.0);
            Binomial::new(left, p).expect("valid binomial").sample(rng)
        };
        out.push(k);
        left -= k;
        mass -= w;
    }
}

/// Which vertices of the local-time tree get their children sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expand {
    /// Every vertex with `β > 0` strictly above generation `g`.
    ToGeneration(u32),
    /// The root and every vertex with `β ∉ {0, 1}`: the result is the
    /// optional line of the root together with its subtree of vertices
    /// carrying local time above one.
    OptionalLine,
}

/// Vertices with positive local time, listed generation by generation with
/// siblings contiguous and in birth order. Vertex 0 is the root.
#[derive(Clone, Debug, Default)]
pub struct LocalTimeTree {
    pub parent: Vec<usize>,
    pub generation: Vec<u32>,
    pub potential: Vec<f64>,
    pub beta: Vec<u64>,
}

impl LocalTimeTree {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// `|L^1|` when sampled with [`Expand::OptionalLine`].
    pub fn line_size(&self) -> u64 {
        self.beta[1..].iter().filter(|&&b| b == 1).count() as u64
    }

    /// `|B^1|` when sampled with [`Expand::OptionalLine`].
    pub fn block_size(&self) -> u64 {
        self.len() as u64 - 1
    }
}

/// Samples the local-time tree under `P_b` with `β(root) = b`.
pub fn sample_local_time_tree<R: Rng + ?Sized>(
    model: &EnvironmentModel,
    root_beta: u64,
    expand: Expand,
    budget: usize,
    rng: &mut R,
) -> Result<LocalTimeTree> {
    let mut t = LocalTimeTree::default();
    sample_into(model, root_beta, expand, budget, rng, &mut t)?;
    Ok(t)
}

/// As [`sample_local_time_tree`], reusing the buffers of `t`.
pub fn sample_into<R: Rng + ?Sized>(
    model: &EnvironmentModel,
    root_beta: u64,
    expand: Expand,
    budget: usize,
    rng: &mut R,
    t: &mut LocalTimeTree,
) -> Result<()> {
    t.parent.clear();
    t.generation.clear();
    t.potential.clear();
    t.beta.clear();
    t.parent.push(usize::MAX);
    t.generation.push(0);
    t.potential.push(0.0);
    t.beta.push(root_beta);
    let mut marks = Vec::new();
    let mut weights = Vec::new();
    let mut split = Vec::new();
    let mut u = 0;
    while u < t.len() {
        let b = t.beta[u];
        let g = t.generation[u];
        let go = match expand {
            Expand::ToGeneration(max) => g < max,
            Expand::OptionalLine => u == 0 || b != 1,
        };
        if go && b > 0 {
            model.sample_children(rng, &mut marks);
            weights.clear();
            weights.extend(marks.iter().map(|d| (-d).exp()));
            let s: f64 = weights.iter().sum();
            let k = sample_negative_binomial(rng, b, s);
            if k > 0 {
                sample_multinomial(rng, k, &weights, &mut split);
                let v = t.potential[u];
                for (i, &c) in split.iter().enumerate() {
                    if c > 0 {
                        if t.len() >= budget {
                            return Err(Error::BudgetExceeded {
                                what: "vertices",
                                limit: budget,
                            });
                        }
                        t.parent.push(u);
                        t.generation.push(g + 1);
                        t.potential.push(v + marks[i]);
                        t.beta.push(c);
                    }
                }
            }
        }
        u += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::calibrate_two_point;
    use crate::rng::{stream, Domain};

    #[test]
    fn negative_binomial_mean_and_variance() {
        let mut rng = stream(1, Domain::Test, 0);
        let (n, odds) = (3u64, 0.7);
        let reps = 200_000;
        let xs: Vec<f64> = (0..reps)
            .map(|_| sample_negative_binomial(&mut rng, n, odds) as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / reps as f64;
        let (m_exact, v_exact) = (n as f64 * odds, n as f64 * odds * (1.0 + odds));
        assert!((mean - m_exact).abs() < 4.0 * (v_exact / reps as f64).sqrt());
        assert!((var / v_exact - 1.0).abs() < 0.03);
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = stream(2, Domain::Test, 0);
        let mut out = Vec::new();
        for total in [0u64, 1, 7, 1000] {
            sample_multinomial(&mut rng, total, &[0.5, 0.0, 2.0, 1.0], &mut out);
            assert_eq!(out.iter().sum::<u64>(), total);
            assert_eq!(out[1], 0);
        }
    }

    #[test]
    fn optional_line_stops_at_unit_local_time() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let mut rng = stream(3, Domain::Test, 0);
        for _ in 0..1000 {
            let t = sample_local_time_tree(&m, 1, Expand::OptionalLine, 1 << 20, &mut rng).unwrap();
            for v in 1..t.len() {
                let p = t.parent[v];
                assert!(p == 0 || t.beta[p] != 1);
                assert!(t.beta[v] > 0);
            }
        }
    }
}
