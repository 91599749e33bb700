//! Monte Carlo experiments built on the simulators: the constants of the
//! local-time tree estimated along independent routes, the quenched laws,
//! martingale means, tail exponents, the convergence of `L^1/n`, the exact
//! reduction identities on simulated walks and the self-similarity of
//! rescaled heights.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::appendix::{count_domination_violations, dominating_envelope, empirical_moments, Envelope};
use super::{chi_square, default_k, hill, ks_distance, quantile, z_score, ChiSquareTest, TailEstimate};
use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::height::scale;
use crate::par::{chunked, Moments, DEFAULT_CHUNK};
use crate::reduce::{check_reductions, positions, RangeForest};
use crate::rng::{derive_seed, stream, Domain, StreamRng};
use crate::spine::{
    estimate_eigen, martingales, phat, sample_spine, LineStats, PhiChain, SpineConfig, SpineStop, SpineWalks,
};
use crate::walk::branching::{sample_into, sample_multinomial, sample_negative_binomial, Expand, LocalTimeTree};
use crate::walk::{
    edge_local_times, excursion_local_times, forest_heights, run_walk, LocalTimes, TreeArena, WalkMode,
};

/// One line of a verification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub target_stderr: f64,
    pub z: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// Passes when `estimate` and `target`, each given with its standard
    /// error, differ by less than three combined standard errors.
    pub fn compare(check: impl Into<String>, estimate: (f64, f64), target: (f64, f64)) -> Self {
        let z = z_score(estimate.0, estimate.1, target.0, target.1);
        CheckRecord {
            check: check.into(),
            estimate: estimate.0,
            stderr: estimate.1,
            target: target.0,
            target_stderr: target.1,
            z,
            pass: z.abs() < 3.0,
        }
    }
}

fn require_critical(model: &EnvironmentModel) -> Result<()> {
    let p = model.psi(1.0);
    if (p - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("psi(1) = {p}, expected 1")));
    }
    Ok(())
}

fn flatten<T>(parts: Vec<Result<Vec<T>>>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn merge(parts: Vec<Result<Moments>>) -> Result<Moments> {
    let mut m = Moments::default();
    for p in parts {
        m.merge(&p?);
    }
    Ok(m)
}

fn mean_se(m: &Moments) -> (f64, f64) {
    (m.mean(), m.stderr())
}

fn line_stats(t: &LocalTimeTree) -> LineStats {
    let mut s = LineStats {
        line: 0,
        line_heights: 0,
        block: 0,
        block_beta: 0,
    };
    for u in 1..t.len() {
        s.block += 1;
        s.block_beta += t.beta[u];
        if t.beta[u] == 1 {
            s.line += 1;
            s.line_heights += u64::from(t.generation[u]);
        }
    }
    s
}

/// Optional-line statistics of `n` independent local-time trees under
/// `P_1`, each drawn from its quenched negative multinomial law.
pub fn line_samples(model: &EnvironmentModel, n: usize, vertex_budget: usize, seed: u64) -> Result<Vec<LineStats>> {
    flatten(chunked(n, DEFAULT_CHUNK, |range| {
        let mut t = LocalTimeTree::default();
        let mut out = Vec::with_capacity(range.len());
        for r in range {
            let mut rng = stream(seed, Domain::Excursion, r as u64);
            sample_into(model, 1, Expand::OptionalLine, vertex_budget, &mut rng, &mut t)?;
            out.push(line_stats(&t));
        }
        Ok(out)
    }))
}

/// Means over killed-walk spine samples stopped at `τ̂_1`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpineMoments {
    /// `τ̂_1`
    pub tau: Moments,
    /// `Σ_{k < τ̂_1} 1/φ_k`
    pub inverse_phi: Moments,
    /// Samples dropped at the walk budget.
    pub discarded: u64,
    /// Samples that did not return within the depth cap.
    pub unreturned: u64,
}

pub fn spine_moments(model: &EnvironmentModel, n: usize, config: &SpineConfig, seed: u64) -> Result<SpineMoments> {
    let parts = chunked(n, DEFAULT_CHUNK, |range| -> Result<SpineMoments> {
        let mut acc = SpineMoments::default();
        for r in range {
            let env_seed = derive_seed(seed, Domain::Spine, r as u64);
            let mut rng = stream(seed, Domain::SpineWalk, r as u64);
            match sample_spine(model, config, env_seed, &mut rng) {
                Ok(s) => match s.tau {
                    Some(t) => {
                        acc.tau.push(t as f64);
                        acc.inverse_phi.push(s.phi[..t].iter().map(|&p| 1.0 / p as f64).sum());
                    }
                    None => acc.unreturned += 1,
                },
                Err(Error::BudgetExceeded { .. }) => acc.discarded += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(acc)
    });
    let mut total = SpineMoments::default();
    for p in parts {
        let p = p?;
        total.tau.merge(&p.tau);
        total.inverse_phi.merge(&p.inverse_phi);
        total.discarded += p.discarded;
        total.unreturned += p.unreturned;
    }
    Ok(total)
}

/// `R_n / n` for `replicates` independent forest walks of `steps` steps,
/// each on a fresh environment.
pub fn range_fraction(model: &EnvironmentModel, steps: usize, replicates: usize, seed: u64) -> Result<Moments> {
    merge(chunked(replicates, 1, |range| {
        let mut m = Moments::default();
        for r in range {
            let env = derive_seed(seed, Domain::Environment, r as u64);
            let mut arena = TreeArena::new(model.clone(), env, WalkMode::Forest);
            let mut rng = stream(seed, Domain::Walk, r as u64);
            let mut seen: Vec<bool> = Vec::new();
            let mut count = 0usize;
            forest_heights(&mut arena, steps, &mut rng, |_, v, _| {
                let v = v as usize;
                if seen.len() <= v {
                    seen.resize(v + 1, false);
                }
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                }
            })?;
            m.push(count as f64 / steps as f64);
        }
        Ok(m)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityBudget {
    /// Local-time trees drawn under `P_1`.
    pub excursions: usize,
    /// Killed-walk spine samples.
    pub spine_samples: usize,
    /// Return times of the `φ` chain.
    pub chain_samples: usize,
    /// Copies of `Σ e^{-Ŝ_k}` for the eigenvectors.
    pub eigen_samples: usize,
    pub eigen_max_steps: usize,
    /// Length and number of the forest walks measuring the range.
    pub walk_steps: usize,
    pub walk_replicates: usize,
    /// Per-tree vertex cap for the local-time trees.
    pub vertex_budget: usize,
    /// Per-sample step cap for the killed walks.
    pub walk_budget: usize,
}

impl Default for IdentityBudget {
    fn default() -> Self {
        IdentityBudget {
            excursions: 1_000_000,
            spine_samples: 100_000,
            chain_samples: 1_000_000,
            eigen_samples: 1_000_000,
            eigen_max_steps: 1_000_000,
            walk_steps: 1_000_000,
            walk_replicates: 32,
            vertex_budget: 10_000_000,
            walk_budget: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub checks: Vec<CheckRecord>,
    pub spine_discarded: u64,
    pub spine_unreturned: u64,
    pub chain_unreturned: u64,
    pub eigen_capped: u64,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// The constants of the local-time tree, each estimated by at least two
/// independent routes:
///
/// * `E_1[L^1] = 1` from local-time trees;
/// * `μ = Ê_1[τ̂_1] = 1/π_1` from killed walks, from the `φ` chain and from
///   `E_1[Σ_{u ∈ L^1} |u|]`, against the eigenvectors;
/// * `R_n/n → b_1/2` from forest walks and from the ratio `m_R/m_X` of
///   block sums, against the eigenvectors;
/// * `m_R = E_1[|B^1|] = 1/a_1` from blocks and from `Ê_1[Σ_{k<τ̂_1} 1/φ_k]`;
/// * `m_X = E_1[2 Σ_{B^1} β] = 2/π_1` from blocks and from `2 Ê_1[τ̂_1]`.
pub fn identity_suite(model: &EnvironmentModel, budget: &IdentityBudget, seed: u64) -> Result<IdentityReport> {
    require_critical(model)?;
    let eigen = estimate_eigen(
        model,
        1,
        budget.eigen_max_steps,
        budget.eigen_samples,
        derive_seed(seed, Domain::Eigen, 0),
    )?;
    let (a1, b1, pi1) = (eigen.a1(), eigen.b1(), eigen.pi1());
    let mu = (1.0 / pi1, eigen.stderr_pi[0] / (pi1 * pi1));
    let m_r = (1.0 / a1, eigen.stderr_a[0] / (a1 * a1));
    let half_b = (b1 / 2.0, eigen.stderr_b[0] / 2.0);

    let lines = line_samples(model, budget.excursions, budget.vertex_budget, seed)?;
    let (mut line, mut heights, mut block, mut beta2) =
        (Moments::default(), Moments::default(), Moments::default(), Moments::default());
    let mut cross = 0.0;
    for s in &lines {
        line.push(s.line as f64);
        heights.push(s.line_heights as f64);
        block.push(s.block as f64);
        beta2.push(2.0 * s.block_beta as f64);
        cross += s.block as f64 * 2.0 * s.block_beta as f64;
    }
    let n = lines.len() as f64;
    let ratio = block.mean() / beta2.mean();
    let cov = (cross / n - block.mean() * beta2.mean()) * n / (n - 1.0);
    let rel_var = block.variance() / block.mean().powi(2) + beta2.variance() / beta2.mean().powi(2)
        - 2.0 * cov / (block.mean() * beta2.mean());
    let ratio_se = ratio * (rel_var.max(0.0) / n).sqrt();

    let spine_cfg = SpineConfig {
        walk_budget: budget.walk_budget,
        ..SpineConfig::first_return(SpineWalks::Collapsed)
    };
    let spine = spine_moments(model, budget.spine_samples, &spine_cfg, seed)?;

    let chain = PhiChain::new(model)?;
    let chain_parts = chunked(budget.chain_samples, DEFAULT_CHUNK, |range| {
        let mut m = Moments::default();
        let mut missed = 0u64;
        for r in range {
            let mut rng = stream(seed, Domain::Chain, r as u64);
            match chain.return_time(1, 1_000_000, &mut rng) {
                Some(t) => m.push(t as f64),
                None => missed += 1,
            }
        }
        (m, missed)
    });
    let mut chain_tau = Moments::default();
    let mut chain_unreturned = 0;
    for (m, missed) in &chain_parts {
        chain_tau.merge(m);
        chain_unreturned += missed;
    }

    let range = range_fraction(model, budget.walk_steps, budget.walk_replicates, seed)?;

    let tau2 = (2.0 * spine.tau.mean(), 2.0 * spine.tau.stderr());
    let checks = vec![
        CheckRecord::compare("line_mean/local_time_trees", mean_se(&line), (1.0, 0.0)),
        CheckRecord::compare("spine_depth/killed_walks", mean_se(&spine.tau), mu),
        CheckRecord::compare("spine_depth/phi_chain", mean_se(&chain_tau), mu),
        CheckRecord::compare("spine_depth/line_heights", mean_se(&heights), mu),
        CheckRecord::compare("range_fraction/forest_walks", mean_se(&range), half_b),
        CheckRecord::compare("range_fraction/block_ratio", (ratio, ratio_se), half_b),
        CheckRecord::compare("m_R/blocks", mean_se(&block), m_r),
        CheckRecord::compare("m_R/killed_walks", mean_se(&spine.inverse_phi), m_r),
        CheckRecord::compare("m_X/blocks", mean_se(&beta2), (2.0 * mu.0, 2.0 * mu.1)),
        CheckRecord::compare("m_X/killed_walks", tau2, (2.0 * mu.0, 2.0 * mu.1)),
    ];
    Ok(IdentityReport {
        checks,
        spine_discarded: spine.discarded,
        spine_unreturned: spine.unreturned,
        chain_unreturned,
        eigen_capped: eigen.capped,
    })
}

/// A goodness-of-fit test with its verdict at level `0.01`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub name: String,
    pub test: ChiSquareTest,
    pub pass: bool,
}

impl NamedTest {
    fn new(name: impl Into<String>, test: ChiSquareTest) -> Self {
        NamedTest {
            name: name.into(),
            pass: test.p_value > 0.01,
            test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub root_beta: u64,
    pub child_weights: Vec<f64>,
    pub tests: Vec<NamedTest>,
    /// Killed-walk spines dropped at the walk budget.
    pub spine_discarded: u64,
}

impl DistributionReport {
    pub fn all_pass(&self) -> bool {
        self.tests.iter().all(|t| t.pass)
    }
}

/// `ln P(n_1, .., n_k)` for the negative multinomial with `i` failures,
/// failure weight `1` and success weights `w`.
fn ln_negative_multinomial(i: u64, w: &[f64], n: &[u64]) -> f64 {
    let total: u64 = n.iter().sum();
    let l1s = (1.0 + w.iter().sum::<f64>()).ln();
    let mut l = ln_gamma((i + total) as f64) - ln_gamma(i as f64) - (i + total) as f64 * l1s;
    for (c, &k) in n.iter().enumerate() {
        l += k as f64 * w[c].ln() - ln_gamma(k as f64 + 1.0);
    }
    l
}

/// Count vectors of length `k` with total at most `max_total`, by total.
fn compositions(k: usize, max_total: u64) -> Vec<Vec<u64>> {
    fn fill(k: usize, left: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if prefix.len() + 1 == k {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for x in (0..=left).rev() {
            prefix.push(x);
            fill(k, left - x, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for t in 0..=max_total {
        fill(k, t, &mut Vec::new(), &mut out);
    }
    out
}

fn negative_multinomial_test(i: u64, w: &[f64], samples: &[Vec<u64>]) -> Result<ChiSquareTest> {
    let cells = compositions(w.len(), 40);
    let index: HashMap<&[u64], usize> = cells.iter().enumerate().map(|(c, v)| (v.as_slice(), c)).collect();
    let probs: Vec<f64> = cells.iter().map(|n| ln_negative_multinomial(i, w, n).exp()).collect();
    let mut counts = vec![0u64; cells.len()];
    let mut rest = 0;
    for s in samples {
        match index.get(s.as_slice()) {
            Some(&c) => counts[c] += 1,
            None => rest += 1,
        }
    }
    chi_square(&counts, rest, &probs, 5.0)
}

/// `P(k)` for the number of successes before the `i`-th failure, success
/// odds `w`, for `k < cells`.
fn negative_binomial_pmf(i: u64, w: f64, cells: usize) -> Vec<f64> {
    (0..cells as u64)
        .map(|k| ln_negative_multinomial(i, &[w], &[k]).exp())
        .collect()
}

fn histogram_test(values: impl Iterator<Item = u64>, offset: u64, probs: &[f64]) -> Result<ChiSquareTest> {
    let mut counts = vec![0u64; probs.len()];
    let mut rest = 0;
    for v in values {
        match v.checked_sub(offset).map(|k| k as usize) {
            Some(k) if k < probs.len() => counts[k] += 1,
            _ => rest += 1,
        }
    }
    chi_square(&counts, rest, probs, 5.0)
}

/// Chi-square tests of the quenched local-time laws and of the `φ` chain:
///
/// * the children local times at the root of a fixed environment after
///   `root_beta` excursions against the negative multinomial law, from the
///   walk itself and from the branching sampler;
/// * the negative binomial marginals of one child and of the sum of all
///   children, from the walk and from the sampler;
/// * the transitions of `φ` from the chain sampler and from killed walks
///   along the spine against `p̂`.
pub fn distribution_suite(model: &EnvironmentModel, samples: usize, root_beta: u64, seed: u64) -> Result<DistributionReport> {
    require_critical(model)?;
    if root_beta == 0 {
        return Err(Error::InvalidArgument("root_beta must be positive".into()));
    }
    let mut probe = 0;
    let (arena, root) = loop {
        let env = derive_seed(seed, Domain::Environment, probe);
        let mut arena = TreeArena::new(model.clone(), env, WalkMode::TreeReflected);
        let root = arena.root(0);
        arena.expand(root)?;
        if !arena.children(root).is_empty() {
            break (arena, root);
        }
        probe += 1;
        if probe > 1000 {
            return Err(Error::Degenerate("no environment with children at the root".into()));
        }
    };
    let kids: Vec<_> = arena.children(root).collect();
    let w: Vec<f64> = kids.iter().map(|&c| arena.edge_weight(c)).collect();
    let total_w: f64 = w.iter().sum();

    let walk: Vec<Vec<u64>> = flatten(chunked(samples, DEFAULT_CHUNK, |range| {
        let mut arena = arena.clone();
        let mut out = Vec::with_capacity(range.len());
        for r in range {
            let mut rng = stream(seed, Domain::Walk, r as u64);
            let (lt, _) = excursion_local_times(&mut arena, root_beta as usize, Some(0), usize::MAX, &mut rng)?;
            out.push(kids.iter().map(|&c| lt.get(c)).collect());
        }
        Ok(out)
    }))?;
    let sampled: Vec<Vec<u64>> = flatten(chunked(samples, DEFAULT_CHUNK, |range| {
        let mut out = Vec::with_capacity(range.len());
        let mut split = Vec::new();
        for r in range {
            let mut rng = stream(seed, Domain::Excursion, r as u64);
            let k = sample_negative_binomial(&mut rng, root_beta, total_w);
            sample_multinomial(&mut rng, k, &w, &mut split);
            out.push(split.clone());
        }
        Ok(out)
    }))?;

    let mut tests = vec![
        NamedTest::new("negative_multinomial/walk", negative_multinomial_test(root_beta, &w, &walk)?),
        NamedTest::new("negative_multinomial/sampler", negative_multinomial_test(root_beta, &w, &sampled)?),
    ];
    let first = negative_binomial_pmf(root_beta, w[0], 200);
    let sum = negative_binomial_pmf(root_beta, total_w, 200);
    tests.push(NamedTest::new(
        "negative_binomial/walk_first_child",
        histogram_test(walk.iter().map(|v| v[0]), 0, &first)?,
    ));
    tests.push(NamedTest::new(
        "negative_binomial/walk_children_sum",
        histogram_test(walk.iter().map(|v| v.iter().sum()), 0, &sum)?,
    ));
    tests.push(NamedTest::new(
        "negative_binomial/sampler_children_sum",
        histogram_test(sampled.iter().map(|v| v.iter().sum()), 0, &sum)?,
    ));

    let chain = PhiChain::new(model)?;
    for i in 1..=3u64 {
        let draws: Vec<u64> = flatten(chunked(samples, DEFAULT_CHUNK, |range| {
            let mut out = Vec::with_capacity(range.len());
            for r in range {
                let mut rng = stream(seed ^ i, Domain::Chain, r as u64);
                out.push(chain.next(i, &mut rng));
            }
            Ok(out)
        }))?;
        let probs: Vec<f64> = (1..=400).map(|j| phat(model, i, j)).collect();
        tests.push(NamedTest::new(
            format!("phi_chain/sampler_from_{i}"),
            histogram_test(draws.into_iter(), 1, &probs)?,
        ));
    }

    let cfg = SpineConfig {
        stop: SpineStop::Depth(3),
        walks: SpineWalks::Collapsed,
        walk_budget: 10_000_000,
        line_budget: None,
    };
    let mut spine_discarded = 0u64;
    let mut pairs: Vec<(u64, u64)> = Vec::new();
    for part in chunked(samples, DEFAULT_CHUNK, |range| -> Result<(Vec<(u64, u64)>, u64)> {
        let (mut out, mut discarded) = (Vec::new(), 0);
        for r in range {
            let env_seed = derive_seed(seed, Domain::Spine, r as u64);
            let mut rng = stream(seed, Domain::SpineWalk, r as u64);
            match sample_spine(model, &cfg, env_seed, &mut rng) {
                Ok(s) => out.extend(s.phi.windows(2).map(|p| (p[0], p[1]))),
                Err(Error::BudgetExceeded { .. }) => discarded += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((out, discarded))
    }) {
        let (p, d) = part?;
        pairs.extend(p);
        spine_discarded += d;
    }
    for i in 1..=2u64 {
        let probs: Vec<f64> = (1..=400).map(|j| phat(model, i, j)).collect();
        let to = pairs.iter().filter(|p| p.0 == i).map(|p| p.1);
        tests.push(NamedTest::new(
            format!("phi_chain/killed_walks_from_{i}"),
            histogram_test(to, 1, &probs)?,
        ));
    }
    Ok(DistributionReport {
        root_beta,
        child_weights: w,
        tests,
        spine_discarded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    /// `E_1[Z_n] = 1`, `n = 1, 2, ..`
    pub z: Vec<CheckRecord>,
    /// `E[W_k] = 1`, `k = 1, 2, ..`
    pub w: Vec<CheckRecord>,
}

impl MartingaleReport {
    pub fn all_pass(&self) -> bool {
        self.z.iter().chain(&self.w).all(|c| c.pass)
    }
}

/// Means of `Z_n = Σ_{|u|=n} β(u)` over `excursions` walks, each on its own
/// environment and explored to generation `z_depth`, and of
/// `W_k = Σ_{|u|=k} e^{-V(u)}` over `trees` environments.
pub fn martingale_suite(
    model: &EnvironmentModel,
    excursions: usize,
    z_depth: u32,
    trees: usize,
    w_depth: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    require_critical(model)?;
    if z_depth == 0 || w_depth == 0 {
        return Err(Error::InvalidArgument("depths must be positive".into()));
    }
    let zd = z_depth as usize;
    let parts = chunked(excursions, DEFAULT_CHUNK, |range| -> Result<Vec<Moments>> {
        let mut m = vec![Moments::default(); zd + 1];
        for r in range {
            let env = derive_seed(seed, Domain::Martingale, r as u64);
            let mut arena = TreeArena::new(model.clone(), env, WalkMode::TreeReflected);
            let mut rng = stream(seed, Domain::Walk, r as u64);
            let (lt, _) = excursion_local_times(&mut arena, 1, Some(z_depth - 1), usize::MAX, &mut rng)?;
            let mut z = vec![0u64; zd + 1];
            for v in 0..arena.len() as u32 {
                let g = arena.generation(v) as usize;
                if g <= zd {
                    z[g] += lt.get(v);
                }
            }
            for (g, x) in z.iter().enumerate() {
                m[g].push(*x as f64);
            }
        }
        Ok(m)
    });
    let mut zm = vec![Moments::default(); zd + 1];
    for p in parts {
        for (a, b) in zm.iter_mut().zip(p?) {
            a.merge(&b);
        }
    }
    let parts = chunked(trees, DEFAULT_CHUNK, |range| -> Result<Vec<Moments>> {
        let mut m = vec![Moments::default(); w_depth + 1];
        let none = LocalTimes { beta: Vec::new() };
        for r in range {
            let env = derive_seed(seed, Domain::Martingale, (1 << 40) + r as u64);
            let mut arena = TreeArena::new(model.clone(), env, WalkMode::TreeReflected);
            let s = martingales(&mut arena, &none, w_depth)?;
            for (k, x) in s.w.iter().enumerate() {
                m[k].push(*x);
            }
        }
        Ok(m)
    });
    let mut wm = vec![Moments::default(); w_depth + 1];
    for p in parts {
        for (a, b) in wm.iter_mut().zip(p?) {
            a.merge(&b);
        }
    }
    Ok(MartingaleReport {
        z: (1..=zd)
            .map(|n| CheckRecord::compare(format!("Z_{n}"), mean_se(&zm[n]), (1.0, 0.0)))
            .collect(),
        w: (1..=w_depth)
            .map(|k| CheckRecord::compare(format!("W_{k}"), mean_se(&wm[k]), (1.0, 0.0)))
            .collect(),
    })
}

/// Positive values of `|L^1|` under `P_1`.
pub fn line_tail_samples(model: &EnvironmentModel, n: usize, vertex_budget: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(line_samples(model, n, vertex_budget, derive_seed(seed, Domain::Tail, 0))?
        .iter()
        .filter(|s| s.line > 0)
        .map(|s| s.line as f64)
        .collect())
}

/// Hill estimate of the tail index of `|L^1|` under `P_1`, on the positive
/// values of `n_samples` draws with the default number of order statistics.
pub fn tail_experiment_nu1(model: &EnvironmentModel, n_samples: usize, seed: u64) -> Result<TailEstimate> {
    require_critical(model)?;
    let xs = line_tail_samples(model, n_samples, 10_000_000, seed)?;
    hill(&xs, default_k(xs.len()))
}

/// Truncation of `W_∞ = lim W_k`: a vertex `u` is not expanded once
/// `e^{-(V(u) - V(ρ))} < eps` relative to the root `ρ` of the copy being
/// sampled, or at generation `depth`, and contributes `e^{-V(u)}`, the
/// conditional mean of its part of `W_∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WProxy {
    pub depth: u32,
    pub eps: f64,
}

impl Default for WProxy {
    fn default() -> Self {
        WProxy { depth: 60, eps: 1e-2 }
    }
}

fn sample_w(model: &EnvironmentModel, proxy: WProxy, rng: &mut StreamRng, marks: &mut Vec<f64>, stack: &mut Vec<(f64, u32)>) -> f64 {
    stack.clear();
    stack.push((0.0, 0));
    let mut w = 0.0;
    while let Some((v, g)) = stack.pop() {
        let e = (-v).exp();
        if g >= proxy.depth || e < proxy.eps {
            w += e;
            continue;
        }
        model.sample_children(rng, marks);
        stack.extend(marks.iter().map(|d| (v + d, g + 1)));
    }
    w
}

/// `W_∞` under the size-biased law: a spine with size-biased offspring and
/// an independent plain copy of `W_∞` hanging off every brother.
fn sample_w_biased(model: &EnvironmentModel, proxy: WProxy, rng: &mut StreamRng, marks: &mut Vec<f64>, stack: &mut Vec<(f64, u32)>) -> f64 {
    let mut spine = Vec::new();
    let (mut v, mut w) = (0.0f64, 0.0);
    for _ in 0..proxy.depth {
        if (-v).exp() < proxy.eps {
            break;
        }
        let k = model.sample_size_biased(rng, &mut spine);
        for (c, d) in spine.iter().enumerate() {
            if c != k {
                w += (-(v + d)).exp() * sample_w(model, proxy, rng, marks, stack);
            }
        }
        v += spine[k];
    }
    w + (-v).exp()
}

/// Draws of the `W_∞` proxy, under the plain law or the size-biased one.
pub fn w_samples(model: &EnvironmentModel, proxy: WProxy, n: usize, size_biased: bool, seed: u64) -> Vec<f64> {
    let index = u64::from(size_biased) << 40;
    chunked(n, DEFAULT_CHUNK, |range| {
        let (mut marks, mut stack) = (Vec::new(), Vec::new());
        range
            .map(|r| {
                let mut rng = stream(seed, Domain::Tail, index + 1 + r as u64);
                if size_biased {
                    sample_w_biased(model, proxy, &mut rng, &mut marks, &mut stack)
                } else {
                    sample_w(model, proxy, &mut rng, &mut marks, &mut stack)
                }
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WTailReport {
    pub proxy: WProxy,
    /// Index under the plain law, target `κ`.
    pub plain: TailEstimate,
    /// Index under the size-biased law, target `κ - 1`.
    pub size_biased: TailEstimate,
    pub difference: f64,
    pub difference_stderr: f64,
    /// The difference is within `1.96` joint standard errors of `1`.
    pub consistent: bool,
}

/// Tail indices of `W_∞` under both laws and the shift between them.
pub fn tail_experiment_winf(model: &EnvironmentModel, proxy: WProxy, n_samples: usize, seed: u64) -> Result<WTailReport> {
    require_critical(model)?;
    let plain = w_samples(model, proxy, n_samples, false, seed);
    let biased = w_samples(model, proxy, n_samples, true, seed);
    let positive = |v: Vec<f64>| -> Vec<f64> { v.into_iter().filter(|x| *x > 0.0).collect() };
    let (plain, biased) = (positive(plain), positive(biased));
    let p = hill(&plain, default_k(plain.len()))?;
    let b = hill(&biased, default_k(biased.len()))?;
    let difference = p.index - b.index;
    let difference_stderr = (p.stderr().powi(2) + b.stderr().powi(2)).sqrt();
    Ok(WTailReport {
        proxy,
        consistent: (difference - 1.0).abs() <= 1.96 * difference_stderr,
        plain: p,
        size_biased: b,
        difference,
        difference_stderr,
    })
}

/// `(|L^1|, W)` under `P_n` on a common environment. Local times are drawn
/// generation by generation from the quenched law and every vertex with
/// `β <= 1` (other than the root) closes the exploration, contributing
/// `e^{-V}` to `W`.
fn sample_line_and_w(model: &EnvironmentModel, n: u64, budget: usize, rng: &mut StreamRng) -> Result<(u64, f64)> {
    let mut stack = vec![(0.0f64, n, true)];
    let (mut marks, mut weights, mut split) = (Vec::new(), Vec::new(), Vec::new());
    let (mut line, mut w, mut seen) = (0u64, 0.0, 0usize);
    while let Some((v, b, root)) = stack.pop() {
        seen += 1;
        if seen > budget {
            return Err(Error::BudgetExceeded {
                what: "vertices",
                limit: budget,
            });
        }
        if !root && b <= 1 {
            line += b;
            w += (-v).exp();
            continue;
        }
        model.sample_children(rng, &mut marks);
        weights.clear();
        weights.extend(marks.iter().map(|d| (-d).exp()));
        let k = sample_negative_binomial(rng, b, weights.iter().sum());
        sample_multinomial(rng, k, &weights, &mut split);
        stack.extend(marks.iter().zip(&split).map(|(d, &c)| (v + d, c, false)));
    }
    Ok((line, w))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineConvergenceRow {
    pub n: u64,
    /// `E_n[|L^1/n - W|^{1+α}]`
    pub moment: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineConvergenceReport {
    pub alpha: f64,
    pub rows: Vec<LineConvergenceRow>,
    pub decreasing: bool,
    /// Envelope of `|L^1/n - W|` built from the same draws with `s = 1+α`.
    pub envelope: Envelope,
    pub domination_violations: usize,
}

/// Convergence in mean of order `1+α` of `L^1/n` to `W`.
pub fn line_convergence(
    model: &EnvironmentModel,
    n_values: &[u64],
    samples: usize,
    alpha: f64,
    seed: u64,
) -> Result<LineConvergenceReport> {
    require_critical(model)?;
    let mut draws: Vec<Vec<f64>> = Vec::new();
    for (c, &n) in n_values.iter().enumerate() {
        let xs = flatten(chunked(samples, DEFAULT_CHUNK, |range| {
            let mut out = Vec::with_capacity(range.len());
            for r in range {
                let mut rng = stream(seed, Domain::Martingale, ((c as u64 + 1) << 40) + r as u64);
                let (l, w) = sample_line_and_w(model, n, 100_000_000, &mut rng)?;
                out.push((l as f64 / n as f64 - w).abs());
            }
            Ok(out)
        }))?;
        draws.push(xs);
    }
    let s = 1.0 + alpha;
    let rows: Vec<LineConvergenceRow> = n_values
        .iter()
        .zip(&draws)
        .map(|(&n, xs)| {
            let mut m = Moments::default();
            for x in xs {
                m.push(x.powf(s));
            }
            LineConvergenceRow {
                n,
                moment: m.mean(),
                stderr: m.stderr(),
            }
        })
        .collect();
    let decreasing = rows.windows(2).all(|p| p[1].moment < p[0].moment);
    let envelope = dominating_envelope(&empirical_moments(&draws, s), 1.0, s)?;
    let grid: Vec<f64> = (0..40).map(|k| 1e-3 * 1.3f64.powi(k)).collect();
    let domination_violations = count_domination_violations(&envelope, &draws, &grid);
    Ok(LineConvergenceReport {
        alpha,
        rows,
        decreasing,
        envelope,
        domination_violations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub walks: usize,
    pub steps: usize,
    pub fr_height_failures: usize,
    pub fx_height_failures: usize,
    pub skeleton_failures: usize,
    /// Walk indices compared in total.
    pub indices: u64,
}

impl ReductionReport {
    pub fn all_pass(&self) -> bool {
        self.fr_height_failures == 0 && self.fx_height_failures == 0 && self.skeleton_failures == 0
    }
}

/// Checks the exact reduction identities on `walks` forest walks of `steps`
/// steps, each on a fresh environment and cut at its last completed tree.
pub fn reduction_suite(model: &EnvironmentModel, walks: usize, steps: usize, seed: u64) -> Result<ReductionReport> {
    let parts = chunked(walks, DEFAULT_CHUNK, |range| -> Result<ReductionReport> {
        let mut rep = ReductionReport {
            walks: 0,
            steps,
            fr_height_failures: 0,
            fx_height_failures: 0,
            skeleton_failures: 0,
            indices: 0,
        };
        for r in range {
            let env = derive_seed(seed, Domain::Environment, r as u64);
            let mut arena = TreeArena::new(model.clone(), env, WalkMode::Forest);
            let mut rng = stream(seed, Domain::Walk, r as u64);
            let t = run_walk(&mut arena, steps, &mut rng)?.completed_prefix(&arena);
            let lt = edge_local_times(&t, &arena);
            let f = RangeForest::from_walk(&arena, &t, &lt)?;
            let pos = positions(&f, &t);
            let c = check_reductions(&f, &pos);
            rep.walks += 1;
            rep.indices += pos.len() as u64;
            rep.fr_height_failures += usize::from(!c.fr_heights);
            rep.fx_height_failures += usize::from(!c.fx_heights);
            rep.skeleton_failures += usize::from(!c.skeletons);
        }
        Ok(rep)
    });
    let mut total = ReductionReport {
        walks: 0,
        steps,
        fr_height_failures: 0,
        fx_height_failures: 0,
        skeleton_failures: 0,
        indices: 0,
    };
    for p in parts {
        let p = p?;
        total.walks += p.walks;
        total.indices += p.indices;
        total.fr_height_failures += p.fr_height_failures;
        total.fx_height_failures += p.fx_height_failures;
        total.skeleton_failures += p.skeleton_failures;
    }
    Ok(total)
}

/// Index of the tree of `F^1` holding its `n`-th vertex, with `F^1` grown
/// as a Galton-Watson forest whose offspring law is that of `|L^1|` under
/// `P_1`.
pub fn gamma_one(model: &EnvironmentModel, n: u64, vertex_budget: usize, rng: &mut StreamRng, buf: &mut LocalTimeTree) -> Result<u64> {
    let (mut trees, mut pending, mut count) = (0u64, 0u64, 0u64);
    loop {
        if pending == 0 {
            trees += 1;
            pending = 1;
        }
        count += 1;
        if count >= n {
            return Ok(trees);
        }
        pending -= 1;
        sample_into(model, 1, Expand::OptionalLine, vertex_budget, rng, buf)?;
        pending += buf.line_size();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    /// Fractions `t` at which `|X_{⌊nt⌋}|` is recorded.
    pub times: Vec<f64>,
    /// `κ` used in the normalization. Defaults to the model's.
    pub kappa: Option<f64>,
    /// `M` in `Γ^1_n > M n^{1/κ}`.
    pub gamma_m: f64,
    /// `n` for `Γ^1_n`.
    pub gamma_n: u64,
    pub vertex_budget: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            n_grid: vec![10_000, 40_000, 160_000],
            replicates: 2000,
            times: vec![0.25, 0.5, 1.0],
            kappa: None,
            gamma_m: 5.0,
            gamma_n: 10_000,
            vertex_budget: 50_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub scale: f64,
    /// Quartiles of `sup_{k<=n} |X_k| / c_n`.
    pub sup_quartiles: [f64; 3],
    /// Medians of `|X_{⌊nt⌋}| / c_n` for each configured `t`.
    pub marginal_medians: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsRecord {
    /// `"sup"` or `"t=<t>"`.
    pub statistic: String,
    pub n_a: usize,
    pub n_b: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub kappa: f64,
    pub rows: Vec<ScalingRow>,
    pub ks: Vec<KsRecord>,
    /// Largest KS distance between rescaled suprema.
    pub max_sup_ks: f64,
    /// Interquartile range of the rescaled supremum at each `n` divided by
    /// the one at the smallest `n`.
    pub iqr_ratios: Vec<f64>,
    pub gamma_threshold: f64,
    pub gamma_fraction: f64,
    /// `sup_{k<=n} |X_k| / c_n` per replicate, one row per `n`.
    pub sup_samples: Vec<Vec<f64>>,
}

/// Rescaled heights of forest walks: one fresh environment and walk per
/// replicate and per `n`, so that the samples at different `n` are
/// independent.
pub fn scaling_experiment(model: &EnvironmentModel, config: &ScalingConfig, seed: u64) -> Result<ScalingReport> {
    require_critical(model)?;
    let kappa = match config.kappa {
        Some(k) => k,
        None => model
            .kappa()
            .finite()
            .ok_or_else(|| Error::Precondition("scaling needs a finite kappa".into()))?,
    };
    if config.n_grid.is_empty() || config.n_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidArgument("n_grid must be nonempty and increasing".into()));
    }
    if config.replicates < 4 {
        return Err(Error::InvalidArgument("need at least 4 replicates".into()));
    }
    let reps = config.replicates;
    let mut rows = Vec::new();
    let mut sup_samples = Vec::new();
    let mut marginals: Vec<Vec<Vec<f64>>> = Vec::new();
    for (a, &n) in config.n_grid.iter().enumerate() {
        let c = scale(kappa, n)?;
        let marks: Vec<usize> = config.times.iter().map(|t| (t * n as f64).floor() as usize).collect();
        let per: Vec<(f64, Vec<f64>)> = flatten(chunked(reps, 1, |range| {
            let mut out = Vec::new();
            for r in range {
                let idx = (a * reps + r) as u64;
                let env = derive_seed(seed, Domain::Scaling, 2 * idx);
                let mut arena = TreeArena::new(model.clone(), env, WalkMode::Forest).with_budget(config.vertex_budget);
                let mut rng = stream(seed, Domain::Scaling, 2 * idx + 1);
                let mut sup = 0u32;
                let mut at = vec![0.0; marks.len()];
                forest_heights(&mut arena, n, &mut rng, |k, _, g| {
                    sup = sup.max(g);
                    for (slot, &m) in marks.iter().enumerate() {
                        if k == m {
                            at[slot] = f64::from(g) / c;
                        }
                    }
                })?;
                out.push((f64::from(sup) / c, at));
            }
            Ok(out)
        }))?;
        let mut sups: Vec<f64> = per.iter().map(|p| p.0).collect();
        let mut cols: Vec<Vec<f64>> = (0..marks.len()).map(|s| per.iter().map(|p| p.1[s]).collect()).collect();
        sups.sort_by(f64::total_cmp);
        for col in &mut cols {
            col.sort_by(f64::total_cmp);
        }
        rows.push(ScalingRow {
            n,
            scale: c,
            sup_quartiles: [quantile(&sups, 0.25), quantile(&sups, 0.5), quantile(&sups, 0.75)],
            marginal_medians: cols.iter().map(|col| quantile(col, 0.5)).collect(),
        });
        sup_samples.push(sups);
        marginals.push(cols);
    }
    let mut ks = Vec::new();
    for a in 0..config.n_grid.len() {
        for b in a + 1..config.n_grid.len() {
            ks.push(KsRecord {
                statistic: "sup".into(),
                n_a: config.n_grid[a],
                n_b: config.n_grid[b],
                distance: ks_distance(&sup_samples[a], &sup_samples[b]),
            });
            for (s, t) in config.times.iter().enumerate() {
                ks.push(KsRecord {
                    statistic: format!("t={t}"),
                    n_a: config.n_grid[a],
                    n_b: config.n_grid[b],
                    distance: ks_distance(&marginals[a][s], &marginals[b][s]),
                });
            }
        }
    }
    let max_sup_ks = ks
        .iter()
        .filter(|k| k.statistic == "sup")
        .map(|k| k.distance)
        .fold(0.0, f64::max);
    let iqr: Vec<f64> = rows.iter().map(|r| r.sup_quartiles[2] - r.sup_quartiles[0]).collect();
    let iqr_ratios = iqr.iter().map(|x| x / iqr[0]).collect();

    let gamma_threshold = config.gamma_m * (config.gamma_n as f64).powf(1.0 / kappa);
    let above: u64 = chunked(reps, DEFAULT_CHUNK, |range| -> Result<u64> {
        let mut buf = LocalTimeTree::default();
        let mut above = 0;
        for r in range {
            let mut rng = stream(seed, Domain::Excursion, (1 << 40) + r as u64);
            let g = gamma_one(model, config.gamma_n, config.vertex_budget, &mut rng, &mut buf)?;
            above += u64::from(g as f64 > gamma_threshold);
        }
        Ok(above)
    })
    .into_iter()
    .sum::<Result<u64>>()?;

    Ok(ScalingReport {
        kappa,
        rows,
        ks,
        max_sup_ks,
        iqr_ratios,
        gamma_threshold,
        gamma_fraction: above as f64 / reps as f64,
        sup_samples,
    })
}
