//! The spinal decomposition: the tilted random walk `Ŝ`, the eigenvectors
//! of the local-time mean matrix, the Markov chain `φ` of local times along
//! the spine, and the construction of the size-biased local-time tree from
//! killed walks.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::env::{ln_binomial, EnvironmentModel};
use crate::error::{Error, Result};
use crate::par::{chunked, Moments, DEFAULT_CHUNK};
use crate::rng::{stream, Domain};
use crate::walk::branching::{sample_into, sample_negative_binomial, Expand, LocalTimeTree};
use crate::walk::{TreeArena, VertexId, ARTIFICIAL_PARENT};

fn require_critical(model: &EnvironmentModel) -> Result<()> {
    let p = model.psi(1.0);
    if (p - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("psi(1) = {p}, expected 1")));
    }
    Ok(())
}

/// Sampler for one step of `Ŝ`.
#[derive(Clone, Debug)]
pub struct TiltedStep {
    values: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl TiltedStep {
    pub fn new(model: &EnvironmentModel) -> Result<Self> {
        let law = model.tilted_step_law();
        let index = WeightedIndex::new(law.iter().map(|p| p.1))
            .map_err(|e| Error::InvalidModel(format!("tilted law: {e}")))?;
        Ok(TiltedStep {
            values: law.iter().map(|p| p.0).collect(),
            index,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.values[self.index.sample(rng)]
    }
}

/// `Ŝ_0 = 0, Ŝ_1, .., Ŝ_n`.
pub fn sample_s_hat<R: Rng + ?Sized>(
    model: &EnvironmentModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    require_critical(model)?;
    let step = TiltedStep::new(model)?;
    let mut s = Vec::with_capacity(n + 1);
    let mut x = 0.0;
    s.push(x);
    for _ in 0..n {
        x += step.sample(rng);
        s.push(x);
    }
    Ok(s)
}

/// `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `binom(i+j-1, j) E[Σ e^{-jV}/(1+e^{-V})^{i+j}]`.
pub fn mean_matrix(model: &EnvironmentModel, i: u64, j: u64) -> f64 {
    assert!(i >= 1 && j >= 1, "indices start at 1");
    let lc = ln_binomial(i + j - 1, j);
    let (fj, fij) = (j as f64, (i + j) as f64);
    model.first_moment(|v| (lc - fj * v - fij * softplus(-v)).exp())
}

/// `binom(i+j-1, i) E[Σ e^{-jV}/(1+e^{-V})^{i+j}]`, the transition
/// probabilities of the spine local-time chain.
pub fn phat(model: &EnvironmentModel, i: u64, j: u64) -> f64 {
    assert!(i >= 1 && j >= 1, "indices start at 1");
    let lc = ln_binomial(i + j - 1, i);
    let (fj, fij) = (j as f64, (i + j) as f64);
    model.first_moment(|v| (lc - fj * v - fij * softplus(-v)).exp())
}

/// `phat(i, 1..=j_max)` together with the exact tails
/// `Σ_{j > j_max} phat(i,j)` and `Σ_{j > j_max} (j+1) phat(i,j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhatRow {
    pub cells: Vec<f64>,
    pub tail_mass: f64,
    pub tail_first_moment: f64,
}

pub fn phat_row(model: &EnvironmentModel, i: u64, j_max: u64) -> PhatRow {
    let cells: Vec<f64> = (1..=j_max).map(|j| phat(model, i, j)).collect();
    let fi = i as f64;
    // per mark s = e^{-v}: Σ_j cell_j = s and Σ_j j cell_j = s (1 + (i+1) s)
    let mass = model.psi(1.0);
    let first = model.first_moment(|v| {
        let s = (-v).exp();
        s * (1.0 + (fi + 1.0) * s) + s
    });
    let head: f64 = cells.iter().sum();
    let head_first: f64 = cells
        .iter()
        .enumerate()
        .map(|(k, c)| (k as f64 + 2.0) * c)
        .sum();
    PhatRow {
        tail_mass: (mass - head).max(0.0),
        tail_first_moment: (first - head_first).max(0.0),
        cells,
    }
}

/// Sampler for the chain `φ`: `φ_{k+1} = 1 + NB(φ_k + 1, q)` with
/// `q = e^{-Δ}/(1+e^{-Δ})` and `Δ` a fresh step of `Ŝ`.
#[derive(Clone, Debug)]
pub struct PhiChain {
    step: TiltedStep,
}

impl PhiChain {
    pub fn new(model: &EnvironmentModel) -> Result<Self> {
        require_critical(model)?;
        Ok(PhiChain {
            step: TiltedStep::new(model)?,
        })
    }

    pub fn next<R: Rng + ?Sized>(&self, phi: u64, rng: &mut R) -> u64 {
        let d = self.step.sample(rng);
        1 + sample_negative_binomial(rng, phi + 1, (-d).exp())
    }

    /// `τ̂_1 = min{k >= 1 : φ_k = 1}` from `φ_0 = start`, capped at `max_steps`.
    pub fn return_time<R: Rng + ?Sized>(&self, start: u64, max_steps: usize, rng: &mut R) -> Option<usize> {
        let mut phi = start;
        for k in 1..=max_steps {
            phi = self.next(phi, rng);
            if phi == 1 {
                return Some(k);
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub i: Vec<u64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub pi: Vec<f64>,
    pub stderr_a: Vec<f64>,
    pub stderr_b: Vec<f64>,
    pub stderr_pi: Vec<f64>,
    pub samples: u64,
    /// Largest per-sample bound on the neglected tail of `Σ e^{-Ŝ_k}`.
    pub truncation_bound: f64,
    /// Samples that hit the step cap before the tail bound was met.
    pub capped: u64,
}

impl EigenData {
    pub fn a1(&self) -> f64 {
        self.a[0]
    }

    pub fn b1(&self) -> f64 {
        self.b[0]
    }

    pub fn pi1(&self) -> f64 {
        self.pi[0]
    }
}

/// Draws `Σ_{k>=1} e^{-Ŝ_k}`, stopping once `e^{-Ŝ_K} / (1 - e^{-d})`, a
/// geometric bound on the rest, drops below `tol`. Returns the sum, the
/// bound at the stopping time and whether `max_steps` was reached first.
pub fn sample_exponential_functional<R: Rng + ?Sized>(
    step: &TiltedStep,
    drift: f64,
    tol: f64,
    max_steps: usize,
    rng: &mut R,
) -> (f64, f64, bool) {
    let factor = 1.0 / (1.0 - (-drift).exp());
    let (mut s, mut x) = (0.0, 0.0);
    for _ in 0..max_steps {
        s += step.sample(rng);
        let e = (-s).exp();
        x += e;
        if e * factor < tol {
            return (x, e * factor, false);
        }
    }
    (x, (-s).exp() * factor, true)
}

/// Monte Carlo estimates of `a_i`, `b_i`, `π_i = a_i b_i` for `i <= i_max`
/// from `samples` independent copies of `x = Σ_{k>=1} e^{-Ŝ_k}`:
/// `b_i = i E[1/(1+x)]`, `a_i = E[x^{i-1}/(1+x)^{i+1}] / E[1/(1+x)]`.
pub fn estimate_eigen(
    model: &EnvironmentModel,
    i_max: usize,
    max_steps: usize,
    samples: usize,
    seed: u64,
) -> Result<EigenData> {
    require_critical(model)?;
    if i_max == 0 || samples < 2 {
        return Err(Error::InvalidArgument("need i_max >= 1 and samples >= 2".into()));
    }
    let step = TiltedStep::new(model)?;
    let drift = -model.psi_derivative(1.0);
    if drift <= 0.0 {
        return Err(Error::Precondition("the tilted walk must drift to +infinity".into()));
    }
    #[derive(Clone)]
    struct Acc {
        c: Moments,
        f: Vec<Moments>,
        fc: Vec<f64>,
        bound: f64,
        capped: u64,
    }
    let parts = chunked(samples, DEFAULT_CHUNK, |range| {
        let mut acc = Acc {
            c: Moments::default(),
            f: vec![Moments::default(); i_max],
            fc: vec![0.0; i_max],
            bound: 0.0,
            capped: 0,
        };
        for r in range {
            let mut rng = stream(seed, Domain::Eigen, r as u64);
            let (x, bound, capped) =
                sample_exponential_functional(&step, drift, 1e-12, max_steps, &mut rng);
            acc.bound = acc.bound.max(bound);
            acc.capped += u64::from(capped);
            let c = 1.0 / (1.0 + x);
            acc.c.push(c);
            // x^{i-1}/(1+x)^{i+1} = c^2 (x c)^{i-1}
            let (ratio, mut f) = (x * c, c * c);
            for i in 0..i_max {
                acc.f[i].push(f);
                acc.fc[i] += f * c;
                f *= ratio;
            }
        }
        acc
    });
    let mut total = parts[0].clone();
    for p in &parts[1..] {
        total.c.merge(&p.c);
        for i in 0..i_max {
            total.f[i].merge(&p.f[i]);
            total.fc[i] += p.fc[i];
        }
        total.bound = total.bound.max(p.bound);
        total.capped += p.capped;
    }
    let n = total.c.n as f64;
    let (ec, sc) = (total.c.mean(), total.c.stderr());
    let mut out = EigenData {
        i: (1..=i_max as u64).collect(),
        a: Vec::new(),
        b: Vec::new(),
        pi: Vec::new(),
        stderr_a: Vec::new(),
        stderr_b: Vec::new(),
        stderr_pi: Vec::new(),
        samples: total.c.n,
        truncation_bound: total.bound,
        capped: total.capped,
    };
    for i in 0..i_max {
        let fi = (i + 1) as f64;
        let ef = total.f[i].mean();
        let a = ef / ec;
        let cov = total.fc[i] / n - ef * ec;
        let var_lin = total.f[i].variance() - 2.0 * a * cov + a * a * total.c.variance();
        out.a.push(a);
        out.b.push(fi * ec);
        out.pi.push(fi * ef);
        out.stderr_a.push((var_lin.max(0.0) / n).sqrt() / ec);
        out.stderr_b.push(fi * sc);
        out.stderr_pi.push(fi * total.f[i].stderr());
    }
    Ok(out)
}

/// When [`sample_spine`] stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpineStop {
    /// Launch walks from `w_0, .., w_{d-1}`, giving `φ_0, .., φ_d`.
    Depth(usize),
    /// Continue until the first `k >= 1` with `φ_k = 1`, or `max_depth`.
    FirstReturn { max_depth: usize },
}

/// How the killed walks are simulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpineWalks {
    /// Step by step through the whole tree.
    Full,
    /// Only along the spine. A move into an off-spine child is recorded as a
    /// crossing and the walker stays put, which is what the (a.s. finite)
    /// excursion into that subtree looks like from the spine. The local
    /// times inside each such subtree are then drawn from their quenched
    /// law given the number of crossings.
    Collapsed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpineConfig {
    pub stop: SpineStop,
    pub walks: SpineWalks,
    /// Killed-walk steps per spine vertex.
    pub walk_budget: usize,
    /// Vertex budget for [`LineStats`], or `None` to skip them.
    pub line_budget: Option<usize>,
}

impl SpineConfig {
    pub fn first_return(walks: SpineWalks) -> Self {
        SpineConfig {
            stop: SpineStop::FirstReturn { max_depth: 100_000 },
            walks,
            walk_budget: 10_000_000,
            line_budget: None,
        }
    }
}

/// Sizes read off the optional line of the root under the size-biased law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineStats {
    /// `|L^1|`
    pub line: u64,
    /// `Σ_{u ∈ L^1} |u|`
    pub line_heights: u64,
    /// `|B^1|`
    pub block: u64,
    /// `Σ_{u ∈ B^1} β(u)`
    pub block_beta: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineSample {
    /// `V(w_k)`
    pub potential: Vec<f64>,
    /// `φ_k = ỹ(w_k)`: crossings into `w_k` by the killed walks, plus one
    /// for the spine.
    pub phi: Vec<u64>,
    /// `|Ω(w_k)|`, the number of siblings of `w_k`.
    pub brothers: Vec<usize>,
    pub tau: Option<usize>,
    /// Filled in when `τ̂_1` was reached and line statistics were requested.
    pub line: Option<LineStats>,
    /// The line statistics were abandoned at the vertex budget.
    pub line_overflow: bool,
    pub walk_steps: usize,
}

/// Builds a spine and runs two walks from each spine vertex `w_i`, each
/// killed when it steps to the parent of `w_i` (the artificial parent for
/// `w_0`).
pub fn sample_spine<R: Rng + ?Sized>(
    model: &EnvironmentModel,
    config: &SpineConfig,
    env_seed: u64,
    rng: &mut R,
) -> Result<SpineSample> {
    require_critical(model)?;
    let mut arena = TreeArena::with_spine(model.clone(), env_seed);
    sample_spine_in(&mut arena, config, rng)
}

/// As [`sample_spine`], reusing an arena created by [`TreeArena::with_spine`].
pub fn sample_spine_in<R: Rng + ?Sized>(
    arena: &mut TreeArena,
    config: &SpineConfig,
    rng: &mut R,
) -> Result<SpineSample> {
    let SpineConfig {
        stop,
        walks,
        walk_budget,
        line_budget,
    } = *config;
    let collapsed = walks == SpineWalks::Collapsed;
    let max_depth = match stop {
        SpineStop::Depth(d) => d,
        SpineStop::FirstReturn { max_depth } => max_depth,
    };
    let mut crossings: Vec<u64> = Vec::new();
    let mut phi = vec![1u64];
    let mut tau = None;
    let mut total_steps = 0usize;
    for i in 0..max_depth {
        let mut steps = 0usize;
        let w = arena.spine_vertex(i)?;
        let next = arena.spine_vertex(i + 1)?;
        let kill = arena.parent(w);
        for _ in 0..2 {
            let mut x = w;
            loop {
                if steps >= walk_budget {
                    return Err(Error::BudgetExceeded {
                        what: "killed-walk steps",
                        limit: walk_budget,
                    });
                }
                steps += 1;
                total_steps += 1;
                let y = arena.step(x, rng)?;
                if y == kill {
                    break;
                }
                if y != ARTIFICIAL_PARENT && arena.parent(y) == x {
                    let yi = y as usize;
                    if crossings.len() <= yi {
                        crossings.resize(arena.len().max(yi + 1), 0);
                    }
                    crossings[yi] += 1;
                    if collapsed && !arena.on_spine(y) {
                        continue;
                    }
                }
                x = y;
            }
        }
        let c = crossings.get(next as usize).copied().unwrap_or(0);
        phi.push(1 + c);
        if c == 0 && tau.is_none() {
            tau = Some(i + 1);
            if matches!(stop, SpineStop::FirstReturn { .. }) {
                break;
            }
        }
    }
    let depth = phi.len() - 1;
    let spine: Vec<VertexId> = (0..=depth).map(|k| arena.spine_vertex(k)).collect::<Result<_>>()?;
    let potential = spine.iter().map(|&w| arena.potential(w)).collect();
    let brothers = spine
        .iter()
        .map(|&w| {
            let p = arena.parent(w);
            if p == ARTIFICIAL_PARENT {
                0
            } else {
                arena.children(p).len() - 1
            }
        })
        .collect();
    let mut line_overflow = false;
    let line = match (tau, line_budget) {
        (None, _) | (_, None) => None,
        (Some(t), Some(line_budget)) => {
            let beta = |u: VertexId| {
                crossings.get(u as usize).copied().unwrap_or(0) + u64::from(arena.on_spine(u))
            };
            let mut stats = LineStats {
                line: 0,
                line_heights: 0,
                block: 0,
                block_beta: 0,
            };
            let mut sub = LocalTimeTree::default();
            let mut stack: Vec<VertexId> = arena.children(spine[0]).collect();
            while let Some(v) = stack.pop() {
                let b = beta(v);
                if b == 0 {
                    continue;
                }
                if collapsed && b > 1 && !arena.on_spine(v) {
                    let room = line_budget.saturating_sub(stats.block as usize);
                    match sample_into(arena.model(), b, Expand::OptionalLine, room, rng, &mut sub) {
                        Ok(()) => {}
                        Err(Error::BudgetExceeded { .. }) => {
                            line_overflow = true;
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                    let g = u64::from(arena.generation(v));
                    stats.block += sub.len() as u64;
                    stats.block_beta += sub.beta.iter().sum::<u64>();
                    for u in 1..sub.len() {
                        if sub.beta[u] == 1 {
                            stats.line += 1;
                            stats.line_heights += g + u64::from(sub.generation[u]);
                        }
                    }
                    continue;
                }
                if stats.block as usize >= line_budget {
                    line_overflow = true;
                    break;
                }
                stats.block += 1;
                stats.block_beta += b;
                if b == 1 {
                    stats.line += 1;
                    stats.line_heights += u64::from(arena.generation(v));
                } else {
                    debug_assert!(v != spine[t]);
                    stack.extend(arena.children(v));
                }
            }
            (!line_overflow).then_some(stats)
        }
    };
    Ok(SpineSample {
        potential,
        phi,
        brothers,
        tau,
        line,
        line_overflow,
        walk_steps: total_steps,
    })
}

/// Additive martingales of one tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSeries {
    /// `Z_n = Σ_{|u|=n} β(u)`
    pub z: Vec<u64>,
    /// `W_k = Σ_{|u|=k} e^{-V(u)}`
    pub w: Vec<f64>,
    pub w_inf_proxy: f64,
    pub depth: usize,
}

/// `Z_n` and `W_k` for `n, k <= depth`. Every vertex up to generation
/// `depth - 1` gets expanded.
pub fn martingales(arena: &mut TreeArena, beta: &crate::walk::LocalTimes, depth: usize) -> Result<MartingaleSeries> {
    let root = arena.root(0);
    let mut z = vec![0u64; depth + 1];
    let mut w = vec![0.0; depth + 1];
    let mut level = vec![root];
    for g in 0..=depth {
        for &u in &level {
            z[g] += beta.get(u);
            w[g] += (-arena.potential(u)).exp();
        }
        if g == depth {
            break;
        }
        let mut next = Vec::new();
        for &u in &level {
            arena.expand(u)?;
            next.extend(arena.children(u));
        }
        level = next;
    }
    Ok(MartingaleSeries {
        w_inf_proxy: w[depth],
        z,
        w,
        depth,
    })
}

/// `ln Γ(i+1+α) - ln Γ(i+1)`.
pub fn ln_lyapunov_weight(i: u64, alpha: f64) -> f64 {
    ln_gamma(i as f64 + 1.0 + alpha) - ln_gamma(i as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{calibrate_two_point, Atom};

    fn flat() -> EnvironmentModel {
        EnvironmentModel::Tabulated {
            atoms: vec![Atom {
                prob: 1.0,
                marks: vec![0.0],
            }],
        }
    }

    #[test]
    fn mean_matrix_of_flat_single_child() {
        assert!((mean_matrix(&flat(), 1, 1) - 0.25).abs() < 1e-15);
        assert!((mean_matrix(&flat(), 2, 1) - 0.25).abs() < 1e-15);
        assert!((phat(&flat(), 1, 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn flat_phat_row_sums_to_one() {
        let row = phat_row(&flat(), 1, 200);
        assert!((row.cells.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.tail_mass < 1e-12);
    }

    #[test]
    fn phat_rows_are_stochastic_and_match_the_mean_matrix() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        for i in 1..=10u64 {
            let row = phat_row(&m, i, 400);
            let s: f64 = row.cells.iter().sum();
            assert!((s + row.tail_mass - 1.0).abs() < 1e-12);
            assert!((s - 1.0).abs() < 1e-8, "row {i} sums to {s}");
            for j in 1..=30u64 {
                let (p, mm) = (phat(&m, i, j), mean_matrix(&m, i, j));
                assert!((p * i as f64 - mm * j as f64).abs() <= 1e-10 * p.max(1e-300) * i as f64);
            }
        }
    }

    #[test]
    fn mean_matrix_preserves_b() {
        // Σ_j m_{i,j} j = i when ψ(1) = 1
        let m = calibrate_two_point(1.5, 2).unwrap();
        for i in 1..=5u64 {
            let s: f64 = (1..=2000).map(|j| mean_matrix(&m, i, j) * j as f64).sum();
            assert!((s - i as f64).abs() < 1e-6, "{i}: {s}");
        }
    }

    #[test]
    fn phi_chain_transitions_follow_phat() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let chain = PhiChain::new(&m).unwrap();
        let mut rng = stream(4, Domain::Test, 0);
        let n = 200_000;
        let mut hits = [0usize; 4];
        for _ in 0..n {
            let j = chain.next(2, &mut rng) as usize;
            if j <= 3 {
                hits[j] += 1;
            }
        }
        for (j, &h) in hits.iter().enumerate().skip(1) {
            let p = phat(&m, 2, j as u64);
            let f = h as f64 / n as f64;
            assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{j}: {f} vs {p}");
        }
    }

    #[test]
    fn eigen_vectors_are_consistent() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let e = estimate_eigen(&m, 50, 1_000_000, 20_000, 3).unwrap();
        for i in 0..50 {
            assert!((e.b[i] / e.b[0] - (i + 1) as f64).abs() < 1e-12);
        }
        assert_eq!(e.capped, 0);
        // Σ_{i<=I} π_i = 1 - E[r^I (1 + I(1-r))] with r = x/(1+x); the
        // remainder decays only like I^{1-κ}
        let step = TiltedStep::new(&m).unwrap();
        let drift = -m.psi_derivative(1.0);
        let mut rest = Moments::default();
        for r in 0..20_000u64 {
            let mut rng = stream(3, Domain::Eigen, r);
            let (x, _, _) = sample_exponential_functional(&step, drift, 1e-12, 1_000_000, &mut rng);
            let q = x / (1.0 + x);
            rest.push(q.powi(50) * (1.0 + 50.0 * (1.0 - q)));
        }
        let total: f64 = e.pi.iter().sum();
        assert!(total < 1.0);
        assert!((total - (1.0 - rest.mean())).abs() < 1e-9, "{total} vs {}", 1.0 - rest.mean());
    }

    #[test]
    fn tilted_walk_steps_follow_the_tilted_law() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let law = m.tilted_step_law();
        let n = 100_000;
        let path = sample_s_hat(&m, n, &mut stream(6, Domain::Test, 0)).unwrap();
        let mut counts = vec![0u64; law.len()];
        let mut steps = Moments::default();
        for w in path.windows(2) {
            let d = w[1] - w[0];
            let k = law.iter().position(|(v, _)| (v - d).abs() < 1e-9).unwrap();
            counts[k] += 1;
            steps.push(d);
        }
        let probs: Vec<f64> = law.iter().map(|p| p.1).collect();
        let test = crate::stats::chi_square(&counts, 0, &probs, 5.0).unwrap();
        assert!(test.p_value > 0.001, "{test:?}");
        let drift = -m.psi_derivative(1.0);
        assert!((steps.mean() - drift).abs() < 4.0 * steps.stderr(), "{} vs {drift}", steps.mean());
        assert_eq!(path[0], 0.0);
    }

    #[test]
    fn many_to_one_at_generation_two() {
        // E[Σ_{|u|=2} e^{-V(u)} f(V(u))] = E[f(Ŝ_2)]
        let m = calibrate_two_point(1.5, 2).unwrap();
        let f = |x: f64| x * x;
        let mut rng = stream(7, Domain::Test, 1);
        let (mut first, mut second) = (Vec::new(), Vec::new());
        let mut lhs = Moments::default();
        for _ in 0..100_000 {
            m.sample_children(&mut rng, &mut first);
            let mut acc = 0.0;
            for &v in &first {
                m.sample_children(&mut rng, &mut second);
                acc += second.iter().map(|&d| (-(v + d)).exp() * f(v + d)).sum::<f64>();
            }
            lhs.push(acc);
        }
        let law = m.tilted_step_law();
        let rhs: f64 = law
            .iter()
            .flat_map(|&(a, p)| law.iter().map(move |&(b, q)| p * q * f(a + b)))
            .sum();
        assert!((lhs.mean() - rhs).abs() < 4.0 * lhs.stderr(), "{} vs {rhs}", lhs.mean());
    }

    #[test]
    fn pi_is_invariant_for_phat() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let e = estimate_eigen(&m, 400, 1_000_000, 50_000, 8).unwrap();
        for j in 1..=5u64 {
            let pushed: f64 = (1..=400u64).map(|i| e.pi[i as usize - 1] * phat(&m, i, j)).sum();
            let target = e.pi[j as usize - 1];
            assert!((pushed - target).abs() < 5.0 * e.stderr_pi[j as usize - 1], "{j}: {pushed} vs {target}");
        }
    }

    #[test]
    fn spine_starts_at_one_and_stops_at_first_return() {
        let m = calibrate_two_point(1.5, 2).unwrap();
        let mut rng = stream(5, Domain::SpineWalk, 0);
        let mut discarded = 0;
        for s in 0..200 {
            let cfg = SpineConfig {
                line_budget: Some(10_000_000),
                ..SpineConfig::first_return(SpineWalks::Full)
            };
            let sample = match sample_spine(&m, &cfg, s, &mut rng) {
                Ok(x) => x,
                Err(Error::BudgetExceeded { .. }) => {
                    discarded += 1;
                    continue;
                }
                Err(e) => panic!("{e}"),
            };
            assert_eq!(sample.phi[0], 1);
            let t = sample.tau.unwrap();
            assert_eq!(sample.phi[t], 1);
            assert!(sample.phi[1..t].iter().all(|&p| p > 1));
            let line = sample.line.unwrap();
            assert!(line.line >= 1);
            assert!(line.block >= line.line);
        }
        assert!(discarded < 10, "{discarded} samples over budget");
    }

    #[test]
    fn martingales_of_lambda_biased_tree() {
        let m = EnvironmentModel::LambdaBiased { m: 2, lambda: 2.0 };
        let mut arena = TreeArena::new(m, 0, crate::walk::WalkMode::TreeReflected);
        let lt = crate::walk::LocalTimes { beta: vec![1] };
        let s = martingales(&mut arena, &lt, 5).unwrap();
        for k in 0..=5 {
            assert!((s.w[k] - 1.0).abs() < 1e-12);
        }
        assert_eq!(s.z[0], 1);
    }
}
