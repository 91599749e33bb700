//! Lazily materialized trees and the nearest-neighbour walk on them.
//!
//! Vertices are created when their parent is first expanded. The marks of a
//! vertex's children are drawn from a random stream keyed by the vertex
//! address (a hash of its path from the root), so the environment is a
//! function of the environment seed alone and does not depend on the order
//! in which a walk explores it.

pub mod branching;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::rng::{child_address, root_address, stream, Domain};

pub type VertexId = u32;

/// The extra vertex above the root of a reflected tree.
pub const ARTIFICIAL_PARENT: VertexId = u32::MAX;

pub const DEFAULT_VERTEX_BUDGET: usize = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    /// A single tree whose root is attached to an artificial parent that
    /// always steps back to the root.
    TreeReflected,
    /// A sequence of trees where the parent move at `root_j` jumps to `root_{j+1}`.
    Forest,
}

#[derive(Clone, Debug)]
struct Node {
    parent: VertexId,
    tree: u32,
    generation: u32,
    address: u64,
    potential: f64,
    weight: f64,
    first_child: VertexId,
    child_count: u32,
    child_weight: f64,
    expanded: bool,
    spine: bool,
}

#[derive(Clone, Debug)]
pub struct TreeArena {
    model: EnvironmentModel,
    seed: u64,
    mode: WalkMode,
    budget: usize,
    nodes: Vec<Node>,
    roots: Vec<VertexId>,
    spine: Vec<VertexId>,
    spine_enabled: bool,
    buf: Vec<f64>,
}

impl TreeArena {
    pub fn new(model: EnvironmentModel, seed: u64, mode: WalkMode) -> Self {
        let mut arena = TreeArena {
            model,
            seed,
            mode,
            budget: DEFAULT_VERTEX_BUDGET,
            nodes: Vec::new(),
            roots: Vec::new(),
            spine: Vec::new(),
            spine_enabled: false,
            buf: Vec::new(),
        };
        arena.push_root();
        arena
    }

    /// A reflected tree whose root starts a spine: spine vertices get their
    /// children from the size-biased law and mark one of them as the next
    /// spine vertex.
    pub fn with_spine(model: EnvironmentModel, seed: u64) -> Self {
        let mut arena = TreeArena::new(model, seed, WalkMode::TreeReflected);
        arena.spine_enabled = true;
        arena.nodes[0].spine = true;
        arena.spine.push(0);
        arena
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    /// Drops every vertex and restarts with a new environment seed.
    pub fn reset(&mut self, seed: u64) {
        self.seed = seed;
        self.nodes.clear();
        self.roots.clear();
        self.spine.clear();
        self.push_root();
        if self.spine_enabled {
            self.nodes[0].spine = true;
            self.spine.push(0);
        }
    }

    fn push_root(&mut self) -> VertexId {
        let j = self.roots.len();
        let id = self.nodes.len() as VertexId;
        self.nodes.push(Node {
            parent: ARTIFICIAL_PARENT,
            tree: j as u32,
            generation: 0,
            address: root_address(j as u64),
            potential: 0.0,
            weight: 1.0,
            first_child: 0,
            child_count: 0,
            child_weight: 0.0,
            expanded: false,
            spine: false,
        });
        self.roots.push(id);
        id
    }

    pub fn model(&self) -> &EnvironmentModel {
        &self.model
    }

    pub fn mode(&self) -> WalkMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The root of tree `j`, created on demand.
    pub fn root(&mut self, j: usize) -> VertexId {
        while self.roots.len() <= j {
            self.push_root();
        }
        self.roots[j]
    }

    pub fn roots(&self) -> &[VertexId] {
        &self.roots
    }

    pub fn is_root(&self, u: VertexId) -> bool {
        u != ARTIFICIAL_PARENT && self.nodes[u as usize].parent == ARTIFICIAL_PARENT
    }

    pub fn parent(&self, u: VertexId) -> VertexId {
        self.nodes[u as usize].parent
    }

    pub fn tree_index(&self, u: VertexId) -> usize {
        self.nodes[u as usize].tree as usize
    }

    pub fn generation(&self, u: VertexId) -> u32 {
        self.nodes[u as usize].generation
    }

    /// `V(u)`.
    pub fn potential(&self, u: VertexId) -> f64 {
        self.nodes[u as usize].potential
    }

    /// `e^{-(V(u) - V(parent))}`.
    pub fn edge_weight(&self, u: VertexId) -> f64 {
        self.nodes[u as usize].weight
    }

    pub fn address(&self, u: VertexId) -> u64 {
        self.nodes[u as usize].address
    }

    pub fn is_expanded(&self, u: VertexId) -> bool {
        self.nodes[u as usize].expanded
    }

    pub fn on_spine(&self, u: VertexId) -> bool {
        self.nodes[u as usize].spine
    }

    /// Spine vertices `w_0, w_1, ..` materialized so far.
    pub fn spine(&self) -> &[VertexId] {
        &self.spine
    }

    /// Extends the spine to `w_k` and returns it.
    pub fn spine_vertex(&mut self, k: usize) -> Result<VertexId> {
        assert!(self.spine_enabled, "arena has no spine");
        while self.spine.len() <= k {
            let last = *self.spine.last().expect("spine starts at the root");
            self.expand(last)?;
        }
        Ok(self.spine[k])
    }

    /// Children of an expanded vertex, in birth order.
    pub fn children(&self, u: VertexId) -> Range<VertexId> {
        let n = &self.nodes[u as usize];
        debug_assert!(n.expanded);
        n.first_child..n.first_child + n.child_count
    }

    pub fn expand(&mut self, u: VertexId) -> Result<()> {
        let ui = u as usize;
        if self.nodes[ui].expanded {
            return Ok(());
        }
        let addr = self.nodes[ui].address;
        let mut rng = stream(self.seed, Domain::Environment, addr);
        let spine_child = if self.nodes[ui].spine {
            Some(self.model.sample_size_biased(&mut rng, &mut self.buf))
        } else {
            self.model.sample_children(&mut rng, &mut self.buf);
            None
        };
        let count = self.buf.len();
        if self.nodes.len() + count > self.budget {
            return Err(Error::BudgetExceeded {
                what: "vertices",
                limit: self.budget,
            });
        }
        let first = self.nodes.len() as VertexId;
        let (gen, pot, tree) = {
            let n = &self.nodes[ui];
            (n.generation + 1, n.potential, n.tree)
        };
        let mut sum = 0.0;
        for (i, &d) in self.buf.iter().enumerate() {
            let w = (-d).exp();
            sum += w;
            self.nodes.push(Node {
                parent: u,
                tree,
                generation: gen,
                address: child_address(addr, i as u32),
                potential: pot + d,
                weight: w,
                first_child: 0,
                child_count: 0,
                child_weight: 0.0,
                expanded: false,
                spine: spine_child == Some(i),
            });
        }
        if let Some(s) = spine_child {
            self.spine.push(first + s as VertexId);
        }
        let n = &mut self.nodes[ui];
        n.first_child = first;
        n.child_count = count as u32;
        n.child_weight = sum;
        n.expanded = true;
        Ok(())
    }

    /// Transition probabilities out of `u`, parent move first, then the
    /// children in birth order. The last entry absorbs rounding so the
    /// probabilities sum to one exactly.
    pub fn step_distribution(&mut self, u: VertexId) -> Result<Vec<(VertexId, f64)>> {
        if u == ARTIFICIAL_PARENT {
            return Ok(vec![(self.roots[0], 1.0)]);
        }
        self.expand(u)?;
        let up = self.up_target(u);
        let n = &self.nodes[u as usize];
        let total = 1.0 + n.child_weight;
        let mut out = Vec::with_capacity(n.child_count as usize + 1);
        out.push((up, 1.0 / total));
        for c in n.first_child..n.first_child + n.child_count {
            out.push((c, self.nodes[c as usize].weight / total));
        }
        let head: f64 = out[..out.len() - 1].iter().map(|p| p.1).sum();
        if let Some(last) = out.last_mut() {
            last.1 = 1.0 - head;
        }
        Ok(out)
    }

    fn up_target(&mut self, u: VertexId) -> VertexId {
        let n = &self.nodes[u as usize];
        if n.parent != ARTIFICIAL_PARENT {
            return n.parent;
        }
        match self.mode {
            WalkMode::TreeReflected => ARTIFICIAL_PARENT,
            WalkMode::Forest => {
                let j = n.tree as usize;
                self.root(j + 1)
            }
        }
    }

    /// One step of the walk from `u`.
    pub fn step<R: Rng + ?Sized>(&mut self, u: VertexId, rng: &mut R) -> Result<VertexId> {
        if u == ARTIFICIAL_PARENT {
            return Ok(self.roots[0]);
        }
        self.expand(u)?;
        let n = &self.nodes[u as usize];
        let mut r = rng.random::<f64>() * (1.0 + n.child_weight) - 1.0;
        if r < 0.0 {
            return Ok(self.up_target(u));
        }
        let (first, count) = (n.first_child, n.child_count);
        for c in first..first + count {
            let w = self.nodes[c as usize].weight;
            if r < w {
                return Ok(c);
            }
            r -= w;
        }
        Ok(first + count - 1)
    }
}

/// Positions `X_0, X_1, ..` of a walk. `X_0` is the first root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkTrace {
    pub mode: WalkMode,
    pub steps: Vec<VertexId>,
}

impl WalkTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// For a forest walk, the longest prefix covering only trees the walk
    /// has left for good: it ends just before the last jump to a new root.
    pub fn completed_prefix(&self, arena: &TreeArena) -> WalkTrace {
        let mut end = 0;
        for i in 1..self.steps.len() {
            let (a, b) = (self.steps[i - 1], self.steps[i]);
            if arena.is_root(a) && arena.is_root(b) && a != b {
                end = i;
            }
        }
        WalkTrace {
            mode: self.mode,
            steps: self.steps[..end].to_vec(),
        }
    }
}

pub fn run_walk<R: Rng + ?Sized>(
    arena: &mut TreeArena,
    n_steps: usize,
    rng: &mut R,
) -> Result<WalkTrace> {
    let mut steps = Vec::with_capacity(n_steps + 1);
    let mut x = arena.root(0);
    steps.push(x);
    for _ in 0..n_steps {
        x = arena.step(x, rng)?;
        steps.push(x);
    }
    Ok(WalkTrace {
        mode: arena.mode(),
        steps,
    })
}

/// Walk on a reflected tree from the root until it has stepped to the
/// artificial parent `excursions` times. The final artificial-parent visit
/// is kept in the trace.
pub fn run_excursions<R: Rng + ?Sized>(
    arena: &mut TreeArena,
    excursions: usize,
    max_steps: usize,
    rng: &mut R,
) -> Result<WalkTrace> {
    if arena.mode() != WalkMode::TreeReflected {
        return Err(Error::Precondition("excursions need a reflected tree".into()));
    }
    let mut x = arena.root(0);
    let mut steps = vec![x];
    let mut done = 0;
    while done < excursions {
        if steps.len() > max_steps {
            return Err(Error::BudgetExceeded {
                what: "walk steps",
                limit: max_steps,
            });
        }
        x = arena.step(x, rng)?;
        steps.push(x);
        if x == ARTIFICIAL_PARENT {
            done += 1;
            if done < excursions {
                x = arena.step(x, rng)?;
                steps.push(x);
            }
        }
    }
    Ok(WalkTrace {
        mode: WalkMode::TreeReflected,
        steps,
    })
}

/// Edge local times `β(u)`: the number of steps from the parent of `u`
/// into `u`. Every visited root gets the number of times it was entered,
/// counting the start of the walk as one entry. Indexed by vertex id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalTimes {
    pub beta: Vec<u64>,
}

impl LocalTimes {
    pub fn get(&self, u: VertexId) -> u64 {
        self.beta.get(u as usize).copied().unwrap_or(0)
    }
}

pub fn edge_local_times(trace: &WalkTrace, arena: &TreeArena) -> LocalTimes {
    let mut beta = vec![0u64; arena.len()];
    let mut prev = ARTIFICIAL_PARENT;
    for (i, &x) in trace.steps.iter().enumerate() {
        if x != ARTIFICIAL_PARENT {
            let p = arena.parent(x);
            let entered = if p == ARTIFICIAL_PARENT {
                match trace.mode {
                    WalkMode::TreeReflected => i == 0 || prev == ARTIFICIAL_PARENT,
                    WalkMode::Forest => i == 0 || (prev != x && arena.is_root(prev)),
                }
            } else {
                prev == p
            };
            if entered {
                beta[x as usize] += 1;
            }
        }
        prev = x;
    }
    LocalTimes { beta }
}

/// Visited vertices, sorted by id.
pub fn range(trace: &WalkTrace) -> Vec<VertexId> {
    let mut r: Vec<VertexId> = trace
        .steps
        .iter()
        .copied()
        .filter(|&x| x != ARTIFICIAL_PARENT)
        .collect();
    r.sort_unstable();
    r.dedup();
    r
}

/// `T_1 = 0` and `T_k`, `k >= 2`, the time of the `k`-th entry into the
/// root from the artificial parent, counting the start as the first.
pub fn excursion_times(trace: &WalkTrace) -> Vec<usize> {
    let mut t = Vec::new();
    if !trace.steps.is_empty() {
        t.push(0);
    }
    for i in 1..trace.steps.len() {
        if trace.steps[i - 1] == ARTIFICIAL_PARENT && trace.steps[i] != ARTIFICIAL_PARENT {
            t.push(i);
        }
    }
    t
}

/// Local times of `excursions` excursions from the root of a reflected
/// tree, without storing the trace. With `max_generation = Some(g)` the
/// walk never goes below generation `g`: each move from generation `g`
/// into a child is counted and the walker stays put, which is exactly the
/// effect of the (finite) excursion into that child's subtree as seen from
/// generations `<= g + 1`.
pub fn excursion_local_times<R: Rng + ?Sized>(
    arena: &mut TreeArena,
    excursions: usize,
    max_generation: Option<u32>,
    max_steps: usize,
    rng: &mut R,
) -> Result<(LocalTimes, usize)> {
    let root = arena.root(0);
    let mut beta: Vec<u64> = Vec::new();
    let bump = |beta: &mut Vec<u64>, v: VertexId| {
        let v = v as usize;
        if beta.len() <= v {
            beta.resize(v + 1, 0);
        }
        beta[v] += 1;
    };
    let mut steps = 0usize;
    for _ in 0..excursions {
        bump(&mut beta, root);
        let mut x = root;
        loop {
            if steps >= max_steps {
                return Err(Error::BudgetExceeded {
                    what: "walk steps",
                    limit: max_steps,
                });
            }
            steps += 1;
            let y = arena.step(x, rng)?;
            if y == ARTIFICIAL_PARENT {
                break;
            }
            if arena.parent(y) == x {
                bump(&mut beta, y);
                if max_generation.is_some_and(|g| arena.generation(x) >= g) {
                    continue;
                }
            }
            x = y;
        }
    }
    beta.resize(arena.len(), 0);
    Ok((LocalTimes { beta }, steps))
}

/// Heights `|X_k|` of a forest walk, streamed without keeping the trace.
pub fn forest_heights<R: Rng + ?Sized>(
    arena: &mut TreeArena,
    n_steps: usize,
    rng: &mut R,
    mut visit: impl FnMut(usize, VertexId, u32),
) -> Result<()> {
    let mut x = arena.root(0);
    visit(0, x, 0);
    for k in 1..=n_steps {
        x = arena.step(x, rng)?;
        visit(k, x, arena.generation(x));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::calibrate_two_point;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn model() -> EnvironmentModel {
        calibrate_two_point(1.5, 2).unwrap()
    }

    #[test]
    fn step_distribution_of_three_equal_weights() {
        // Single child at displacement 0 plus one at ln 2 gives weights
        // parent 1, child 1, child 1/2 relative to e^{-V(u)}.
        let m = EnvironmentModel::Tabulated {
            atoms: vec![crate::env::Atom {
                prob: 1.0,
                marks: vec![0.0, 2f64.ln()],
            }],
        };
        let mut a = TreeArena::new(m, 0, WalkMode::TreeReflected);
        let d = a.step_distribution(0).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d[0].0, ARTIFICIAL_PARENT);
        assert!((d[0].1 - 0.4).abs() < 1e-15);
        assert!((d[1].1 - 0.4).abs() < 1e-15);
        assert!((d[2].1 - 0.2).abs() < 1e-15);
        assert_eq!(d.iter().map(|p| p.1).sum::<f64>(), 1.0);
    }

    #[test]
    fn environment_does_not_depend_on_visit_order() {
        let mut a = TreeArena::new(model(), 5, WalkMode::TreeReflected);
        let mut b = TreeArena::new(model(), 5, WalkMode::TreeReflected);
        a.expand(0).unwrap();
        b.expand(0).unwrap();
        let (a0, a1) = (a.children(0).start, a.children(0).start + 1);
        let (b0, b1) = (b.children(0).start, b.children(0).start + 1);
        a.expand(a0).unwrap();
        a.expand(a1).unwrap();
        b.expand(b1).unwrap();
        b.expand(b0).unwrap();
        let pots = |t: &TreeArena, u: VertexId| -> Vec<f64> {
            t.children(u).map(|c| t.potential(c)).collect()
        };
        assert_eq!(pots(&a, a0), pots(&b, b0));
        assert_eq!(pots(&a, a1), pots(&b, b1));
    }

    #[test]
    fn budget_is_enforced() {
        let mut a = TreeArena::new(model(), 1, WalkMode::Forest).with_budget(50);
        let mut rng = stream(1, Domain::Walk, 0);
        let r = run_walk(&mut a, 100_000, &mut rng);
        assert!(matches!(r, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn excursion_times_start_at_zero() {
        let t = WalkTrace {
            mode: WalkMode::TreeReflected,
            steps: vec![0, ARTIFICIAL_PARENT, 0],
        };
        assert_eq!(excursion_times(&t), vec![0, 2]);
    }

    #[test]
    fn reflected_walk_local_times_balance() {
        let mut a = TreeArena::new(model(), 3, WalkMode::TreeReflected);
        let mut rng = stream(3, Domain::Walk, 0);
        let t = run_excursions(&mut a, 5, 10_000_000, &mut rng).unwrap();
        let lt = edge_local_times(&t, &a);
        assert_eq!(lt.get(0), 5);
        // each entry into u is matched by an exit back to its parent
        for &u in &range(&t) {
            let down = lt.get(u);
            let up = t
                .steps
                .windows(2)
                .filter(|w| w[0] == u && w[1] == a.parent(u))
                .count() as u64;
            assert_eq!(down, up);
        }
    }

    #[test]
    fn truncated_excursions_agree_with_full_ones_near_the_root() {
        let mut a = TreeArena::new(model(), 9, WalkMode::TreeReflected);
        let mut b = a.clone();
        let mut r1 = stream(9, Domain::Walk, 0);
        let t = run_excursions(&mut a, 3, 10_000_000, &mut r1).unwrap();
        let full = edge_local_times(&t, &a);
        let mut r2 = stream(9, Domain::Walk, 0);
        let (part, _) = excursion_local_times(&mut b, 3, None, 10_000_000, &mut r2).unwrap();
        assert_eq!(full.beta[..part.beta.len().min(full.beta.len())], part.beta[..]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn forest_walk_moves_to_neighbours(seed in 0u64..1000) {
            let mut a = TreeArena::new(model(), seed, WalkMode::Forest);
            let mut rng = stream(seed, Domain::Walk, 0);
            let t = run_walk(&mut a, 500, &mut rng).unwrap();
            for w in t.steps.windows(2) {
                let (x, y) = (w[0], w[1]);
                let ok = a.parent(y) == x
                    || a.parent(x) == y
                    || (a.is_root(x) && a.is_root(y) && a.tree_index(y) == a.tree_index(x) + 1);
                prop_assert!(ok);
            }
        }

        #[test]
        fn step_distribution_sums_to_one(seed in 0u64..1000) {
            let mut a = TreeArena::new(model(), seed, WalkMode::Forest);
            let d = a.step_distribution(0).unwrap();
            prop_assert_eq!(d.iter().map(|p| p.1).sum::<f64>(), 1.0);
            prop_assert!(d.iter().all(|p| p.1 > 0.0));
        }
    }
}
