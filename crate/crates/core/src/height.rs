//! Height and Łukasiewicz processes, the coded-tree metric, and a
//! Gromov-Hausdorff upper bound between finite trees.

use rand::Rng;

use crate::error::{Error, Result};
use crate::reduce::{LeafedForest, VertexType};

/// Weighted (or unweighted) height of each vertex in depth-first order.
pub fn height_process(forest: &LeafedForest, weighted: bool) -> Vec<u64> {
    let d = if weighted {
        forest.weighted_depths()
    } else {
        forest.depths()
    };
    forest.lex_order().iter().map(|&v| d[v]).collect()
}

/// `S_0 = 0`, `S_{k+1} = S_k + (number of children of the k-th vertex) - 1`.
pub fn lukasiewicz(forest: &LeafedForest) -> Vec<i64> {
    let mut s = Vec::with_capacity(forest.len() + 1);
    s.push(0i64);
    for v in forest.lex_order() {
        let last = *s.last().expect("nonempty");
        s.push(last + forest.children[v].len() as i64 - 1);
    }
    s
}

/// Strict record times `k >= 1` with `S_k > max_{l<k} S_l`.
pub fn record_times(path: &[i64]) -> Vec<usize> {
    let mut out = Vec::new();
    let Some(&first) = path.first() else {
        return out;
    };
    let mut best = first;
    for (k, &x) in path.iter().enumerate().skip(1) {
        if x > best {
            out.push(k);
            best = x;
        }
    }
    out
}

/// For the `i`-th vertex of `forest` in depth-first order, the depth-first
/// index within the type-1 skeleton of the vertex itself (type 1) or of its
/// parent (type 0).
pub fn phi_index_map(forest: &LeafedForest) -> Vec<usize> {
    let order = forest.lex_order();
    let mut skeleton_index = vec![usize::MAX; forest.len()];
    let mut next = 0;
    for &v in &order {
        if forest.kind[v] == VertexType::One {
            skeleton_index[v] = next;
            next += 1;
        }
    }
    order
        .iter()
        .map(|&v| match forest.kind[v] {
            VertexType::One => skeleton_index[v],
            VertexType::Zero => skeleton_index[forest.parent[v].expect("type-0 vertices have a parent")],
        })
        .collect()
}

/// `max_{k < n} |H(k) - H_1(φ(k))|` between the weighted height process of
/// `forest` and that of its type-1 skeleton read through `φ`.
pub fn skeleton_discrepancy(forest: &LeafedForest, n: usize) -> u64 {
    let h = height_process(forest, true);
    let h1 = height_process(&forest.type_one_skeleton(), true);
    let phi = phi_index_map(forest);
    (0..n.min(h.len()))
        .map(|k| h[k].abs_diff(h1[phi[k]]))
        .max()
        .unwrap_or(0)
}

/// Values of κ within this distance of 2 use the critical scale.
pub const KAPPA_TWO_TOLERANCE: f64 = 1e-6;

/// Scale `n^{1-1/κ}` for `κ < 2` and `(n / ln n)^{1/2}` at `κ = 2`.
pub fn scale(kappa: f64, n: usize) -> Result<f64> {
    if !(kappa > 1.0 && kappa <= 2.0 + KAPPA_TWO_TOLERANCE) {
        return Err(Error::InvalidArgument(format!("kappa must lie in (1, 2], got {kappa}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    let n = n as f64;
    Ok(if kappa < 2.0 - KAPPA_TWO_TOLERANCE {
        n.powf(1.0 - 1.0 / kappa)
    } else {
        (n / n.ln()).sqrt()
    })
}

/// Values divided by [`scale`], with the scale returned alongside.
pub fn rescale(values: &[u64], kappa: f64, n: usize) -> Result<(Vec<f64>, f64)> {
    let c = scale(kappa, n)?;
    Ok((values.iter().map(|&v| v as f64 / c).collect(), c))
}

/// Range-minimum queries in O(1) after O(n log n) preprocessing. Ties go to
/// the leftmost position.
#[derive(Clone, Debug)]
pub struct SparseTable {
    values: Vec<f64>,
    table: Vec<Vec<u32>>,
}

impl SparseTable {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        let mut table = vec![(0..n as u32).collect::<Vec<_>>()];
        let mut width = 1;
        while 2 * width <= n {
            let prev = table.last().expect("nonempty");
            let row = (0..=n - 2 * width)
                .map(|i| {
                    let (a, b) = (prev[i], prev[i + width]);
                    if values[b as usize] < values[a as usize] {
                        b
                    } else {
                        a
                    }
                })
                .collect();
            table.push(row);
            width *= 2;
        }
        SparseTable { values, table }
    }

    /// Position of the minimum on `[lo, hi]` (inclusive).
    pub fn argmin(&self, lo: usize, hi: usize) -> usize {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let k = (usize::BITS - 1 - (hi - lo + 1).leading_zeros()) as usize;
        let (a, b) = (self.table[k][lo], self.table[k][hi + 1 - (1 << k)]);
        if self.values[b as usize] < self.values[a as usize] {
            b as usize
        } else {
            a as usize
        }
    }

    pub fn min(&self, lo: usize, hi: usize) -> f64 {
        self.values[self.argmin(lo, hi)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub trait TreeMetric {
    fn size(&self) -> usize;
    fn dist(&self, a: usize, b: usize) -> f64;
}

/// The pseudo-metric `d(s,t) = g(s) + g(t) - 2 min_{[s,t]} g` coded by a
/// nonnegative function on a uniform grid.
#[derive(Clone, Debug)]
pub struct CodedTree {
    rmq: SparseTable,
}

impl CodedTree {
    pub fn new(driver: Vec<f64>) -> Result<Self> {
        if driver.is_empty() {
            return Err(Error::InvalidArgument("empty driver".into()));
        }
        if driver.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidArgument("driver must be finite and nonnegative".into()));
        }
        Ok(CodedTree {
            rmq: SparseTable::new(driver),
        })
    }

    pub fn from_heights(h: &[u64]) -> Result<Self> {
        Self::new(h.iter().map(|&x| x as f64).collect())
    }

    pub fn driver(&self) -> &[f64] {
        self.rmq.values()
    }
}

impl TreeMetric for CodedTree {
    fn size(&self) -> usize {
        self.rmq.values().len()
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        let g = self.rmq.values();
        g[a] + g[b] - 2.0 * self.rmq.min(a, b)
    }
}

/// A rooted tree with edge lengths; distances via lowest common ancestors.
#[derive(Clone, Debug)]
pub struct PlaneTree {
    height: Vec<f64>,
    first: Vec<usize>,
    euler: Vec<usize>,
    rmq: SparseTable,
    root: usize,
}

impl PlaneTree {
    /// `lengths[v]` is the length of the edge from `v` to its parent.
    pub fn new(parent: &[Option<usize>], lengths: &[f64]) -> Result<Self> {
        let n = parent.len();
        if lengths.len() != n || n == 0 {
            return Err(Error::InvalidArgument("bad tree description".into()));
        }
        let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidArgument(format!("expected one root, found {}", roots.len())));
        }
        let mut kids = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                kids[*p].push(v);
            }
        }
        let root = roots[0];
        let mut height = vec![0.0; n];
        let mut level = vec![0.0; n];
        let mut first = vec![usize::MAX; n];
        let mut euler = Vec::with_capacity(2 * n);
        let mut depth_seq = Vec::with_capacity(2 * n);
        let mut stack = vec![(root, 0usize)];
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next == 0 {
                first[v] = euler.len();
            }
            euler.push(v);
            depth_seq.push(level[v]);
            if *next < kids[v].len() {
                let c = kids[v][*next];
                *next += 1;
                height[c] = height[v] + lengths[c];
                level[c] = level[v] + 1.0;
                stack.push((c, 0));
            } else {
                stack.pop();
            }
        }
        if first.contains(&usize::MAX) {
            return Err(Error::InvalidArgument("tree is not connected".into()));
        }
        Ok(PlaneTree {
            height,
            first,
            euler,
            rmq: SparseTable::new(depth_seq),
            root,
        })
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn lca(&self, a: usize, b: usize) -> usize {
        self.euler[self.rmq.argmin(self.first[a], self.first[b])]
    }
}

impl TreeMetric for PlaneTree {
    fn size(&self) -> usize {
        self.height.len()
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        self.height[a] + self.height[b] - 2.0 * self.height[self.lca(a, b)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairSampling {
    All,
    Random { pairs: usize, seed: u64 },
}

/// `½ sup |d_A(x,y) - d_B(φx, φy)|` over pairs of `A`, which bounds the
/// Gromov-Hausdorff distance when `φ` is onto. `roots` gives the two roots,
/// which `φ` must match.
pub fn gh_upper_bound<A: TreeMetric, B: TreeMetric>(
    a: &A,
    b: &B,
    map: &[usize],
    roots: (usize, usize),
    pairs: PairSampling,
) -> Result<f64> {
    if map.len() != a.size() {
        return Err(Error::InvalidArgument("map must cover every vertex of A".into()));
    }
    if map.get(roots.0) != Some(&roots.1) {
        return Err(Error::Precondition("map must send root to root".into()));
    }
    let mut hit = vec![false; b.size()];
    for &y in map {
        if y >= b.size() {
            return Err(Error::InvalidArgument("map leaves B".into()));
        }
        hit[y] = true;
    }
    if hit.contains(&false) {
        return Err(Error::Precondition("map must be onto".into()));
    }
    let gap = |x: usize, y: usize| (a.dist(x, y) - b.dist(map[x], map[y])).abs();
    let n = a.size();
    let sup = match pairs {
        PairSampling::All => (0..n)
            .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
            .map(|(x, y)| gap(x, y))
            .fold(0.0, f64::max),
        PairSampling::Random { pairs, seed } => {
            let mut rng = crate::rng::stream(seed, crate::rng::Domain::Test, 0);
            (0..pairs)
                .map(|_| gap(rng.random_range(0..n), rng.random_range(0..n)))
                .fold(0.0, f64::max)
        }
    };
    Ok(0.5 * sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::{build_fr, RangeForest};
    use proptest::prelude::*;

    fn leafed(parent: &[Option<usize>]) -> LeafedForest {
        let beta = vec![1; parent.len()];
        let label: Vec<u64> = (0..parent.len() as u64).collect();
        build_fr(&RangeForest::from_parents(parent, &beta, &label).unwrap())
    }

    #[test]
    fn lukasiewicz_of_star() {
        let f = leafed(&[None, Some(0), Some(0), Some(0)]);
        assert_eq!(lukasiewicz(&f), [0, 2, 1, 0, -1]);
    }

    #[test]
    fn lukasiewicz_of_isolated_roots() {
        let f = leafed(&[None, None, None]);
        assert_eq!(lukasiewicz(&f), [0, -1, -2, -3]);
        assert!(record_times(&lukasiewicz(&f)).is_empty());
    }

    #[test]
    fn record_times_of_path() {
        assert_eq!(record_times(&[0, 2, 1, 3, 3, 4]), [1, 3, 5]);
    }

    #[test]
    fn rescale_values() {
        assert!((scale(1.5, 10_000).unwrap() - 21.544_346_900_318_84).abs() < 1e-9);
        let n = std::f64::consts::E.powi(2);
        // (e^2 / 2)^{1/2} at integer n close to e^2
        let c = scale(2.0, n.round() as usize).unwrap();
        assert!((c - (7.0f64 / 7f64.ln()).sqrt()).abs() < 1e-12);
        assert!(scale(2.5, 100).is_err());
        assert!(scale(1.5, 1).is_err());
    }

    #[test]
    fn phi_of_fr_points_to_type_one_skeleton() {
        // root -> a(β=2), b(β=1); b -> c(β=3)
        let f = RangeForest::from_parents(&[None, Some(0), Some(0), Some(2)], &[1, 2, 1, 3], &[0, 1, 2, 3])
            .unwrap();
        let fr = build_fr(&f);
        assert_eq!(phi_index_map(&fr), [0, 0, 1, 1]);
        assert_eq!(skeleton_discrepancy(&fr, 4), 1);
    }

    #[test]
    fn plane_tree_distances() {
        // 0 -> 1 -> 2, 0 -> 3, with unit lengths except 0-3 of length 2
        let t = PlaneTree::new(&[None, Some(0), Some(1), Some(0)], &[0.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(t.dist(2, 3), 4.0);
        assert_eq!(t.dist(1, 2), 1.0);
        assert_eq!(t.lca(2, 3), 0);
    }

    #[test]
    fn gh_bound_of_identity_is_zero() {
        let t = PlaneTree::new(&[None, Some(0), Some(1), Some(0)], &[0.0, 1.0, 1.0, 1.0]).unwrap();
        let g = gh_upper_bound(&t, &t, &[0, 1, 2, 3], (0, 0), PairSampling::All).unwrap();
        assert_eq!(g, 0.0);
        assert!(gh_upper_bound(&t, &t, &[0, 1, 1, 3], (0, 0), PairSampling::All).is_err());
        assert!(gh_upper_bound(&t, &t, &[1, 0, 2, 3], (0, 0), PairSampling::All).is_err());
    }

    fn brute_min(g: &[f64], a: usize, b: usize) -> f64 {
        g[a.min(b)..=a.max(b)].iter().copied().fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #[test]
        fn sparse_table_matches_scan(g in prop::collection::vec(0.0f64..10.0, 1..200), a in 0usize..200, b in 0usize..200) {
            let (a, b) = (a % g.len(), b % g.len());
            let t = SparseTable::new(g.clone());
            prop_assert_eq!(t.min(a, b), brute_min(&g, a, b));
        }

        #[test]
        fn coded_tree_is_a_pseudometric(g in prop::collection::vec(0u64..20, 1..80), i in 0usize..80, j in 0usize..80, k in 0usize..80) {
            let n = g.len();
            let (i, j, k) = (i % n, j % n, k % n);
            let t = CodedTree::from_heights(&g).unwrap();
            prop_assert_eq!(t.dist(i, i), 0.0);
            prop_assert_eq!(t.dist(i, j), t.dist(j, i));
            prop_assert!(t.dist(i, j) >= 0.0);
            prop_assert!(t.dist(i, k) <= t.dist(i, j) + t.dist(j, k) + 1e-12);
        }

        #[test]
        fn height_process_of_fr_matches_depths(parents in prop::collection::vec(0usize..1000, 1..60), betas in prop::collection::vec(1u64..4, 61)) {
            let n = parents.len() + 1;
            let parent: Vec<Option<usize>> = std::iter::once(None)
                .chain(parents.iter().enumerate().map(|(i, &p)| Some(p % (i + 1))))
                .collect();
            let label: Vec<u64> = (0..n as u64).collect();
            let f = RangeForest::from_parents(&parent, &betas[..n], &label).unwrap();
            let fr = build_fr(&f);
            let h = height_process(&fr, true);
            let d: Vec<u64> = f.depth.iter().map(|&x| u64::from(x)).collect();
            prop_assert_eq!(h, d);
            let s = lukasiewicz(&fr.type_one_skeleton());
            prop_assert_eq!(*s.last().unwrap(), -1);
            prop_assert!(s[..s.len() - 1].iter().all(|&x| x >= 0));
        }
    }
}
