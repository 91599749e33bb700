//! The visited forest with its local times, and its two leafed reductions.
//!
//! `F^R` keeps one vertex per visited vertex: each vertex with unit local
//! time (and each root) becomes a type-1 vertex whose children are the
//! vertices of its optional line block, in lexicographic order. `F^X` is
//! built by scanning the walk chronologically and creating one vertex per
//! time step, so that its depth-first order is the time order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walk::{LocalTimes, TreeArena, VertexId, WalkTrace, ARTIFICIAL_PARENT};

/// A plane forest with local times, vertices indexed in depth-first
/// (lexicographic) order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeForest {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub roots: Vec<usize>,
    pub depth: Vec<u32>,
    pub beta: Vec<u64>,
    /// Caller's identifier for each vertex (arena id or fixture label).
    pub label: Vec<u64>,
}

impl RangeForest {
    /// Builds the forest from `parent` links; siblings keep their relative
    /// input order. Input vertices need not be in any particular order.
    pub fn from_parents(parent: &[Option<usize>], beta: &[u64], label: &[u64]) -> Result<Self> {
        let n = parent.len();
        if beta.len() != n || label.len() != n {
            return Err(Error::InvalidArgument("length mismatch".into()));
        }
        let mut kids = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for (v, p) in parent.iter().enumerate() {
            match p {
                Some(p) if *p < n => kids[*p].push(v),
                Some(p) => return Err(Error::InvalidArgument(format!("parent {p} out of range"))),
                None => roots.push(v),
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<usize> = roots.iter().rev().copied().collect();
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(kids[v].iter().rev());
        }
        if order.len() != n {
            return Err(Error::InvalidArgument("parent links contain a cycle".into()));
        }
        let mut pos = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        let mut f = RangeForest {
            parent: vec![None; n],
            children: vec![Vec::new(); n],
            roots: roots.iter().map(|&r| pos[r]).collect(),
            depth: vec![0; n],
            beta: vec![0; n],
            label: vec![0; n],
        };
        for (i, &v) in order.iter().enumerate() {
            f.parent[i] = parent[v].map(|p| pos[p]);
            f.children[i] = kids[v].iter().map(|&c| pos[c]).collect();
            f.beta[i] = beta[v];
            f.label[i] = label[v];
            if let Some(p) = f.parent[i] {
                f.depth[i] = f.depth[p] + 1;
            }
        }
        Ok(f)
    }

    /// The vertices visited by `trace`, with their local times.
    pub fn from_walk(arena: &TreeArena, trace: &WalkTrace, lt: &LocalTimes) -> Result<Self> {
        let mut visited: Vec<VertexId> = trace
            .steps
            .iter()
            .copied()
            .filter(|&x| x != ARTIFICIAL_PARENT)
            .collect();
        visited.sort_unstable();
        visited.dedup();
        let index: HashMap<VertexId, usize> =
            visited.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let parent: Vec<Option<usize>> = visited
            .iter()
            .map(|&v| {
                let p = arena.parent(v);
                if p == ARTIFICIAL_PARENT {
                    None
                } else {
                    index.get(&p).copied()
                }
            })
            .collect();
        // children are created contiguously, so id order is birth order and
        // roots are in tree order once sorted by tree index
        let mut order: Vec<usize> = (0..visited.len()).collect();
        order.sort_by_key(|&i| (parent[i].is_some(), arena.tree_index(visited[i]), visited[i]));
        let remap: Vec<usize> = {
            let mut r = vec![0; order.len()];
            for (k, &i) in order.iter().enumerate() {
                r[i] = k;
            }
            r
        };
        let mut p2 = vec![None; order.len()];
        let mut beta = vec![0; order.len()];
        let mut label = vec![0; order.len()];
        for (i, &v) in visited.iter().enumerate() {
            p2[remap[i]] = parent[i].map(|p| remap[p]);
            beta[remap[i]] = lt.get(v);
            label[remap[i]] = u64::from(v);
        }
        Self::from_parents(&p2, &beta, &label)
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn is_type_one(&self, v: usize) -> bool {
        self.parent[v].is_none() || self.beta[v] == 1
    }

    /// Nearest strict ancestor of each vertex that is a root or has unit
    /// local time. `None` for roots.
    pub fn anchors(&self) -> Vec<Option<usize>> {
        let mut a = vec![None; self.len()];
        for v in 0..self.len() {
            if let Some(p) = self.parent[v] {
                a[v] = Some(if self.is_type_one(p) { p } else { a[p].expect("parent precedes child") });
            }
        }
        a
    }

    /// Position of each label in depth-first order.
    pub fn index_of_labels(&self) -> HashMap<u64, usize> {
        self.label.iter().enumerate().map(|(i, &l)| (l, i)).collect()
    }
}

/// `B^1_u`, the descendants of `u` with no unit-local-time vertex strictly
/// between, and `L^1_u`, those of them with unit local time. Both are in
/// lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptionalLine {
    pub anchor: usize,
    pub block: Vec<usize>,
    pub line: Vec<usize>,
}

pub fn optional_line(forest: &RangeForest, u: usize) -> OptionalLine {
    let mut block = Vec::new();
    let mut stack: Vec<usize> = forest.children[u].iter().rev().copied().collect();
    while let Some(v) = stack.pop() {
        block.push(v);
        if forest.beta[v] != 1 {
            stack.extend(forest.children[v].iter().rev());
        }
    }
    let line = block.iter().copied().filter(|&v| forest.beta[v] == 1).collect();
    OptionalLine { anchor: u, block, line }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexType {
    Zero = 0,
    One = 1,
}

/// A plane forest whose type-0 vertices are leaves and whose edges carry
/// integer lengths `ℓ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafedForest {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub roots: Vec<usize>,
    pub kind: Vec<VertexType>,
    /// Length of the edge to the parent; zero for roots.
    pub ell: Vec<u64>,
    /// The visited vertex each vertex stands for.
    pub source: Vec<usize>,
}

impl LeafedForest {
    fn empty() -> Self {
        LeafedForest {
            parent: Vec::new(),
            children: Vec::new(),
            roots: Vec::new(),
            kind: Vec::new(),
            ell: Vec::new(),
            source: Vec::new(),
        }
    }

    fn push(&mut self, parent: Option<usize>, kind: VertexType, ell: u64, source: usize) -> usize {
        let id = self.kind.len();
        self.parent.push(parent);
        self.children.push(Vec::new());
        self.kind.push(kind);
        self.ell.push(ell);
        self.source.push(source);
        match parent {
            Some(p) => self.children[p].push(id),
            None => self.roots.push(id),
        }
        id
    }

    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    /// Vertices in depth-first order.
    pub fn lex_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.children[v].iter().rev());
        }
        order
    }

    /// Sum of edge lengths from the root, per vertex.
    pub fn weighted_depths(&self) -> Vec<u64> {
        let mut d = vec![0; self.len()];
        for v in self.lex_order() {
            if let Some(p) = self.parent[v] {
                d[v] = d[p] + self.ell[v];
            }
        }
        d
    }

    /// Unweighted generation, per vertex.
    pub fn depths(&self) -> Vec<u64> {
        let mut d = vec![0; self.len()];
        for v in self.lex_order() {
            if let Some(p) = self.parent[v] {
                d[v] = d[p] + 1;
            }
        }
        d
    }

    /// The sub-forest of type-1 vertices.
    pub fn type_one_skeleton(&self) -> LeafedForest {
        let mut out = LeafedForest::empty();
        let mut map = vec![usize::MAX; self.len()];
        for v in self.lex_order() {
            if self.kind[v] == VertexType::One {
                let p = self.parent[v].map(|p| map[p]);
                map[v] = out.push(p, VertexType::One, self.ell[v], self.source[v]);
            }
        }
        out
    }

    /// Every type-0 vertex is a leaf and every parent is of type 1.
    pub fn is_well_formed(&self) -> bool {
        (0..self.len()).all(|v| {
            (self.kind[v] == VertexType::One || self.children[v].is_empty())
                && self.parent[v].is_none_or(|p| self.kind[p] == VertexType::One)
                && (self.parent[v].is_some() || self.kind[v] == VertexType::One)
        })
    }
}

/// `F^R`.
pub fn build_fr(forest: &RangeForest) -> LeafedForest {
    let anchors = forest.anchors();
    let mut out = LeafedForest::empty();
    let mut image = vec![usize::MAX; forest.len()];
    // depth-first order of F^R: a type-1 vertex is followed by its block,
    // recursively. Visit anchors first so their image exists.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); forest.len()];
    for (v, a) in anchors.iter().enumerate() {
        if let Some(a) = *a {
            members[a].push(v);
        }
    }
    let mut stack: Vec<usize> = forest.roots.iter().rev().copied().collect();
    while let Some(v) = stack.pop() {
        let (parent, ell) = match anchors[v] {
            Some(a) => (Some(image[a]), u64::from(forest.depth[v] - forest.depth[a])),
            None => (None, 0),
        };
        let kind = if forest.is_type_one(v) { VertexType::One } else { VertexType::Zero };
        image[v] = out.push(parent, kind, ell, v);
        if kind == VertexType::One {
            stack.extend(members[v].iter().rev());
        }
    }
    out
}

/// `F^X` from the walk positions, given as vertex indices of `forest`.
/// The local times must be final, so the walk must have left every tree it
/// visits (see [`WalkTrace::completed_prefix`]).
pub fn build_fx(forest: &RangeForest, positions: &[usize]) -> LeafedForest {
    let anchors = forest.anchors();
    let mut out = LeafedForest::empty();
    let mut image: Vec<Option<usize>> = vec![None; forest.len()];
    for &x in positions {
        if forest.is_type_one(x) {
            match image[x] {
                None => {
                    let (parent, ell) = match anchors[x] {
                        Some(a) => (image[a], u64::from(forest.depth[x] - forest.depth[a])),
                        None => (None, 0),
                    };
                    image[x] = Some(out.push(parent, VertexType::One, ell, x));
                }
                Some(me) => {
                    out.push(Some(me), VertexType::Zero, 0, x);
                }
            }
        } else {
            let a = anchors[x].expect("non-root vertex has an anchor");
            let ell = u64::from(forest.depth[x] - forest.depth[a]);
            out.push(image[a], VertexType::Zero, ell, x);
        }
    }
    out
}

/// Walk positions as vertex indices of `forest`.
pub fn positions(forest: &RangeForest, trace: &WalkTrace) -> Vec<usize> {
    let idx = forest.index_of_labels();
    trace
        .steps
        .iter()
        .filter(|&&x| x != ARTIFICIAL_PARENT)
        .map(|&x| idx[&u64::from(x)])
        .collect()
}

/// Outcome of the exact reduction identities on one forest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionCheck {
    /// The weighted height process of `F^R` is the height process of the
    /// visited forest.
    pub fr_heights: bool,
    /// The weighted height process of `F^X` is the height of the walk.
    pub fx_heights: bool,
    /// The type-1 skeletons of `F^X` and `F^R` agree once siblings are
    /// reordered by first visit.
    pub skeletons: bool,
}

impl ReductionCheck {
    pub fn all(&self) -> bool {
        self.fr_heights && self.fx_heights && self.skeletons
    }
}

pub fn check_reductions(forest: &RangeForest, pos: &[usize]) -> ReductionCheck {
    let fr = build_fr(forest);
    let fx = build_fx(forest, pos);

    let hr = fr.weighted_depths();
    let fr_heights = fr.len() == forest.len()
        && fr
            .lex_order()
            .iter()
            .enumerate()
            .all(|(n, &v)| hr[v] == u64::from(forest.depth[n]));

    let hx = fx.weighted_depths();
    let fx_heights = fx.len() == pos.len()
        && fx
            .lex_order()
            .iter()
            .zip(pos)
            .all(|(&v, &x)| hx[v] == u64::from(forest.depth[x]));

    let mut first = vec![usize::MAX; forest.len()];
    for (t, &x) in pos.iter().enumerate() {
        if first[x] == usize::MAX {
            first[x] = t;
        }
    }
    let (s_r, s_x) = (fr.type_one_skeleton(), fx.type_one_skeleton());
    let skeletons = s_r.len() == s_x.len() && {
        let mut reordered = s_r.clone();
        for c in reordered.children.iter_mut() {
            c.sort_by_key(|&v| first[s_r.source[v]]);
        }
        reordered.roots.sort_by_key(|&v| first[s_r.source[v]]);
        let (a, b) = (reordered.lex_order(), s_x.lex_order());
        a.iter().zip(&b).all(|(&u, &v)| {
            reordered.source[u] == s_x.source[v]
                && reordered.ell[u] == s_x.ell[v]
                && reordered.parent[u].map(|p| reordered.source[p])
                    == s_x.parent[v].map(|p| s_x.source[p])
        })
    };

    ReductionCheck {
        fr_heights,
        fx_heights,
        skeletons,
    }
}
