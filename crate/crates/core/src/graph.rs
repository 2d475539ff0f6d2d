//! Sparsity patterns for concentration matrices and chordal graph machinery.
//!
//! Vertices are `0..p` in the Rust API. The JSON form uses 1-based indices:
//! `{"p": 4, "edges": [[1, 2], [2, 3]]}`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default absolute tolerance for G-sparsity checks.
pub const G_SPARSE_TOL: f64 = 1e-9;

/// Undirected graph on `p` vertices. Diagonal entries are implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PatternJson", into = "PatternJson")]
pub struct SparsityPattern {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternJson {
    p: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<PatternJson> for SparsityPattern {
    type Error = Error;

    fn try_from(j: PatternJson) -> Result<Self> {
        let mut edges = Vec::with_capacity(j.edges.len());
        for [a, b] in j.edges {
            if a == 0 || b == 0 {
                return Err(Error::InvalidEdge(a, b));
            }
            edges.push((a - 1, b - 1));
        }
        SparsityPattern::from_edges(j.p, edges)
    }
}

impl From<SparsityPattern> for PatternJson {
    fn from(g: SparsityPattern) -> Self {
        PatternJson {
            p: g.p,
            edges: g.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        }
    }
}

impl SparsityPattern {
    /// Builds a pattern from unordered pairs. Duplicates and either
    /// orientation are accepted; self-loops and out-of-range indices are not.
    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidSize("pattern needs at least one vertex".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a >= p || b >= p {
                return Err(Error::InvalidEdge(a, b));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut adj = vec![Vec::new(); p];
        for &(i, j) in &set {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Ok(Self { p, edges: set, adj })
    }

    pub fn empty(p: usize) -> Self {
        Self::from_edges(p, std::iter::empty()).expect("p > 0")
    }

    pub fn complete(p: usize) -> Self {
        Self::from_edges(p, (0..p).flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))).expect("p > 0")
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Diagonal entries are always allowed.
    pub fn allows(&self, a: usize, b: usize) -> bool {
        a == b || self.has_edge(a, b)
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.p * (self.p - 1) / 2
    }

    /// Pairs `(i, j)`, `i < j`, that are not edges.
    pub fn complement_edges(&self) -> Vec<(usize, usize)> {
        (0..self.p)
            .flat_map(|i| ((i + 1)..self.p).map(move |j| (i, j)))
            .filter(|&(i, j)| !self.has_edge(i, j))
            .collect()
    }

    /// Neighbors of `j` with a larger index: the free sub-diagonal rows of
    /// column `j` of a G-sparse lower-triangular factor.
    pub fn later_neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[j].iter().copied().filter(move |&k| k > j)
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// `(i, j) ∈ E` iff `0 < |i − j| < d`.
pub fn banded_pattern(p: usize, d: usize) -> Result<SparsityPattern> {
    if p == 0 || d == 0 || d > p {
        return Err(Error::InvalidBandwidth { p, d });
    }
    SparsityPattern::from_edges(p, (0..p).flat_map(|i| ((i + 1)..p.min(i + d)).map(move |j| (i, j))))
}

/// Two-dimensional grid, vertices numbered row-major.
pub fn grid_pattern(rows: usize, cols: usize) -> Result<SparsityPattern> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidSize(format!("grid {rows}x{cols} needs at least 2x2")));
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    SparsityPattern::from_edges(rows * cols, edges)
}

/// A permutation of `0..p`; position `k` holds the vertex eliminated k-th.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationOrder {
    order: Vec<usize>,
}

impl EliminationOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let p = order.len();
        let mut seen = vec![false; p];
        for &v in &order {
            if v >= p || seen[v] {
                return Err(Error::InvalidPermutation(p));
            }
            seen[v] = true;
        }
        Ok(Self { order })
    }

    pub fn natural(p: usize) -> Self {
        Self {
            order: (0..p).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn is_natural(&self) -> bool {
        self.order.iter().enumerate().all(|(k, &v)| k == v)
    }

    /// `position[v]` is where vertex `v` sits in the order.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (k, &v) in self.order.iter().enumerate() {
            pos[v] = k;
        }
        pos
    }

    pub fn inverse(&self) -> Self {
        Self {
            order: self.positions(),
        }
    }

    /// Reorders columns so that column `k` of the result is column
    /// `order[k]` of the input.
    pub fn permute_columns<T: Real>(&self, m: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, k| m[(i, self.order[k])])
    }

    /// `P M Pᵀ` with `P` the permutation: entry `(k, l)` is `M[order[k], order[l]]`.
    pub fn permute_symmetric<T: Real>(&self, m: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |k, l| m[(self.order[k], self.order[l])])
    }

    /// Undoes [`permute_symmetric`](Self::permute_symmetric).
    pub fn unpermute_symmetric<T: Real>(&self, m: &DMatrix<T>) -> DMatrix<T> {
        self.inverse().permute_symmetric(m)
    }
}

/// True iff, for every vertex, its neighbors later in `order` form a clique.
pub fn is_perfect_elimination_order(g: &SparsityPattern, order: &EliminationOrder) -> bool {
    if order.len() != g.p() {
        return false;
    }
    let pos = order.positions();
    order.as_slice().iter().all(|&v| {
        let later: Vec<usize> = g.neighbors(v).iter().copied().filter(|&u| pos[u] > pos[v]).collect();
        later
            .iter()
            .enumerate()
            .all(|(a, &x)| later[a + 1..].iter().all(|&y| g.has_edge(x, y)))
    })
}

/// Maximum cardinality search (ties to the lowest vertex index) proposes an
/// order; the reverse visit order is then verified explicitly. Returns
/// `None` when the graph is not chordal.
pub fn find_perfect_elimination_order(g: &SparsityPattern) -> Option<EliminationOrder> {
    let p = g.p();
    let mut weight = vec![0usize; p];
    let mut visited = vec![false; p];
    let mut visit = Vec::with_capacity(p);
    for _ in 0..p {
        let v = (0..p)
            .filter(|&v| !visited[v])
            .max_by(|&a, &b| weight[a].cmp(&weight[b]).then(b.cmp(&a)))
            .expect("unvisited vertex remains");
        visited[v] = true;
        visit.push(v);
        for &u in g.neighbors(v) {
            if !visited[u] {
                weight[u] += 1;
            }
        }
    }
    visit.reverse();
    let order = EliminationOrder { order: visit };
    is_perfect_elimination_order(g, &order).then_some(order)
}

pub fn is_chordal(g: &SparsityPattern) -> bool {
    find_perfect_elimination_order(g).is_some()
}

/// Relabels vertices so that `order` becomes the natural order.
pub fn permute_pattern(g: &SparsityPattern, order: &EliminationOrder) -> Result<SparsityPattern> {
    if order.len() != g.p() {
        return Err(Error::InvalidPermutation(g.p()));
    }
    let pos = order.positions();
    SparsityPattern::from_edges(g.p(), g.edges().map(|(i, j)| (pos[i], pos[j])))
}

/// True iff `|M[i][j]| ≤ tol` for every off-diagonal `(i, j) ∉ E`.
pub fn is_g_sparse<T: Real>(m: &DMatrix<T>, g: &SparsityPattern, tol: T) -> Result<bool> {
    if m.nrows() != g.p() || m.ncols() != g.p() {
        return Err(Error::DimensionMismatch {
            expected: g.p(),
            got: m.nrows(),
        });
    }
    let p = g.p();
    for i in 0..p {
        for j in 0..p {
            if i != j && !g.has_edge(i, j) && m[(i, j)].abs() > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_examples() {
        assert_eq!(banded_pattern(3, 1).unwrap().num_edges(), 0);
        assert!(banded_pattern(4, 4).unwrap().is_complete());
        let g = banded_pattern(10, 4).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let d = usize::abs_diff(i, j);
                assert_eq!(g.has_edge(i, j), d > 0 && d <= 3, "({i},{j})");
            }
        }
        assert!(matches!(banded_pattern(3, 0), Err(Error::InvalidBandwidth { .. })));
        assert!(matches!(banded_pattern(3, 4), Err(Error::InvalidBandwidth { .. })));
    }

    #[test]
    fn grid_examples() {
        let g = grid_pattern(2, 2).unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(grid_pattern(3, 3).unwrap().num_edges(), 12);
        assert!(grid_pattern(1, 5).is_err());
    }

    #[test]
    fn grid_complement_matches_published_pair_list() {
        // 1-based pairs printed for the 3x3 grid experiment
        let listed = [
            (3, 1), (5, 1), (6, 1), (7, 1), (8, 1), (9, 1), (4, 2), (6, 2), (7, 2), (8, 2), (9, 2),
            (4, 3), (5, 3), (7, 3), (8, 3), (9, 3), (6, 4), (8, 4), (9, 4), (7, 5), (9, 5), (7, 6),
            (8, 6), (9, 7),
        ];
        let mut expected: Vec<(usize, usize)> =
            listed.iter().map(|&(a, b): &(usize, usize)| (b.min(a) - 1, a.max(b) - 1)).collect();
        expected.sort_unstable();
        assert_eq!(grid_pattern(3, 3).unwrap().complement_edges(), expected);
    }

    #[test]
    fn chordality() {
        for p in 1..12 {
            for d in 1..=p {
                let g = banded_pattern(p, d).unwrap();
                assert!(is_perfect_elimination_order(&g, &EliminationOrder::natural(p)));
                assert!(find_perfect_elimination_order(&g).is_some());
            }
        }
        let cycle = SparsityPattern::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        assert!(find_perfect_elimination_order(&cycle).is_none());
        assert!(find_perfect_elimination_order(&grid_pattern(3, 3).unwrap()).is_none());
        let chorded = SparsityPattern::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
        let order = find_perfect_elimination_order(&chorded).unwrap();
        assert!(is_perfect_elimination_order(&chorded, &order));
    }

    #[test]
    fn order_is_deterministic_and_valid_on_shuffled_chordal_graph() {
        // a banded graph under a fixed relabeling is chordal, but the natural
        // order need not be perfect
        let base = banded_pattern(8, 3).unwrap();
        let shuffle = EliminationOrder::new(vec![3, 7, 0, 5, 1, 6, 2, 4]).unwrap();
        let g = permute_pattern(&base, &shuffle).unwrap();
        let a = find_perfect_elimination_order(&g).unwrap();
        let b = find_perfect_elimination_order(&g).unwrap();
        assert_eq!(a, b);
        let relabeled = permute_pattern(&g, &a).unwrap();
        assert!(is_perfect_elimination_order(&relabeled, &EliminationOrder::natural(8)));
    }

    #[test]
    fn permutation_examples() {
        let g = banded_pattern(7, 3).unwrap();
        assert_eq!(permute_pattern(&g, &EliminationOrder::natural(7)).unwrap(), g);
        let rev = EliminationOrder::new((0..7).rev().collect()).unwrap();
        assert_eq!(permute_pattern(&g, &rev).unwrap(), g);
        let ord = EliminationOrder::new(vec![2, 0, 6, 1, 5, 3, 4]).unwrap();
        let there = permute_pattern(&g, &ord).unwrap();
        assert_eq!(permute_pattern(&there, &ord.inverse()).unwrap(), g);
        assert!(EliminationOrder::new(vec![0, 0, 1]).is_err());
        assert!(EliminationOrder::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn g_sparsity() {
        let g = banded_pattern(4, 2).unwrap();
        assert!(is_g_sparse(&DMatrix::<f64>::identity(4, 4), &g, 0.0).unwrap());
        let full = DMatrix::<f64>::from_element(4, 4, 1.0);
        assert!(!is_g_sparse(&full, &SparsityPattern::empty(4), 0.0).unwrap());
        assert!(is_g_sparse(&full, &SparsityPattern::complete(4), 0.0).unwrap());
        assert!(is_g_sparse(&DMatrix::<f64>::identity(3, 3), &g, 0.0).is_err());
    }

    #[test]
    fn json_is_one_based() {
        let g = banded_pattern(3, 2).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"p":3,"edges":[[1,2],[2,3]]}"#);
        let back: SparsityPattern = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<SparsityPattern>(r#"{"p":3,"edges":[[0,1]]}"#).is_err());
        assert!(serde_json::from_str::<SparsityPattern>(r#"{"p":3,"edges":[[1,4]]}"#).is_err());
        assert!(serde_json::from_str::<SparsityPattern>(r#"{"p":3,"edges":[],"x":1}"#).is_err());
    }

    #[test]
    fn data_permutation_round_trip() {
        let m = DMatrix::<f64>::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        let ord = EliminationOrder::new(vec![2, 0, 1]).unwrap();
        let pm = ord.permute_symmetric(&m);
        assert_eq!(pm[(0, 0)], m[(2, 2)]);
        assert_eq!(pm[(0, 1)], m[(2, 0)]);
        assert_eq!(ord.unpermute_symmetric(&pm), m);
        let cols = ord.permute_columns(&m);
        assert_eq!(cols.column(0), m.column(2));
    }
}
