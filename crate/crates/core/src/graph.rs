//! Native and semantic graphs over a sample set, and exact minimum spanning
//! trees.
//!
//! Edges are compared by the key `(w, i, j)` with `i < j`, weights ordered by
//! `f64::total_cmp`. That key is a strict total order, so the MST it induces
//! is unique: Prim over implicit distances and Kruskal over a materialized
//! edge list return the same edge set.

use std::cmp::Ordering;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{cmp_f64, SampleSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("lambda must be finite and > 0, got {0}")]
    InvalidLambda(f64),
    #[error("edge ({i}, {j}) is not in canonical form for {n} nodes")]
    InvalidEdge { i: usize, j: usize, n: usize },
    #[error("edge ({i}, {j}) has invalid weight {w}")]
    InvalidWeight { i: usize, j: usize, w: f64 },
    #[error("graph is disconnected: {components} components")]
    Disconnected { components: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GraphKind {
    Native,
    Semantic { lambda: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

impl Edge {
    fn key_cmp(&self, other: &Edge) -> Ordering {
        cmp_f64(self.w, other.w)
            .then(self.i.cmp(&other.i))
            .then(self.j.cmp(&other.j))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<Edge>,
    pub kind: GraphKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanningTree {
    /// Tree edges sorted by `(i, j)`.
    pub edges: Vec<Edge>,
    pub total_weight: f64,
}

impl SpanningTree {
    fn from_edges(mut edges: Vec<Edge>) -> Self {
        edges.sort_by_key(|e| (e.i, e.j));
        let total_weight = edges.iter().map(|e| e.w).sum();
        SpanningTree {
            edges,
            total_weight,
        }
    }

    /// Writes one `i j w` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.edges {
            writeln!(out, "{} {} {:.17e}", e.i, e.j, e.w)?;
        }
        Ok(())
    }
}

/// Euclidean distance, summed over components in ascending index order.
#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        acc += d * d;
    }
    acc.sqrt()
}

/// Weight rule of the semantic graph: 0 within a class, `min(d, lambda)` across.
#[inline]
pub fn semantic_weight(same_class: bool, distance: f64, lambda: f64) -> f64 {
    if same_class {
        0.0
    } else {
        distance.min(lambda)
    }
}

fn check_lambda(lambda: f64) -> Result<(), GraphError> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(GraphError::InvalidLambda(lambda))
    }
}

fn complete_graph<F: Fn(usize, usize) -> f64>(n: usize, kind: GraphKind, weight: F) -> EdgeList {
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push(Edge { i, j, w: weight(i, j) });
        }
    }
    EdgeList { n, edges, kind }
}

pub fn build_native_graph(set: &SampleSet) -> Result<EdgeList, GraphError> {
    if set.len() < 2 {
        return Err(GraphError::TooFewPoints(set.len()));
    }
    let pts = &set.points;
    Ok(complete_graph(set.len(), GraphKind::Native, |i, j| {
        euclidean(&pts[i].features, &pts[j].features)
    }))
}

pub fn build_semantic_graph(set: &SampleSet, lambda: f64) -> Result<EdgeList, GraphError> {
    check_lambda(lambda)?;
    if set.len() < 2 {
        return Err(GraphError::TooFewPoints(set.len()));
    }
    let pts = &set.points;
    Ok(complete_graph(set.len(), GraphKind::Semantic { lambda }, |i, j| {
        semantic_weight(
            pts[i].label == pts[j].label,
            euclidean(&pts[i].features, &pts[j].features),
            lambda,
        )
    }))
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Exact MST of an explicit edge list (sort-based Kruskal).
pub fn minimum_spanning_tree(g: &EdgeList) -> Result<SpanningTree, GraphError> {
    for e in &g.edges {
        if e.i >= e.j || e.j >= g.n {
            return Err(GraphError::InvalidEdge {
                i: e.i,
                j: e.j,
                n: g.n,
            });
        }
        if !e.w.is_finite() || e.w < 0.0 {
            return Err(GraphError::InvalidWeight {
                i: e.i,
                j: e.j,
                w: e.w,
            });
        }
    }
    let mut order: Vec<Edge> = g.edges.clone();
    order.sort_by(Edge::key_cmp);

    let mut dsu = DisjointSet::new(g.n);
    let mut tree = Vec::with_capacity(g.n.saturating_sub(1));
    for e in order {
        if dsu.union(e.i, e.j) {
            tree.push(e);
            if tree.len() + 1 == g.n {
                break;
            }
        }
    }
    if g.n > 0 && tree.len() + 1 != g.n {
        return Err(GraphError::Disconnected {
            components: g.n - tree.len(),
        });
    }
    Ok(SpanningTree::from_edges(tree))
}

/// Exact MST of the complete graph on `n` nodes whose weights are given by
/// `weight(i, j)` (symmetric, finite, non-negative). Dense Prim, O(n^2) weight
/// evaluations and O(n) memory.
pub fn dense_mst<F: Fn(usize, usize) -> f64>(n: usize, weight: F) -> SpanningTree {
    if n < 2 {
        return SpanningTree::from_edges(Vec::new());
    }
    let canon = |a: usize, b: usize, w: f64| {
        if a < b {
            Edge { i: a, j: b, w }
        } else {
            Edge { i: b, j: a, w }
        }
    };
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    // slot 0 is never read: node 0 starts in the tree
    let mut best: Vec<Edge> = (0..n)
        .map(|v| if v == 0 { canon(0, 0, 0.0) } else { canon(0, v, weight(0, v)) })
        .collect();
    let mut tree = Vec::with_capacity(n - 1);

    for _ in 1..n {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            pick = match pick {
                Some(p) if best[p].key_cmp(&best[v]) != Ordering::Greater => Some(p),
                _ => Some(v),
            };
        }
        let v = pick.expect("non-tree node remains");
        in_tree[v] = true;
        tree.push(best[v]);
        for u in 0..n {
            if in_tree[u] {
                continue;
            }
            let cand = canon(v, u, weight(v, u));
            if cand.key_cmp(&best[u]) == Ordering::Less {
                best[u] = cand;
            }
        }
    }
    SpanningTree::from_edges(tree)
}

/// MST of the native (Euclidean) complete graph without materializing edges.
pub fn native_mst(set: &SampleSet) -> Result<SpanningTree, GraphError> {
    if set.len() < 2 {
        return Err(GraphError::TooFewPoints(set.len()));
    }
    let pts = &set.points;
    Ok(dense_mst(set.len(), |i, j| {
        euclidean(&pts[i].features, &pts[j].features)
    }))
}

/// MST of the semantic complete graph without materializing edges.
pub fn semantic_mst(set: &SampleSet, lambda: f64) -> Result<SpanningTree, GraphError> {
    check_lambda(lambda)?;
    if set.len() < 2 {
        return Err(GraphError::TooFewPoints(set.len()));
    }
    let pts = &set.points;
    Ok(dense_mst(set.len(), |i, j| {
        if pts[i].label == pts[j].label {
            0.0
        } else {
            euclidean(&pts[i].features, &pts[j].features).min(lambda)
        }
    }))
}

/// Per-dimension z-scoring over the set. Constant dimensions are centred only.
pub fn standardize(set: &SampleSet) -> SampleSet {
    let n = set.len() as f64;
    let dim = set.feature_dim;
    let mut mean = vec![0.0; dim];
    for p in &set.points {
        for (m, v) in mean.iter_mut().zip(&p.features) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for p in &set.points {
        for k in 0..dim {
            let d = p.features[k] - mean[k];
            var[k] += d * d;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 0.0 {
                1.0 / sd
            } else {
                1.0
            }
        })
        .collect();
    let mut out = set.clone();
    for p in &mut out.points {
        for k in 0..dim {
            p.features[k] = (p.features[k] - mean[k]) * scale[k];
        }
    }
    out
}
