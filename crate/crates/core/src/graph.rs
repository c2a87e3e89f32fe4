//! Empirical graph: an undirected, positively weighted graph whose nodes carry
//! local datasets. Edges are stored once, canonically as `(i, j)` with `i < j`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: NodeId,
    pub j: NodeId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalGraph {
    node_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, f64)>>,
}

impl EmpiricalGraph {
    /// Builds a graph from `(i, j, weight)` triples. Endpoints may be given in
    /// either order; they are stored with `i < j` and sorted.
    pub fn new<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId, f64)>,
    {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut canonical = Vec::new();
        for (a, b, weight) in edges {
            for node in [a, b] {
                if node >= node_count {
                    return Err(Error::InvalidNode { node, node_count });
                }
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has non-positive or non-finite weight {weight}"
                )));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((i, j)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            canonical.push(Edge { i, j, weight });
        }
        canonical.sort_by_key(|e| (e.i, e.j));

        let mut adjacency = vec![Vec::new(); node_count];
        for e in &canonical {
            adjacency[e.i].push((e.j, e.weight));
            adjacency[e.j].push((e.i, e.weight));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(k, _)| k);
        }

        Ok(Self {
            node_count,
            edges: canonical,
            adjacency,
        })
    }

    pub fn edgeless(node_count: usize) -> Result<Self> {
        Self::new(node_count, std::iter::empty())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbours of `i` with their edge weights, ascending by node id.
    pub fn neighbours(&self, i: NodeId) -> Result<&[(NodeId, f64)]> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::InvalidNode {
                node: i,
                node_count: self.node_count,
            })
    }

    pub fn degree(&self, i: NodeId) -> Result<f64> {
        Ok(self.neighbours(i)?.iter().map(|&(_, w)| w).sum())
    }

    /// Weighted Laplacian `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.node_count;
        let mut l = DMatrix::zeros(n, n);
        for e in &self.edges {
            l[(e.i, e.j)] -= e.weight;
            l[(e.j, e.i)] -= e.weight;
            l[(e.i, e.i)] += e.weight;
            l[(e.j, e.j)] += e.weight;
        }
        l
    }

    /// Component labels, numbered in order of each component's smallest node.
    pub fn connected_components(&self) -> ClusterAssignment {
        let n = self.node_count;
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        ClusterAssignment {
            cluster_of: label,
            cluster_count: next,
        }
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[NodeId]) -> Result<Self> {
        check_permutation(perm, self.node_count)?;
        Self::new(
            self.node_count,
            self.edges.iter().map(|e| (perm[e.i], perm[e.j], e.weight)),
        )
    }

    pub fn to_json(&self) -> String {
        let mut out = format!("{{\"n\": {}, \"edges\": [", self.node_count);
        for (k, e) in self.edges.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            // serde_json renders f64 in shortest round-trip form
            let w = serde_json::to_string(&e.weight).expect("finite weight");
            out.push_str(&format!("\n  [{}, {}, {}]", e.i, e.j, w));
        }
        if !self.edges.is_empty() {
            out.push('\n');
        }
        out.push_str("]}\n");
        out
    }

    /// Parses the graph file format. Edges must be written with `i < j`;
    /// errors carry the line of the offending edge.
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct GraphFile {
            n: usize,
            edges: Vec<(usize, usize, f64)>,
        }
        let file: GraphFile = serde_json::from_str(text)
            .map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
        if file.n == 0 {
            return Err(Error::parse(path, 1, "graph must have at least one node"));
        }

        let mut seen = BTreeSet::new();
        for (k, &(i, j, w)) in file.edges.iter().enumerate() {
            let problem = if i >= file.n || j >= file.n {
                Some(format!("edge {k}: node id out of range [0, {})", file.n))
            } else if i >= j {
                Some(format!("edge {k}: endpoints must satisfy i < j, got ({i}, {j})"))
            } else if !(w.is_finite() && w > 0.0) {
                Some(format!("edge {k}: weight must be positive, got {w}"))
            } else if !seen.insert((i, j)) {
                Some(format!("edge {k}: duplicate edge ({i}, {j})"))
            } else {
                None
            };
            if let Some(message) = problem {
                let line = edge_line(text, k).unwrap_or(1);
                return Err(Error::parse(path, line, message));
            }
        }
        Self::new(file.n, file.edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// 1-based line on which the `k`-th entry of the `"edges"` array opens.
fn edge_line(text: &str, k: usize) -> Option<u64> {
    let start = text.find("\"edges\"")?;
    let mut line = 1 + text[..start].matches('\n').count() as u64;
    let mut depth = 0usize;
    let mut index = 0usize;
    for ch in text[start..].chars() {
        match ch {
            '\n' => line += 1,
            '[' => {
                depth += 1;
                if depth == 2 {
                    if index == k {
                        return Some(line);
                    }
                    index += 1;
                }
            }
            ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return None;
                }
            }
            _ => {}
        }
    }
    None
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: perm.len(),
        });
    }
    let mut hit = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut hit[p], true) {
            return Err(Error::Parameter("not a permutation".into()));
        }
    }
    Ok(())
}

/// Node-to-cluster map with contiguous cluster ids starting at 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ClusterAssignment {
    cluster_of: Vec<usize>,
    cluster_count: usize,
}

impl ClusterAssignment {
    pub fn new(cluster_of: Vec<usize>) -> Result<Self> {
        let cluster_count = cluster_of.iter().map(|&c| c + 1).max().unwrap_or(0);
        let mut used = vec![false; cluster_count];
        for &c in &cluster_of {
            used[c] = true;
        }
        if let Some(gap) = used.iter().position(|&u| !u) {
            return Err(Error::Parameter(format!(
                "cluster ids must be contiguous from 0; id {gap} is unused"
            )));
        }
        Ok(Self {
            cluster_of,
            cluster_count,
        })
    }

    /// Splits `n` nodes into `k` contiguous, near-equal index ranges; the first
    /// `n % k` clusters get one extra node.
    pub fn contiguous(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Parameter(format!(
                "cluster count must satisfy 1 <= k <= n, got k = {k}, n = {n}"
            )));
        }
        let base = n / k;
        let extra = n % k;
        let cluster_of = (0..k)
            .flat_map(|c| std::iter::repeat_n(c, base + usize::from(c < extra)))
            .collect();
        Ok(Self {
            cluster_of,
            cluster_count: k,
        })
    }

    pub fn cluster_of(&self, node: NodeId) -> usize {
        self.cluster_of[node]
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_count
    }

    pub fn len(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_of.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.cluster_of
    }
}

impl TryFrom<Vec<usize>> for ClusterAssignment {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClusterAssignment> for Vec<usize> {
    fn from(c: ClusterAssignment) -> Self {
        c.cluster_of
    }
}

/// Stochastic block model with contiguous clusters and one shared edge weight.
/// Pairs `(i, j)`, `i < j`, are visited in lexicographic order and each draws
/// one Bernoulli variable from a ChaCha8 stream seeded with `seed`.
pub fn generate_sbm(
    n: usize,
    k: usize,
    p_in: f64,
    p_out: f64,
    weight: f64,
    seed: u64,
) -> Result<(EmpiricalGraph, ClusterAssignment)> {
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::Parameter(format!("edge weight must be positive, got {weight}")));
    }
    let clusters = ClusterAssignment::contiguous(n, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if clusters.cluster_of(i) == clusters.cluster_of(j) {
                p_in
            } else {
                p_out
            };
            if rng.random_bool(p) {
                edges.push((i, j, weight));
            }
        }
    }
    Ok((EmpiricalGraph::new(n, edges)?, clusters))
}
