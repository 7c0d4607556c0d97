//! Seeded two-class corpora for desk-scale experiments.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Graph};
use crate::error::{Error, Result};

pub const CLIQUE_SIZE: usize = 5;
const SWAPS_PER_EDGE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Class 1 carries a planted 5-clique; class 0 is the same kind of graph
    /// rewired by degree-preserving swaps until it is clique-free and connected.
    MotifVsRandom,
    /// Class 1 is a unicyclic graph (one planted cycle with trees attached);
    /// class 0 is a random tree.
    CyclesVsPaths,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::MotifVsRandom => "motif-vs-random",
            SyntheticKind::CyclesVsPaths => "cycles-vs-paths",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "motif-vs-random" | "motif" => Ok(Self::MotifVsRandom),
            "cycles-vs-paths" | "cycles" => Ok(Self::CyclesVsPaths),
            other => Err(Error::Parameter(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

pub fn make_synthetic(kind: SyntheticKind, n_graphs: usize, n_nodes: usize, seed: u64) -> Result<Dataset> {
    if n_graphs == 0 || !n_graphs.is_multiple_of(2) {
        return Err(Error::Parameter(format!("n_graphs must be even and positive, got {n_graphs}")));
    }
    if n_nodes < 6 {
        return Err(Error::Parameter(format!("n_nodes must be >= 6, got {n_nodes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n_graphs).map(|i| i % 2).collect();
    labels.shuffle(&mut rng);
    let graphs = labels
        .iter()
        .map(|&y| {
            let edges = match (kind, y) {
                (SyntheticKind::MotifVsRandom, 1) => clique_graph(n_nodes, &mut rng),
                (SyntheticKind::MotifVsRandom, _) => clique_free_graph(n_nodes, &mut rng),
                (SyntheticKind::CyclesVsPaths, 1) => unicyclic_graph(n_nodes, &mut rng),
                (SyntheticKind::CyclesVsPaths, _) => random_tree(n_nodes, &mut rng),
            };
            Graph::unattributed(n_nodes, edges, Some(y))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(format!("synthetic-{kind}"), graphs, 2)
}

/// Edge budget shared by both motif classes.
fn motif_edge_count(n: usize) -> usize {
    (3 * n) / 2
}

fn add_tree(n: usize, edges: &mut BTreeSet<(usize, usize)>, rng: &mut impl Rng) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for i in 1..n {
        let (a, b) = (order[i], order[rng.gen_range(0..i)]);
        edges.insert((a.min(b), a.max(b)));
    }
}

fn fill_random(n: usize, target: usize, edges: &mut BTreeSet<(usize, usize)>, rng: &mut impl Rng) {
    while edges.len() < target {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
}

fn clique_graph(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = BTreeSet::new();
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let clique = &nodes[..CLIQUE_SIZE];
    for i in 0..CLIQUE_SIZE {
        for j in i + 1..CLIQUE_SIZE {
            let (a, b) = (clique[i], clique[j]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    add_tree(n, &mut edges, rng);
    let target = motif_edge_count(n).max(edges.len());
    fill_random(n, target, &mut edges, rng);
    edges.into_iter().collect()
}

/// Degree-preserving rewiring of a planted-clique graph until no clique of
/// that size remains and the graph is connected.
fn clique_free_graph(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    loop {
        let mut edges: Vec<(usize, usize)> = clique_graph(n, rng);
        let mut present: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
        let m = edges.len();
        for _ in 0..SWAPS_PER_EDGE * m {
            let (i, j) = (rng.gen_range(0..m), rng.gen_range(0..m));
            let ((a, b), (c, d)) = (edges[i], edges[j]);
            let (c, d) = if rng.gen_bool(0.5) { (c, d) } else { (d, c) };
            if a == d || c == b || a == c || b == d {
                continue;
            }
            let (e1, e2) = ((a.min(d), a.max(d)), (c.min(b), c.max(b)));
            if present.contains(&e1) || present.contains(&e2) {
                continue;
            }
            present.remove(&edges[i]);
            present.remove(&edges[j]);
            present.insert(e1);
            present.insert(e2);
            edges[i] = e1;
            edges[j] = e2;
        }
        let edges: Vec<_> = present.into_iter().collect();
        if !has_clique(n, &edges, CLIQUE_SIZE) && is_connected(n, &edges) {
            return edges;
        }
    }
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn random_tree(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = BTreeSet::new();
    add_tree(n, &mut edges, rng);
    edges.into_iter().collect()
}

fn unicyclic_graph(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let cycle = (n / 3).max(3);
    let mut edges = BTreeSet::new();
    for i in 0..cycle {
        let (a, b) = (order[i], order[(i + 1) % cycle]);
        edges.insert((a.min(b), a.max(b)));
    }
    for i in cycle..n {
        let (a, b) = (order[i], order[rng.gen_range(0..i)]);
        edges.insert((a.min(b), a.max(b)));
    }
    edges.into_iter().collect()
}

/// Branch-and-bound clique search over neighbour bitsets (n ≤ 128).
pub(crate) fn has_clique(n: usize, edges: &[(usize, usize)], size: usize) -> bool {
    assert!(n <= 128, "has_clique supports at most 128 nodes");
    let mut nbr = vec![0u128; n];
    for &(u, v) in edges {
        nbr[u] |= 1 << v;
        nbr[v] |= 1 << u;
    }
    fn grow(nbr: &[u128], cand: u128, depth: usize) -> bool {
        if depth == 0 {
            return true;
        }
        if (cand.count_ones() as usize) < depth {
            return false;
        }
        let mut rest = cand;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if grow(nbr, rest & nbr[v], depth - 1) {
                return true;
            }
        }
        false
    }
    let all = if n == 128 { u128::MAX } else { (1u128 << n) - 1 };
    grow(&nbr, all, size)
}
