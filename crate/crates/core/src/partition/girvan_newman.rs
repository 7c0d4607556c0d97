//! Girvan–Newman divisive clustering.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{modularity, Partition};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// When to stop removing edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GnTarget {
    /// Best modularity over every intermediate partition (earliest on ties).
    MaxModularity,
    /// First partition with at least this many components.
    Components(usize),
    /// First partition with more components than the input graph.
    FirstSplit,
}

impl fmt::Display for GnTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GnTarget::MaxModularity => write!(f, "max-modularity"),
            GnTarget::Components(k) => write!(f, "k={k}"),
            GnTarget::FirstSplit => write!(f, "first-split"),
        }
    }
}

impl FromStr for GnTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-modularity" => Ok(GnTarget::MaxModularity),
            "first-split" => Ok(GnTarget::FirstSplit),
            _ => {
                let k = s
                    .strip_prefix("k=")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::Parameter(format!("unknown girvan-newman target `{s}`")))?;
                Ok(GnTarget::Components(k))
            }
        }
    }
}

/// Edge betweenness by Brandes accumulation. Each unordered source/target
/// pair is counted once. Score `i` belongs to `edges[i]`.
pub fn edge_betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, e));
        adj[v].push((u, e));
    }
    let mut score = vec![0.0; edges.len()];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut stack = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        sigma.iter_mut().for_each(|x| *x = 0.0);
        dist.iter_mut().for_each(|x| *x = usize::MAX);
        delta.iter_mut().for_each(|x| *x = 0.0);
        stack.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &(w, _) in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &(v, e) in &adj[w] {
                if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                    let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                    score[e] += c;
                    delta[v] += c;
                }
            }
        }
    }
    score.iter_mut().for_each(|x| *x /= 2.0);
    score
}

fn components(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, usize) {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut label = vec![usize::MAX; n];
    let mut k = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = k;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = k;
                    stack.push(w);
                }
            }
        }
        k += 1;
    }
    (label, k)
}

pub fn girvan_newman(g: &Graph, target: GnTarget) -> Partition {
    let n = g.num_nodes();
    // Edges still present, kept in original order.
    let mut alive: Vec<(usize, usize)> = g.edges().to_vec();
    let (labels, k0) = components(n, g.edges());
    let start = Partition::from_assignment(g, &labels).expect("sizes agree");
    let done = |k: usize| match target {
        GnTarget::Components(want) => k >= want,
        GnTarget::FirstSplit => k > k0,
        GnTarget::MaxModularity => false,
    };
    if done(k0) {
        return start;
    }
    let mut best_q = modularity(g, &start);
    let mut best = start;
    let mut k = k0;
    while !alive.is_empty() {
        let bc = edge_betweenness(n, &alive);
        let top = bc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * top.abs().max(1.0);
        let pick = bc.iter().position(|&b| b >= top - tol).expect("non-empty");
        alive.remove(pick);
        let (labels, kc) = components(n, &alive);
        if kc == k {
            continue;
        }
        k = kc;
        let p = Partition::from_assignment(g, &labels).expect("sizes agree");
        if done(k) || alive.is_empty() && target != GnTarget::MaxModularity {
            return p;
        }
        let q = modularity(g, &p);
        if q > best_q + 1e-12 {
            best_q = q;
            best = p;
        }
    }
    best
}
