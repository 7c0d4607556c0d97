//! Attributed graphs, datasets and batching.

mod batch;
mod synthetic;
mod tudataset;

pub use batch::{batch_indices, Batch, BatchIter};
pub use synthetic::{make_synthetic, SyntheticKind};
pub use tudataset::{load_tudataset, load_tudataset_with, write_tudataset, FeaturelessMode, LoadOptions};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Undirected attributed graph. Edges are stored once as `(u, v)` with `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    features: Tensor,
    edges: Vec<(usize, usize)>,
    label: Option<usize>,
}

impl Graph {
    /// Canonicalises `edges`: orients each pair low→high, drops self-loops
    /// and duplicates, and sorts.
    pub fn new(features: Tensor, edges: impl IntoIterator<Item = (usize, usize)>, label: Option<usize>) -> Result<Self> {
        if features.rank() != 2 {
            return Err(Error::Contract(format!("node features must be N×d, got {:?}", features.shape())));
        }
        let num_nodes = features.rows();
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::Contract(format!("edge ({a},{b}) out of range for {num_nodes} nodes")));
            }
            if a != b {
                canon.push((a.min(b), a.max(b)));
            }
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self {
            num_nodes,
            features,
            edges: canon,
            label,
        })
    }

    /// Graph with a constant scalar feature of 1.0 per node.
    pub fn unattributed(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>, label: Option<usize>) -> Result<Self> {
        Self::new(Tensor::full(&[num_nodes, 1], 1.0), edges, label)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.rank() != 2 || features.rows() != self.num_nodes {
            return Err(Error::dim("with_features", features.shape(), &[self.num_nodes]));
        }
        self.features = features;
        Ok(self)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::dim("permuted", &[perm.len()], &[self.num_nodes]));
        }
        let d = self.feature_dim();
        let mut feats = vec![0.0; self.num_nodes * d];
        for (i, &p) in perm.iter().enumerate() {
            feats[p * d..(p + 1) * d].copy_from_slice(self.features.row(i));
        }
        Self::new(
            Tensor::matrix(self.num_nodes, d, feats)?,
            self.edges.iter().map(|&(u, v)| (perm[u], perm[v])),
            self.label,
        )
    }
}

/// A labelled graph corpus with a shared feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    graphs: Vec<Graph>,
    feature_dim: usize,
    num_classes: usize,
}

/// Summary written next to any dataset-derived artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub num_graphs: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub avg_nodes: f64,
    pub avg_edges: f64,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        let feature_dim = graphs.first().map_or(0, Graph::feature_dim);
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::Contract(format!(
                    "graph {i} has feature dim {}, expected {feature_dim}",
                    g.feature_dim()
                )));
            }
            if let Some(y) = g.label() {
                if y >= num_classes {
                    return Err(Error::Contract(format!("graph {i} label {y} outside [0,{num_classes})")));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            graphs,
            feature_dim,
            num_classes,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.graphs.iter().map(Graph::label).collect()
    }

    pub fn avg_nodes(&self) -> f64 {
        mean(self.graphs.iter().map(|g| g.num_nodes() as f64))
    }

    pub fn avg_edges(&self) -> f64 {
        mean(self.graphs.iter().map(|g| g.num_edges() as f64))
    }

    pub fn total_edges(&self) -> usize {
        self.graphs.iter().map(Graph::num_edges).sum()
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            name: self.name.clone(),
            num_graphs: self.len(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            avg_nodes: self.avg_nodes(),
            avg_edges: self.avg_edges(),
        }
    }

    /// Same graphs with labels replaced.
    pub fn with_labels(&self, labels: &[usize]) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::dim("with_labels", &[labels.len()], &[self.len()]));
        }
        let graphs = self
            .graphs
            .iter()
            .zip(labels)
            .map(|(g, &y)| g.clone().with_label(Some(y)))
            .collect();
        Self::new(self.name.clone(), graphs, self.num_classes)
    }
}

pub(crate) fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
