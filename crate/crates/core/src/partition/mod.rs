//! Partitioning graphs into densely connected subgraphs.

mod cache;
mod girvan_newman;
mod louvain;

pub use cache::{PartitionCache, CACHE_FORMAT, CACHE_VERSION};
pub use girvan_newman::{edge_betweenness, girvan_newman, GnTarget};
pub use louvain::{louvain, louvain_with_order};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph};
use crate::rng::substream;

/// Node → subgraph assignment with per-subgraph bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    intra_edges: Vec<Vec<usize>>,
    inter_edges: Vec<usize>,
}

impl Partition {
    /// Builds a partition from arbitrary labels. Subgraph ids are renumbered
    /// in order of each subgraph's smallest node.
    pub fn from_assignment(g: &Graph, labels: &[usize]) -> Result<Self> {
        if labels.len() != g.num_nodes() {
            return Err(Error::dim("partition", &[labels.len()], &[g.num_nodes()]));
        }
        let mut remap = std::collections::HashMap::new();
        let assignment: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        let k = remap.len();
        let mut members = vec![Vec::new(); k];
        for (v, &c) in assignment.iter().enumerate() {
            members[c].push(v);
        }
        let mut intra_edges = vec![Vec::new(); k];
        let mut inter_edges = Vec::new();
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            if assignment[u] == assignment[v] {
                intra_edges[assignment[u]].push(e);
            } else {
                inter_edges.push(e);
            }
        }
        Ok(Self {
            assignment,
            members,
            intra_edges,
            inter_edges,
        })
    }

    /// Every node in one subgraph.
    pub fn whole(g: &Graph) -> Self {
        Self::from_assignment(g, &vec![0; g.num_nodes()]).expect("sizes agree")
    }

    /// Splits every subgraph into the connected components it induces.
    pub fn split_disconnected(&self, g: &Graph) -> Self {
        let n = g.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for &(u, v) in g.edges() {
            if self.assignment[u] == self.assignment[v] {
                let (a, b) = (find(&mut parent, u), find(&mut parent, v));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let labels: Vec<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
        Self::from_assignment(g, &labels).expect("sizes agree")
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, s: usize) -> &[usize] {
        &self.members[s]
    }

    pub fn all_members(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Indices into `g.edges()` of edges inside subgraph `s`.
    pub fn intra_edges(&self, s: usize) -> &[usize] {
        &self.intra_edges[s]
    }

    /// Indices into `g.edges()` of edges crossing subgraphs.
    pub fn inter_edges(&self) -> &[usize] {
        &self.inter_edges
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    /// True when both labelings group nodes identically.
    pub fn same_grouping(&self, other: &Partition) -> bool {
        self.assignment == other.assignment
    }
}

/// Q = Σ_c (e_c/m − (d_c/2m)²); zero for edgeless graphs.
pub fn modularity(g: &Graph, p: &Partition) -> f64 {
    modularity_with_resolution(g, p.assignment(), 1.0)
}

pub fn modularity_with_resolution(g: &Graph, assignment: &[usize], resolution: f64) -> f64 {
    let m = g.num_edges() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = assignment.iter().max().map_or(0, |x| x + 1);
    let (mut e, mut d) = (vec![0.0; k], vec![0.0; k]);
    for &(u, v) in g.edges() {
        let (cu, cv) = (assignment[u], assignment[v]);
        if cu == cv {
            e[cu] += 1.0;
        }
        d[cu] += 1.0;
        d[cv] += 1.0;
    }
    (0..k)
        .map(|c| e[c] / m - resolution * (d[c] / (2.0 * m)).powi(2))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "kebab-case")]
pub enum PartitionAlgo {
    Louvain { resolution: f64 },
    GirvanNewman { target: GnTarget },
}

impl Default for PartitionAlgo {
    fn default() -> Self {
        PartitionAlgo::Louvain { resolution: 1.0 }
    }
}

impl fmt::Display for PartitionAlgo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionAlgo::Louvain { resolution } if *resolution == 1.0 => write!(f, "louvain"),
            PartitionAlgo::Louvain { resolution } => write!(f, "louvain@{resolution}"),
            PartitionAlgo::GirvanNewman { target } => write!(f, "gn:{target}"),
        }
    }
}

impl FromStr for PartitionAlgo {
    type Err = Error;

    /// `louvain`, `louvain@<resolution>`, `gn` (max modularity), `gn:first-split`, `gn:k=<k>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "louvain" {
            return Ok(PartitionAlgo::Louvain { resolution: 1.0 });
        }
        if let Some(r) = s.strip_prefix("louvain@") {
            let resolution = r
                .parse()
                .map_err(|_| Error::Parameter(format!("bad louvain resolution `{r}`")))?;
            return Ok(PartitionAlgo::Louvain { resolution });
        }
        if s == "gn" {
            return Ok(PartitionAlgo::GirvanNewman {
                target: GnTarget::MaxModularity,
            });
        }
        if let Some(t) = s.strip_prefix("gn:") {
            return Ok(PartitionAlgo::GirvanNewman { target: t.parse()? });
        }
        Err(Error::Parameter(format!("unknown partition algorithm `{s}`")))
    }
}

/// Partitions one graph. `graph_index` selects the seeded substream.
pub fn partition_graph(g: &Graph, algo: PartitionAlgo, seed: u64, graph_index: usize) -> Partition {
    match algo {
        PartitionAlgo::Louvain { resolution } => {
            let mut rng = substream(seed, &[0x10u64, graph_index as u64]);
            louvain(g, &mut rng, resolution)
        }
        PartitionAlgo::GirvanNewman { target } => girvan_newman(g, target),
    }
}

/// Partitions every graph, fanning out over worker threads (one graph per task).
pub fn partition_dataset(dataset: &Dataset, algo: PartitionAlgo, seed: u64) -> Vec<Partition> {
    let graphs = dataset.graphs();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(graphs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Partition>> = vec![None; graphs.len()];
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= graphs.len() {
                    break;
                }
                let p = partition_graph(&graphs[i], algo, seed, i);
                results.lock().unwrap()[i] = Some(p);
            });
        }
    });
    slots.into_iter().map(|p| p.expect("every graph partitioned")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub avg_nodes: f64,
    pub avg_subgraphs: f64,
}

/// Partitions the dataset and summarises the result.
pub fn partition_stats(dataset: &Dataset, algo: PartitionAlgo, seed: u64) -> PartitionStats {
    stats_of(dataset, &partition_dataset(dataset, algo, seed))
}

pub fn stats_of(dataset: &Dataset, partitions: &[Partition]) -> PartitionStats {
    PartitionStats {
        avg_nodes: dataset.avg_nodes(),
        avg_subgraphs: crate::graph::mean(partitions.iter().map(|p| p.k() as f64)),
    }
}
