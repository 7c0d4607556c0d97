use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Partition, PartitionAlgo};
use crate::error::{Error, Result};
use crate::graph::Dataset;

pub const CACHE_FORMAT: &str = "subgraph-gcl/partitions";
pub const CACHE_VERSION: u32 = 1;

/// On-disk partitions of a whole dataset. `assignments[i]` belongs to graph `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionCache {
    pub format: String,
    pub version: u32,
    pub dataset: String,
    pub algorithm: String,
    pub seed: u64,
    pub assignments: Vec<Vec<usize>>,
}

impl PartitionCache {
    pub fn new(dataset: &Dataset, algo: PartitionAlgo, seed: u64, partitions: &[Partition]) -> Self {
        Self {
            format: CACHE_FORMAT.to_string(),
            version: CACHE_VERSION,
            dataset: dataset.name.clone(),
            algorithm: algo.to_string(),
            seed,
            assignments: partitions.iter().map(|p| p.assignment().to_vec()).collect(),
        }
    }

    /// Whether this cache was produced for the given dataset, algorithm and seed.
    pub fn matches(&self, dataset: &Dataset, algo: PartitionAlgo, seed: u64) -> bool {
        self.dataset == dataset.name && self.algorithm == algo.to_string() && self.seed == seed
    }

    /// Rebuilds partitions against `dataset`, checking node counts graph by graph.
    pub fn partitions(&self, dataset: &Dataset) -> Result<Vec<Partition>> {
        if self.assignments.len() != dataset.len() {
            return Err(Error::Compatibility(format!(
                "partition cache holds {} graphs, dataset has {}",
                self.assignments.len(),
                dataset.len()
            )));
        }
        dataset
            .graphs()
            .iter()
            .zip(&self.assignments)
            .enumerate()
            .map(|(i, (g, a))| {
                if a.len() != g.num_nodes() {
                    return Err(Error::Compatibility(format!(
                        "partition cache graph {i} has {} nodes, dataset graph has {}",
                        a.len(),
                        g.num_nodes()
                    )));
                }
                Partition::from_assignment(g, a)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cache: Self = serde_json::from_str(s)?;
        if cache.format != CACHE_FORMAT || cache.version != CACHE_VERSION {
            return Err(Error::Compatibility(format!(
                "expected {CACHE_FORMAT} v{CACHE_VERSION}, found {} v{}",
                cache.format, cache.version
            )));
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
