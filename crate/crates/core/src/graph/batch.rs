use rand::seq::SliceRandom;
use rand::Rng;

use super::{Dataset, Graph};
use crate::error::{Error, Result};

/// A mini-batch of graphs laid out block-diagonally.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub indices: Vec<usize>,
    pub graphs: Vec<&'a Graph>,
    /// `offsets[i]` is the first row of graph `i`; the last entry is the total node count.
    pub offsets: Vec<usize>,
}

impl<'a> Batch<'a> {
    pub fn new(dataset: &'a Dataset, indices: Vec<usize>) -> Self {
        let graphs: Vec<&Graph> = indices.iter().map(|&i| &dataset.graphs()[i]).collect();
        let mut offsets = Vec::with_capacity(graphs.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for g in &graphs {
            acc += g.num_nodes();
            offsets.push(acc);
        }
        Self { indices, graphs, offsets }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn total_nodes(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }
}

/// Index groups for one epoch: a seeded permutation cut into chunks of
/// `batch_size`. A short final chunk is kept only if it has at least two graphs.
pub fn batch_indices(n: usize, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::Parameter(format!("batch size must be >= 2, got {batch_size}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect())
}

/// Iterator over the batches of one epoch.
pub struct BatchIter<'a> {
    dataset: &'a Dataset,
    groups: std::vec::IntoIter<Vec<usize>>,
}

impl<'a> BatchIter<'a> {
    pub fn new(dataset: &'a Dataset, batch_size: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            dataset,
            groups: batch_indices(dataset.len(), batch_size, rng)?.into_iter(),
        })
    }
}

impl<'a> Iterator for BatchIter<'a> {
    type Item = Batch<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        self.groups.next().map(|idx| Batch::new(self.dataset, idx))
    }
}
