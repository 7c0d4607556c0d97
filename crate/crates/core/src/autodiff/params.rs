use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::Tape;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "subgraph-gcl/params";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    name: String,
    value: Tensor,
    grad: Tensor,
}

/// Named, enumerable registry of trainable tensors and their gradients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamFile", try_from = "ParamFile")]
pub struct ParamStore {
    entries: Vec<Entry>,
    by_name: HashMap<String, ParamId>,
}

#[derive(Clone, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct ParamFile {
    format: String,
    version: u32,
    params: Vec<ParamRecord>,
}

impl From<ParamStore> for ParamFile {
    fn from(store: ParamStore) -> Self {
        ParamFile {
            format: PARAMS_FORMAT.into(),
            version: PARAMS_VERSION,
            params: store
                .entries
                .into_iter()
                .map(|e| ParamRecord {
                    name: e.name,
                    shape: e.value.shape().to_vec(),
                    data: e.value.into_data(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ParamFile> for ParamStore {
    type Error = Error;

    fn try_from(file: ParamFile) -> Result<Self> {
        if file.format != PARAMS_FORMAT || file.version != PARAMS_VERSION {
            return Err(Error::Compatibility(format!(
                "unsupported parameter file {} v{}",
                file.format, file.version
            )));
        }
        let mut store = ParamStore::new();
        for r in file.params {
            store.add(r.name, Tensor::new(r.shape, r.data)?)?;
        }
        Ok(store)
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Parameter(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.entries.len());
        let grad = Tensor::zeros(value.shape());
        self.entries.push(Entry {
            name: name.clone(),
            value,
            grad,
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    /// Glorot-uniform matrix initialisation.
    pub fn add_glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut impl Rng) -> Result<ParamId> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        self.add(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds the gradients recorded on `tape` into the store.
    pub fn accumulate_grads(&mut self, tape: &Tape) {
        for (id, g) in tape.param_grads() {
            self.entries[id.0].grad.add_assign(&g);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamFile = serde_json::from_str(text)?;
        file.try_into()
    }

    /// Copies values from `other` for every parameter with a matching name and shape.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for e in &mut self.entries {
            let id = other
                .id(&e.name)
                .ok_or_else(|| Error::Compatibility(format!("missing parameter `{}`", e.name)))?;
            let src = other.value(id);
            if src.shape() != e.value.shape() {
                return Err(Error::Compatibility(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    e.name,
                    src.shape(),
                    e.value.shape()
                )));
            }
            e.value = src.clone();
        }
        Ok(())
    }
}
