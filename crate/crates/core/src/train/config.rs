use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::encoder::GinConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::partition::PartitionAlgo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Unsupervised,
    SemiSupervised,
}

/// Every knob of a run. Serialized as a flat TOML table; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub regime: Regime,
    pub seed: u64,
    /// A TUDataset directory name or path, or `synthetic:<kind>`.
    pub dataset: String,
    pub synthetic_graphs: usize,
    pub synthetic_nodes: usize,
    pub data_seed: u64,
    pub partition: String,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,

    pub layers: usize,
    pub hidden_dim: usize,
    pub projection_dim: usize,
    pub standardize: bool,
    /// Generators embed with the contrastive encoder instead of their own.
    pub share_encoder: bool,

    pub tau_gumbel: f64,
    /// Per-epoch multiplicative decay of `tau_gumbel`; 1 disables annealing.
    pub gumbel_anneal: f64,
    pub tau_gumbel_min: f64,
    pub tau_ntxent: f64,
    pub neg_ratio: f64,

    pub lambda_cl: f64,
    pub lambda_sim: f64,
    pub lambda_cls: f64,

    pub label_fraction: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,

    /// 0 skips the linear probe.
    pub probe_folds: usize,
    pub probe_l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            regime: Regime::Unsupervised,
            seed: 0,
            dataset: "synthetic:motif-vs-random".into(),
            synthetic_graphs: 200,
            synthetic_nodes: 20,
            data_seed: 0,
            partition: "louvain".into(),
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            layers: 3,
            hidden_dim: 32,
            projection_dim: 32,
            standardize: true,
            share_encoder: false,
            tau_gumbel: 1.0,
            gumbel_anneal: 1.0,
            tau_gumbel_min: 0.1,
            tau_ntxent: 0.2,
            neg_ratio: 1.0,
            lambda_cl: 1.0,
            lambda_sim: 0.5,
            lambda_cls: 1.0,
            label_fraction: 0.1,
            finetune_epochs: 50,
            finetune_lr: 1e-3,
            probe_folds: 10,
            probe_l2: 1e-3,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

/// Key named by a TOML error: the unknown field, or the key on the offending line.
fn offending_key(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return rest[..end].to_string();
        }
    }
    if let Some(span) = err.span() {
        let start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
        let line = text[start..].lines().next().unwrap_or("");
        if let Some((key, _)) = line.split_once('=') {
            return key.trim().to_string();
        }
    }
    "<document>".into()
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| bad(&offending_key(text, &e), e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("adam_eps", self.adam_eps),
            ("tau_gumbel", self.tau_gumbel),
            ("tau_gumbel_min", self.tau_gumbel_min),
            ("tau_ntxent", self.tau_ntxent),
            ("finetune_lr", self.finetune_lr),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(key, format!("must be a positive number, got {v}")));
            }
        }
        let non_negative = [
            ("lambda_cl", self.lambda_cl),
            ("lambda_sim", self.lambda_sim),
            ("lambda_cls", self.lambda_cls),
            ("neg_ratio", self.neg_ratio),
            ("probe_l2", self.probe_l2),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(key, format!("must be a non-negative number, got {v}")));
            }
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(bad(key, format!("must lie in [0, 1), got {v}")));
            }
        }
        if !(self.gumbel_anneal > 0.0 && self.gumbel_anneal <= 1.0) {
            return Err(bad("gumbel_anneal", format!("must lie in (0, 1], got {}", self.gumbel_anneal)));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(bad("label_fraction", format!("must lie in (0, 1], got {}", self.label_fraction)));
        }
        if self.batch_size < 2 {
            return Err(bad("batch_size", "must be at least 2 (contrastive negatives)"));
        }
        for (key, v) in [
            ("layers", self.layers),
            ("hidden_dim", self.hidden_dim),
            ("projection_dim", self.projection_dim),
        ] {
            if v == 0 {
                return Err(bad(key, "must be at least 1"));
            }
        }
        if self.probe_folds == 1 {
            return Err(bad("probe_folds", "must be 0 (off) or at least 2"));
        }
        if self.dataset.is_empty() {
            return Err(bad("dataset", "must not be empty"));
        }
        self.partition_algo()?;
        Ok(())
    }

    pub fn partition_algo(&self) -> Result<PartitionAlgo> {
        PartitionAlgo::from_str(&self.partition).map_err(|e| bad("partition", e.to_string()))
    }

    pub fn gin(&self, input_dim: usize) -> GinConfig {
        let mut g = GinConfig::new(input_dim);
        g.layers = self.layers;
        g.hidden_dim = self.hidden_dim;
        g.projection_dim = self.projection_dim;
        g.standardize = self.standardize;
        g
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            cl: self.lambda_cl,
            sim: self.lambda_sim,
            cls: self.lambda_cls,
        }
    }

    /// Gumbel temperature used during `epoch`.
    pub fn tau_gumbel_at(&self, epoch: usize) -> f64 {
        (self.tau_gumbel * self.gumbel_anneal.powi(epoch as i32)).max(self.tau_gumbel_min.min(self.tau_gumbel))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        super::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
