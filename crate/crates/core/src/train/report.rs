use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, AdamState, Model, Regime, TrainConfig, TrainOutcome};
use super::probe::EvalSummary;
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::graph::{Dataset, DatasetManifest};
use crate::losses::LossValues;
use crate::partition::PartitionStats;
use crate::viewgen::Head;

pub const REPORT_FORMAT: &str = "subgraph-gcl/run-report";
pub const CHECKPOINT_FORMAT: &str = "subgraph-gcl/checkpoint";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batches: usize,
    pub tau_gumbel: f64,
    /// Batch means.
    pub loss: LossValues,
    /// Largest absolute gradient per generator head over the epoch's batches.
    pub head_grad: BTreeMap<String, f64>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub regime: Regime,
    pub config: TrainConfig,
    pub config_hash: String,
    pub dataset: DatasetManifest,
    pub partition: Option<PartitionStats>,
    pub epochs: Vec<EpochRecord>,
    pub finetune_loss: Vec<f64>,
    pub eval: Option<EvalSummary>,
    /// SHA-256 of the report with wall-clock fields zeroed and this field empty.
    pub report_hash: String,
}

impl RunReport {
    pub fn new(
        cfg: &TrainConfig,
        dataset: &Dataset,
        partition: Option<PartitionStats>,
        epochs: Vec<EpochRecord>,
        finetune_loss: Vec<f64>,
        eval: Option<EvalSummary>,
    ) -> Self {
        let mut r = RunReport {
            format: REPORT_FORMAT.into(),
            version: FORMAT_VERSION,
            regime: cfg.regime,
            config: cfg.clone(),
            config_hash: cfg.hash(),
            dataset: dataset.manifest(),
            partition,
            epochs,
            finetune_loss,
            eval,
            report_hash: String::new(),
        };
        r.report_hash = r.compute_hash();
        r
    }

    pub fn compute_hash(&self) -> String {
        let mut canon = self.clone();
        canon.report_hash.clear();
        canon.epochs.iter_mut().for_each(|e| e.wall_clock_s = 0.0);
        sha256_hex(serde_json::to_string(&canon).expect("report serializes").as_bytes())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text)?;
        if r.format != REPORT_FORMAT || r.version != FORMAT_VERSION {
            return Err(Error::Compatibility(format!("unsupported report {} v{}", r.format, r.version)));
        }
        Ok(r)
    }

    /// Heads whose gradient was nonzero in every epoch.
    pub fn heads_active_every_epoch(&self) -> Vec<Head> {
        Head::ALL
            .into_iter()
            .filter(|h| {
                !self.epochs.is_empty()
                    && self
                        .epochs
                        .iter()
                        .all(|e| e.head_grad.get(h.name()).is_some_and(|&g| g > 0.0))
            })
            .collect()
    }

    /// One row per epoch.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,batches,tau_gumbel,loss_cl,loss_sim,loss_cls,loss_total,wall_clock_s");
        for h in Head::ALL {
            write!(out, ",grad_{}", h.name()).expect("write to string");
        }
        out.push('\n');
        for e in &self.epochs {
            let cls = e.loss.cls.map(|c| c.to_string()).unwrap_or_default();
            write!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.epoch, e.batches, e.tau_gumbel, e.loss.cl, e.loss.sim, cls, e.loss.total, e.wall_clock_s
            )
            .expect("write to string");
            for h in Head::ALL {
                write!(out, ",{}", e.head_grad.get(h.name()).copied().unwrap_or(0.0)).expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

/// Parameters, optimizer state and the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub epochs_done: usize,
    pub config_hash: String,
    pub config: TrainConfig,
    pub input_dim: usize,
    pub num_classes: usize,
    pub params: ParamStore,
    pub optimizer: AdamState,
}

impl Checkpoint {
    pub fn from_outcome(outcome: &TrainOutcome) -> Self {
        let cfg = &outcome.report.config;
        let mut params = outcome.model.store.clone();
        params.zero_grad();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: FORMAT_VERSION,
            epochs_done: outcome.report.epochs.len(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            input_dim: outcome.model.input_dim,
            num_classes: outcome.model.num_classes,
            params,
            optimizer: outcome.optimizer.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let format = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if format != CHECKPOINT_FORMAT || version != u64::from(FORMAT_VERSION) {
            return Err(Error::Compatibility(format!("not a checkpoint: {format} v{version}")));
        }
        let ck: Checkpoint = serde_json::from_value(value)
            .map_err(|e| Error::Compatibility(format!("malformed checkpoint: {e}")))?;
        if ck.config.hash() != ck.config_hash {
            return Err(Error::Compatibility("checkpoint config hash mismatch".into()));
        }
        Ok(ck)
    }

    pub fn model(&self) -> Result<Model> {
        Model::attach(self.params.clone(), &self.config, self.input_dim, self.num_classes)
    }
}
