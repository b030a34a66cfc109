//! Experiment configuration: one JSON document with sections for the model,
//! the prior, training, retrieval, evaluation and output paths. Unknown keys
//! are rejected; every default is materialized before the run so the
//! manifest records the exact configuration used.

use std::path::Path;

use serde::{Deserialize, Serialize};

use localicl_core::datagen::PriorConfig;
use localicl_core::model::ModelConfig;
use localicl_core::pipeline::RetrievalSettings;
use localicl_core::training::{TrainConfig, TrainMode};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub train: TrainSection,
    pub retrieval: RetrievalSettings,
    pub eval: EvalSection,
    pub io: IoSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            model: ModelConfig::default(),
            prior: PriorConfig {
                dims: (2, 20),
                depth: (1, 4),
                width: (4, 64),
                classes: (2, 10),
                size: (64, 576),
                noise_scale: 0.1,
            },
            train: TrainSection::default(),
            retrieval: RetrievalSettings::default(),
            eval: EvalSection::default(),
            io: IoSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub priorfit: PriorFitSection,
    pub finetune: FinetuneSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorFitSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub max_steps: usize,
    pub log_every: usize,
}

impl Default for PriorFitSection {
    fn default() -> Self {
        PriorFitSection { lr: 1e-3, weight_decay: 0.0, batch: 8, max_steps: 2500, log_every: 30 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub n_qy: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub max_steps: usize,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        FinetuneSection {
            lr: 0.01,
            weight_decay: 0.01,
            batch: 2,
            n_qy: 128,
            eval_every: 30,
            patience: 5,
            max_steps: 1000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub folds: usize,
    pub bootstrap_resamples: usize,
    pub alpha: f64,
    pub eval_batch: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { folds: 10, bootstrap_resamples: 2000, alpha: 0.05, eval_batch: 512 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub out_dir: String,
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection { out_dir: "runs".into() }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(CliError::from_config_err)?;
        self.prior.validate().map_err(CliError::from_config_err)?;
        if self.eval.folds == 0 {
            return Err(CliError::config("eval.folds must be at least 1"));
        }
        if self.retrieval.k_max == 0 {
            return Err(CliError::config("retrieval.k_max must be at least 1"));
        }
        Ok(())
    }

    pub fn priorfit_train_config(&self) -> TrainConfig {
        TrainConfig {
            mode: TrainMode::PriorFit,
            lr: self.train.priorfit.lr,
            weight_decay: self.train.priorfit.weight_decay,
            batch: self.train.priorfit.batch,
            n_qy: 0,
            l_ctx: None,
            eval_every: self.train.priorfit.log_every,
            patience: usize::MAX,
            max_steps: self.train.priorfit.max_steps,
            seed: self.seed,
            k_max: self.retrieval.k_max,
            eval_batch: self.eval.eval_batch,
        }
    }

    pub fn finetune_train_config(&self, mode: TrainMode) -> TrainConfig {
        TrainConfig {
            mode,
            lr: self.train.finetune.lr,
            weight_decay: self.train.finetune.weight_decay,
            batch: self.train.finetune.batch,
            n_qy: self.train.finetune.n_qy,
            l_ctx: None,
            eval_every: self.train.finetune.eval_every,
            patience: self.train.finetune.patience,
            max_steps: self.train.finetune.max_steps,
            seed: self.seed,
            k_max: self.retrieval.k_max,
            eval_batch: self.eval.eval_batch,
        }
    }
}
