//! `localicl priorfit`: prior-fit the model from scratch and write the
//! checkpoint, the training log, and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use localicl_core::model::checkpoint_bytes;
use localicl_core::training::prior_fit;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::manifest::{write_atomic, RunManifest};

pub struct PriorFitOutputs {
    pub checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub manifest: PathBuf,
}

pub fn cmd_priorfit(config_path: Option<&Path>, out_dir: Option<&Path>) -> Result<PriorFitOutputs> {
    super::init_threads();
    let config = ExperimentConfig::load_or_default(config_path)?;
    let dir = super::resolve_out_dir(&config, out_dir);
    std::fs::create_dir_all(&dir)?;

    let mut manifest = RunManifest::new("priorfit", &config);
    let t0 = Instant::now();
    let run = prior_fit(&config.model, &config.prior, &config.priorfit_train_config())?;
    manifest.phase("prior_fit", t0.elapsed().as_millis());

    let t1 = Instant::now();
    let checkpoint = dir.join("checkpoint.lcpf");
    write_atomic(&checkpoint, &checkpoint_bytes(&run.params)?)?;
    let train_log = dir.join("train_log.csv");
    super::write_train_log(&train_log, &run.log)?;
    manifest.phase("write_outputs", t1.elapsed().as_millis());
    manifest.phase("total", t0.elapsed().as_millis());

    manifest.record_output(&checkpoint)?;
    manifest.record_output(&train_log)?;
    let manifest_path = manifest.write(&dir)?;
    Ok(PriorFitOutputs { checkpoint, train_log, manifest: manifest_path })
}
