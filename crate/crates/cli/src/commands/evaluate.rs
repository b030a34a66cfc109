//! `localicl evaluate`: run a method subset over datasets with repeated
//! seeded splits, writing per-fold records (CSV) and aggregates with
//! bootstrap confidence intervals (JSON).

use std::path::PathBuf;
use std::time::Instant;

use localicl_core::datagen::split_dataset;
use localicl_core::eval::EvalReport;
use localicl_core::model::load_checkpoint;
use localicl_core::pipeline::{evaluate_probs, prepare_task, run_method, Method};
use localicl_core::rng::derive_seed;
use localicl_core::CoreError;

use crate::config::ExperimentConfig;
use crate::datasets::{load_dataset, DatasetSpec};
use crate::error::{CliError, Result};
use crate::manifest::{write_atomic, RunManifest, SkippedDataset};

pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub datasets: Vec<DatasetSpec>,
    pub label_col: Option<String>,
    pub cat_cols: Vec<String>,
    pub methods: Vec<Method>,
    pub config: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

pub struct EvaluateOutputs {
    pub records_csv: PathBuf,
    pub aggregates_json: PathBuf,
    pub manifest: PathBuf,
    pub skipped: Vec<SkippedDataset>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateOutputs> {
    super::init_threads();
    let config = ExperimentConfig::load_or_default(args.config.as_deref())?;
    if args.datasets.is_empty() {
        return Err(CliError::config("evaluate needs at least one --csv or --gen dataset"));
    }
    if args.methods.is_empty() {
        return Err(CliError::config("evaluate needs at least one method"));
    }
    let dir = super::resolve_out_dir(&config, args.out_dir.as_deref());
    std::fs::create_dir_all(&dir)?;
    let params = load_checkpoint(&args.checkpoint)?;

    let mut manifest = RunManifest::new("evaluate", &config);
    let t0 = Instant::now();
    let mut report = EvalReport::default();

    for (position, spec) in args.datasets.iter().enumerate() {
        let ds = match load_dataset(
            spec,
            position,
            config.seed,
            args.label_col.as_deref(),
            &args.cat_cols,
            params.config.c_max,
            &config.prior,
        ) {
            Ok(ds) => ds,
            Err(e) if e.kind == crate::error::ErrorKind::Data => {
                manifest.skipped.push(SkippedDataset {
                    dataset: format!("{spec:?}"),
                    reason: e.message,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut skip_reason: Option<String> = None;
        'folds: for fold in 0..config.eval.folds {
            let split_seed = derive_seed(config.seed, "fold", fold as u64);
            let splits = match split_dataset(&ds, split_seed) {
                Ok(s) => s,
                Err(CoreError::DataRejected(msg)) => {
                    skip_reason = Some(msg);
                    break 'folds;
                }
                Err(e) => return Err(e.into()),
            };
            let task = match prepare_task(&ds, &splits, config.retrieval.embedding, &params.config)
            {
                Ok(t) => t,
                Err(CoreError::DataRejected(msg)) => {
                    skip_reason = Some(msg);
                    break 'folds;
                }
                Err(e) => return Err(e.into()),
            };
            for &method in &args.methods {
                let probs = run_method(
                    &params,
                    &task,
                    method,
                    &config.retrieval,
                    derive_seed(config.seed, "method", fold as u64),
                )?;
                for (metric, value) in evaluate_probs(&probs, &task.test_y)? {
                    report.push(&ds.name, fold as u32, method.name(), metric, value);
                }
            }
        }
        if let Some(reason) = skip_reason {
            report.records.retain(|r| r.dataset != ds.name);
            manifest.skipped.push(SkippedDataset { dataset: ds.name.clone(), reason });
        }
    }
    manifest.phase("evaluate", t0.elapsed().as_millis());

    if report.records.is_empty() && !manifest.skipped.is_empty() {
        eprintln!("warning: every dataset was skipped");
        for s in &manifest.skipped {
            eprintln!("  {}: {}", s.dataset, s.reason);
        }
    }
    if !report.records.is_empty() {
        report.aggregate(
            config.eval.bootstrap_resamples,
            config.eval.alpha,
            derive_seed(config.seed, "bootstrap", 0),
        )?;
    }

    let t1 = Instant::now();
    let records_csv = dir.join("records.csv");
    write_atomic(&records_csv, report.records_csv().as_bytes())?;
    let aggregates_json = dir.join("aggregates.json");
    write_atomic(&aggregates_json, report.aggregates_json()?.as_bytes())?;
    manifest.phase("write_outputs", t1.elapsed().as_millis());
    manifest.phase("total", t0.elapsed().as_millis());
    manifest.record_output(&records_csv)?;
    manifest.record_output(&aggregates_json)?;
    let manifest_path = manifest.write(&dir)?;
    for s in &manifest.skipped {
        eprintln!("skipped {}: {}", s.dataset, s.reason);
    }
    Ok(EvaluateOutputs {
        records_csv,
        aggregates_json,
        manifest: manifest_path,
        skipped: manifest.skipped.clone(),
    })
}
