//! `localicl finetune`: task-specific fine-tuning with retrieval (or with
//! random contexts, as the ablation), recording step-0 and final metrics.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use localicl_core::datagen::split_dataset;
use localicl_core::model::{checkpoint_bytes, load_checkpoint, ModelParams};
use localicl_core::pipeline::{evaluate_probs, knn_probs, prepare_task, PreparedTask};
use localicl_core::retrieval::k_rule;
use localicl_core::rng::derive_seed;
use localicl_core::training::{finetune, global_context_ids, FinetuneTask, TrainMode};
use localicl_core::Tensor;

use crate::config::ExperimentConfig;
use crate::datasets::{load_dataset, DatasetSpec};
use crate::error::{CliError, Result};
use crate::manifest::{write_atomic, RunManifest};

pub struct FinetuneArgs {
    pub checkpoint: PathBuf,
    pub dataset: DatasetSpec,
    pub label_col: Option<String>,
    pub cat_cols: Vec<String>,
    pub mode: TrainMode,
    pub config: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

pub struct FinetuneOutputs {
    pub checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub metrics_json: PathBuf,
    pub manifest: PathBuf,
    pub step0_test_auc: f64,
    pub final_test_auc: f64,
}

#[derive(Serialize)]
struct MetricsDocument {
    dataset: String,
    mode: TrainMode,
    step0: BTreeMap<String, f64>,
    r#final: BTreeMap<String, f64>,
    wallclock_ms: BTreeMap<String, u128>,
}

/// Test-split probabilities along the mode's evaluation path: local-context
/// inference for the retrieval mode, (capped) full-context inference for
/// the random-context ablation.
fn test_probs(
    params: &ModelParams,
    task: &PreparedTask,
    mode: TrainMode,
    k_eval: usize,
    eval_batch: usize,
    seed: u64,
) -> Result<Tensor> {
    match mode {
        TrainMode::FinetuneLocal => Ok(knn_probs(params, task, k_eval, eval_batch)?),
        TrainMode::FinetuneRandom => {
            let ids = global_context_ids(task.n_train(), params.config.l_ctx_max, seed);
            let cx = task.train_x.gather_rows(&ids);
            let cy: Vec<u32> = ids.iter().map(|&i| task.train_y[i]).collect();
            Ok(localicl_core::model::predict_batched(
                params,
                &cx,
                &cy,
                &task.test_x,
                task.n_classes,
                eval_batch,
            )?)
        }
        TrainMode::PriorFit => Err(localicl_core::CoreError::Contract(
            "finetune cannot run in prior_fit mode".into(),
        )),
    }
    .map_err(CliError::from)
}

pub fn cmd_finetune(args: &FinetuneArgs) -> Result<FinetuneOutputs> {
    super::init_threads();
    let config = ExperimentConfig::load_or_default(args.config.as_deref())?;
    if args.mode == TrainMode::PriorFit {
        return Err(CliError::config("finetune mode must be finetune_local or finetune_random"));
    }
    let dir = super::resolve_out_dir(&config, args.out_dir.as_deref());
    std::fs::create_dir_all(&dir)?;
    let params = load_checkpoint(&args.checkpoint)?;

    let mut manifest = RunManifest::new("finetune", &config);
    let t_total = Instant::now();

    let t0 = Instant::now();
    let ds = load_dataset(
        &args.dataset,
        0,
        config.seed,
        args.label_col.as_deref(),
        &args.cat_cols,
        params.config.c_max,
        &config.prior,
    )?;
    let splits = split_dataset(&ds, derive_seed(config.seed, "fold", 0))?;
    let task = prepare_task(&ds, &splits, config.retrieval.embedding, &params.config)?;
    manifest.phase("prepare", t0.elapsed().as_millis());

    let train_cfg = config.finetune_train_config(args.mode);
    let k_eval = k_rule(task.n_train(), config.retrieval.k_max).min(params.config.l_ctx_max);
    let eval_seed = derive_seed(config.seed, "finetune-test-ctx", 0);

    let t1 = Instant::now();
    let step0_probs = test_probs(&params, &task, args.mode, k_eval, config.eval.eval_batch, eval_seed)?;
    let step0: BTreeMap<String, f64> = evaluate_probs(&step0_probs, &task.test_y)?
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    manifest.phase("evaluate_step0", t1.elapsed().as_millis());

    let t2 = Instant::now();
    let ft_task = FinetuneTask {
        train_x: &task.train_x,
        train_y: &task.train_y,
        val_x: &task.val_x,
        val_y: &task.val_y,
        val_emb: &task.val_emb,
        index: &task.index,
        n_classes: task.n_classes,
    };
    let run = finetune(&params, &ft_task, &train_cfg)?;
    manifest.phase("finetune", t2.elapsed().as_millis());

    let t3 = Instant::now();
    let final_probs =
        test_probs(&run.params, &task, args.mode, k_eval, config.eval.eval_batch, eval_seed)?;
    let final_metrics: BTreeMap<String, f64> = evaluate_probs(&final_probs, &task.test_y)?
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    manifest.phase("evaluate_final", t3.elapsed().as_millis());
    manifest.phase("total", t_total.elapsed().as_millis());

    let checkpoint = dir.join("finetuned.lcpf");
    write_atomic(&checkpoint, &checkpoint_bytes(&run.params)?)?;
    let train_log = dir.join("finetune_log.csv");
    super::write_train_log(&train_log, &run.log)?;

    let step0_test_auc = step0["auc"];
    let final_test_auc = final_metrics["auc"];
    let doc = MetricsDocument {
        dataset: ds.name.clone(),
        mode: args.mode,
        step0,
        r#final: final_metrics,
        wallclock_ms: manifest.wallclock_ms.clone(),
    };
    let metrics_json = dir.join("metrics.json");
    write_atomic(
        &metrics_json,
        serde_json::to_string_pretty(&doc)
            .map_err(|e| CliError::other(e.to_string()))?
            .as_bytes(),
    )?;

    manifest.record_output(&checkpoint)?;
    manifest.record_output(&train_log)?;
    manifest.record_output(&metrics_json)?;
    let manifest_path = manifest.write(&dir)?;
    Ok(FinetuneOutputs {
        checkpoint,
        train_log,
        metrics_json,
        manifest: manifest_path,
        step0_test_auc,
        final_test_auc,
    })
}
