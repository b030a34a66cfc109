//! Prior-fitting on streams of synthetic tasks, and per-task fine-tuning
//! with shared local contexts (or random contexts, as an ablation), with
//! early stopping on validation AUC.

use std::time::Instant;

use rand::Rng;

use crate::data::Dataset;
use crate::datagen::{gen_prior_task, PriorConfig};
use crate::error::{contract, CoreError, Result};
use crate::eval::auc_multiclass;
use crate::model::{
    predict_batched, predict_local, sequences_loss_and_grads, Encoding, ModelConfig, ModelParams,
    TrainSequence,
};
use crate::numerics::{AdamWConfig, AdamWState, Tensor};
use crate::retrieval::{build_shared_context_batch, k_rule, EmbeddingKind, RetrievalIndex};
use crate::rng::{derive_rng, derive_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    PriorFit,
    FinetuneLocal,
    FinetuneRandom,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr: f64,
    pub weight_decay: f64,
    /// Sequences per gradient step.
    pub batch: usize,
    /// Total query positions per step, split evenly across the batch.
    pub n_qy: usize,
    /// Context length override; derived from the k-rule when absent.
    pub l_ctx: Option<usize>,
    /// Evaluate (and log) every this many gradient steps.
    pub eval_every: usize,
    /// Stop after this many evaluations without validation improvement.
    pub patience: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Neighbour cap fed to the k-rule for both training contexts and
    /// validation inference.
    pub k_max: usize,
    /// Query micro-batch for validation inference.
    pub eval_batch: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(contract("lr must be positive"));
        }
        if self.eval_every < 1 || self.batch < 1 {
            return Err(contract("eval_every and batch must be at least 1"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub split: &'static str,
    pub loss: Option<f64>,
    pub auc: Option<f64>,
    pub wallclock_ms: u128,
}

impl LogRecord {
    pub const CSV_HEADER: &'static str = "step,split,loss,auc,wallclock_ms";

    pub fn csv_row(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.step,
            self.split,
            fmt(self.loss),
            fmt(self.auc),
            self.wallclock_ms
        )
    }
}

/// Result of a training run: final (or best) parameters, the log, and the
/// raw per-step losses.
pub struct TrainRun {
    pub params: ModelParams,
    pub log: Vec<LogRecord>,
    pub step_losses: Vec<f64>,
}

/// Mutable state of a fine-tuning loop; the best snapshot wins, never the
/// last.
struct TrainState {
    params: ModelParams,
    opt: AdamWState,
    step: usize,
    best_val_auc: f64,
    best_params: ModelParams,
    evals_since_best: usize,
}

impl TrainState {
    fn new(params: ModelParams, opt: AdamWState) -> Self {
        TrainState {
            best_params: params.clone(),
            params,
            opt,
            step: 0,
            best_val_auc: f64::NEG_INFINITY,
            evals_since_best: 0,
        }
    }

    /// Record an evaluation; returns true when patience is exhausted.
    fn observe(&mut self, auc: f64, patience: usize) -> bool {
        if auc > self.best_val_auc {
            self.best_val_auc = auc;
            self.best_params = self.params.clone();
            self.evals_since_best = 0;
            false
        } else {
            self.evals_since_best += 1;
            self.evals_since_best >= patience
        }
    }
}

/// Applies one optimizer step with the non-finite recovery rule: the first
/// non-finite loss or gradient halves the learning rate and skips the step,
/// the second aborts.
struct LossGuard {
    halved: bool,
}

impl LossGuard {
    fn new() -> Self {
        LossGuard { halved: false }
    }

    /// Returns Ok(true) if the step should be skipped, Ok(false) to proceed.
    fn intercept(&mut self, err: &CoreError, opt: &mut AdamWState) -> Result<bool> {
        if let CoreError::NonFinite(what) = err {
            if !self.halved {
                self.halved = true;
                opt.cfg.lr /= 2.0;
                return Ok(true);
            }
            return Err(CoreError::NonFinite(format!(
                "{what} (after halving the learning rate once)"
            )));
        }
        Ok(false)
    }
}

fn step_update(
    params: &mut ModelParams,
    opt: &mut AdamWState,
    guard: &mut LossGuard,
    seqs: &[TrainSequence],
) -> Result<Option<f64>> {
    match sequences_loss_and_grads(params, seqs) {
        Ok((loss, grads)) => {
            if !loss.is_finite() {
                let err = CoreError::NonFinite("training loss".into());
                if guard.intercept(&err, opt)? {
                    return Ok(None);
                }
                return Err(err);
            }
            match opt.step(&mut params.tensors_mut(), &grads) {
                Ok(()) => Ok(Some(loss)),
                Err(err) => {
                    if guard.intercept(&err, opt)? {
                        Ok(None)
                    } else {
                        Err(err)
                    }
                }
            }
        }
        Err(err) => {
            if guard.intercept(&err, opt)? {
                Ok(None)
            } else {
                Err(err)
            }
        }
    }
}

/// Turn a raw prior task into an encoded training sequence: fit row
/// statistics on the context block, encode everything, context first.
fn sequence_from_task(
    task: &Dataset,
    l_ctx: usize,
    model_config: &ModelConfig,
) -> Result<TrainSequence> {
    let n = task.len();
    let ctx_ids: Vec<usize> = (0..l_ctx).collect();
    let (ctx_raw, _) = task.subset(&ctx_ids);
    let encoding = Encoding::fit(&ctx_raw, &task.cat_mask, EmbeddingKind::Raw);
    let features = encoding.encode_rows(&task.features, model_config)?;
    Ok(TrainSequence {
        features,
        ctx_labels: task.labels[..l_ctx].to_vec(),
        query_labels: task.labels[l_ctx..n].to_vec(),
        n_classes: task.n_classes,
    })
}

/// Prior-fit the model from scratch on a stream of synthetic tasks.
///
/// Each step draws a fresh batch of tasks of a common size, splits each into
/// context and query blocks, and minimizes the query cross-entropy. The loss
/// trajectory is logged every `eval_every` steps (window mean).
pub fn prior_fit(
    model_config: &ModelConfig,
    prior_config: &PriorConfig,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    cfg.validate()?;
    prior_config.validate()?;
    model_config.validate()?;
    let start = Instant::now();
    let mut params = ModelParams::init(model_config, cfg.seed)?;
    let mut opt = AdamWState::new(AdamWConfig::new(cfg.lr, cfg.weight_decay), &params.tensors());
    let mut guard = LossGuard::new();
    let mut log = Vec::new();
    let mut step_losses = Vec::new();
    let mut window = Vec::new();

    for step in 1..=cfg.max_steps {
        let mut shape_rng = derive_rng(cfg.seed, "prior-fit-shape", step as u64);
        let n = shape_rng.random_range(prior_config.size.0..=prior_config.size.1);
        let mut l_qy = (n / 4).clamp(8, 64).min(n - 1);
        if n - l_qy > model_config.l_ctx_max {
            l_qy = n - model_config.l_ctx_max;
        }
        let l_ctx = n - l_qy;

        let seqs: Vec<TrainSequence> = (0..cfg.batch)
            .map(|b| {
                let task_seed =
                    derive_seed(cfg.seed, "prior-fit-task", (step * cfg.batch + b) as u64);
                let task = gen_prior_task(&prior_config.with_size(n), task_seed)?;
                sequence_from_task(&task, l_ctx, model_config)
            })
            .collect::<Result<_>>()?;

        if let Some(loss) = step_update(&mut params, &mut opt, &mut guard, &seqs)? {
            step_losses.push(loss);
            window.push(loss);
        }
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            if !window.is_empty() {
                let mean = window.iter().sum::<f64>() / window.len() as f64;
                log.push(LogRecord {
                    step,
                    split: "train",
                    loss: Some(mean),
                    auc: None,
                    wallclock_ms: start.elapsed().as_millis(),
                });
                window.clear();
            }
        }
    }
    Ok(TrainRun { params, log, step_losses })
}

/// Everything fine-tuning needs to know about one task, already encoded.
pub struct FinetuneTask<'a> {
    pub train_x: &'a Tensor,
    pub train_y: &'a [u32],
    pub val_x: &'a Tensor,
    pub val_y: &'a [u32],
    /// Validation rows in the retrieval embedding, for neighbour search.
    pub val_emb: &'a Tensor,
    pub index: &'a RetrievalIndex,
    pub n_classes: usize,
}

/// Shared-context (or random-context) fine-tuning with early stopping on
/// validation AUC. Returns the best-evaluation snapshot; the step-0
/// evaluation is included, so the result never scores below the input
/// parameters on validation.
pub fn finetune(params: &ModelParams, task: &FinetuneTask, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate()?;
    if cfg.mode == TrainMode::PriorFit {
        return Err(contract("finetune called with mode=prior_fit"));
    }
    let start = Instant::now();
    let model_config = params.config.clone();
    let n_train = task.index.len();
    if n_train < 2 {
        return Err(contract("fine-tuning needs at least two training rows"));
    }

    // Train-time context statistics match inference: context plus queries
    // together form each anchor's k-rule neighbourhood.
    let mut l_qy = (cfg.n_qy / cfg.batch).max(1);
    let k_train = k_rule(n_train, cfg.k_max).min(n_train - 1);
    let mut l_ctx = match cfg.l_ctx {
        Some(l) => l,
        None => {
            if k_train <= l_qy {
                l_qy = (k_train / 2).max(1);
            }
            (k_train - l_qy).max(1).min(model_config.l_ctx_max)
        }
    };
    if l_ctx + l_qy > n_train - 1 {
        let k = n_train - 1;
        l_qy = l_qy.min((k / 2).max(1));
        l_ctx = k - l_qy;
    }
    let k_eval = k_rule(n_train, cfg.k_max);

    let evaluate = |params: &ModelParams| -> Result<f64> {
        let probs = match cfg.mode {
            TrainMode::FinetuneLocal => predict_local(
                params,
                task.train_x,
                task.train_y,
                task.n_classes,
                task.index,
                task.val_emb,
                task.val_x,
                k_eval,
                cfg.eval_batch,
                None,
            )?,
            TrainMode::FinetuneRandom => {
                let ids = global_context_ids(n_train, model_config.l_ctx_max, cfg.seed);
                let cx = task.train_x.gather_rows(&ids);
                let cy: Vec<u32> = ids.iter().map(|&i| task.train_y[i]).collect();
                predict_batched(params, &cx, &cy, task.val_x, task.n_classes, cfg.eval_batch)?
            }
            TrainMode::PriorFit => unreachable!(),
        };
        auc_multiclass(&probs, task.val_y)
    };

    let opt = AdamWState::new(AdamWConfig::new(cfg.lr, cfg.weight_decay), &params.tensors());
    let mut state = TrainState::new(params.clone(), opt);
    let mut guard = LossGuard::new();
    let mut log = Vec::new();
    let mut step_losses = Vec::new();
    let mut window = Vec::new();

    let auc0 = evaluate(&state.params)?;
    state.observe(auc0, cfg.patience);
    log.push(LogRecord {
        step: 0,
        split: "val",
        loss: None,
        auc: Some(auc0),
        wallclock_ms: start.elapsed().as_millis(),
    });

    for step in 1..=cfg.max_steps {
        state.step = step;
        let seqs = match cfg.mode {
            TrainMode::FinetuneLocal => {
                let batch = build_shared_context_batch(
                    task.index,
                    cfg.batch,
                    l_ctx,
                    l_qy,
                    derive_seed(cfg.seed, "finetune-batch", step as u64),
                )?;
                if cfg!(debug_assertions) {
                    batch.check_invariants();
                }
                (0..batch.batch_size())
                    .map(|b| {
                        let ids: Vec<usize> = batch.context_ids[b]
                            .iter()
                            .chain(&batch.query_ids[b])
                            .copied()
                            .collect();
                        sequence_from_ids(task, &ids, l_ctx)
                    })
                    .collect::<Vec<_>>()
            }
            TrainMode::FinetuneRandom => {
                let mut rng = derive_rng(cfg.seed, "finetune-random-batch", step as u64);
                (0..cfg.batch)
                    .map(|_| {
                        let ids =
                            rand::seq::index::sample(&mut rng, n_train, l_ctx + l_qy).into_vec();
                        sequence_from_ids(task, &ids, l_ctx)
                    })
                    .collect::<Vec<_>>()
            }
            TrainMode::PriorFit => unreachable!(),
        };

        if let Some(loss) = step_update(&mut state.params, &mut state.opt, &mut guard, &seqs)? {
            step_losses.push(loss);
            window.push(loss);
        }

        let mut stop = false;
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            if !window.is_empty() {
                let mean = window.iter().sum::<f64>() / window.len() as f64;
                log.push(LogRecord {
                    step,
                    split: "train",
                    loss: Some(mean),
                    auc: None,
                    wallclock_ms: start.elapsed().as_millis(),
                });
                window.clear();
            }
            let auc = evaluate(&state.params)?;
            log.push(LogRecord {
                step,
                split: "val",
                loss: None,
                auc: Some(auc),
                wallclock_ms: start.elapsed().as_millis(),
            });
            stop = state.observe(auc, cfg.patience);
        }
        if stop {
            break;
        }
    }

    Ok(TrainRun { params: state.best_params, log, step_losses })
}

fn sequence_from_ids(task: &FinetuneTask, ids: &[usize], l_ctx: usize) -> TrainSequence {
    let features = task.train_x.gather_rows(ids);
    let labels: Vec<u32> = ids.iter().map(|&i| task.train_y[i]).collect();
    TrainSequence {
        features,
        ctx_labels: labels[..l_ctx].to_vec(),
        query_labels: labels[l_ctx..].to_vec(),
        n_classes: task.n_classes,
    }
}

/// Deterministic full-context row selection: everything if it fits, else a
/// seeded subsample of `l_ctx_max` rows in ascending order.
pub fn global_context_ids(n_train: usize, l_ctx_max: usize, seed: u64) -> Vec<usize> {
    if n_train <= l_ctx_max {
        (0..n_train).collect()
    } else {
        let mut rng = derive_rng(seed, "global-context", 0);
        let mut ids = rand::seq::index::sample(&mut rng, n_train, l_ctx_max).into_vec();
        ids.sort_unstable();
        ids
    }
}

/// Full-model gradient check: analytic gradient of the sequence loss with
/// respect to every parameter tensor against central differences.
pub fn model_grad_check(params: &ModelParams, seq: &TrainSequence, h: f64) -> Result<f64> {
    let seqs = std::slice::from_ref(seq);
    let (_, grads) = sequences_loss_and_grads(params, seqs)?;
    let mut worst = 0.0f64;
    let n_tensors = grads.len();
    for t in 0..n_tensors {
        for i in 0..grads[t].numel() {
            let mut plus = params.clone();
            plus.tensors_mut()[t].data_mut()[i] += h;
            let (fp, _) = sequences_loss_and_grads(&plus, seqs)?;
            let mut minus = params.clone();
            minus.tensors_mut()[t].data_mut()[i] -= h;
            let (fm, _) = sequences_loss_and_grads(&minus, seqs)?;
            let fd = (fp - fm) / (2.0 * h);
            let a = grads[t].data()[i];
            let rel = (a - fd).abs() / a.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
