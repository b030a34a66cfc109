//! Glue between datasets and the model: per-task encoding, index
//! construction, and the evaluation method set.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Splits};
use crate::error::{contract, Result};
use crate::eval::{accuracy, auc_multiclass, f1_macro, knn_baseline_predict};
use crate::model::{
    predict_batched, predict_chunked, predict_ensemble, predict_local, Encoding, ModelParams,
};
use crate::numerics::Tensor;
use crate::retrieval::{k_rule, EmbeddingKind, RetrievalIndex};
use crate::rng::derive_seed;
use crate::training::global_context_ids;

/// The methods `evaluate` knows how to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    IclFull,
    IclKnn,
    IclEnsemble,
    IclChunked,
    KnnBaseline,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::IclFull,
        Method::IclKnn,
        Method::IclEnsemble,
        Method::IclChunked,
        Method::KnnBaseline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::IclFull => "icl_full",
            Method::IclKnn => "icl_knn",
            Method::IclEnsemble => "icl_ensemble",
            Method::IclChunked => "icl_chunked",
            Method::KnnBaseline => "knn_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| contract(format!("unknown method '{s}'")))
    }
}

/// Knobs shared by every retrieval-backed method.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RetrievalSettings {
    pub k_max: usize,
    pub embedding: EmbeddingKind,
    pub ensemble_members: usize,
    pub chunk_size: usize,
    pub eval_batch: usize,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        RetrievalSettings {
            k_max: 256,
            embedding: EmbeddingKind::OneHot,
            ensemble_members: 8,
            chunk_size: 512,
            eval_batch: crate::model::EVAL_BATCH,
        }
    }
}

/// One dataset split, encoded and indexed, ready for prediction.
pub struct PreparedTask {
    pub name: String,
    pub n_classes: usize,
    pub encoding: Encoding,
    pub index: RetrievalIndex,
    pub train_x: Tensor,
    pub train_y: Vec<u32>,
    pub val_x: Tensor,
    pub val_y: Vec<u32>,
    pub val_emb: Tensor,
    pub test_x: Tensor,
    pub test_y: Vec<u32>,
    pub test_emb: Tensor,
}

impl PreparedTask {
    pub fn n_train(&self) -> usize {
        self.train_y.len()
    }

    /// Effective neighbour count for this task under the k-rule, bounded by
    /// the model's context cap.
    pub fn k_for(&self, settings: &RetrievalSettings, l_ctx_max: usize) -> usize {
        k_rule(self.n_train(), settings.k_max).min(l_ctx_max)
    }
}

/// Standardize on the training split, encode all three splits, build the
/// retrieval index over the training embedding.
pub fn prepare_task(
    ds: &Dataset,
    splits: &Splits,
    kind: EmbeddingKind,
    model_config: &crate::model::ModelConfig,
) -> Result<PreparedTask> {
    let (train_raw, train_y) = ds.subset(&splits.train);
    let (val_raw, val_y) = ds.subset(&splits.val);
    let (test_raw, test_y) = ds.subset(&splits.test);
    let encoding = Encoding::fit(&train_raw, &ds.cat_mask, kind);
    let train_emb = encoding.embed(&train_raw);
    let val_emb = encoding.embed(&val_raw);
    let test_emb = encoding.embed(&test_raw);
    let train_x = encoding.pad_embedded(&train_emb, model_config)?;
    let val_x = encoding.pad_embedded(&val_emb, model_config)?;
    let test_x = encoding.pad_embedded(&test_emb, model_config)?;
    let index = RetrievalIndex::build(train_emb, kind)?;
    Ok(PreparedTask {
        name: ds.name.clone(),
        n_classes: ds.n_classes,
        encoding,
        index,
        train_x,
        train_y,
        val_x,
        val_y,
        val_emb,
        test_x,
        test_y,
        test_emb,
    })
}

/// Probabilities of one method on the task's test split.
pub fn run_method(
    params: &ModelParams,
    task: &PreparedTask,
    method: Method,
    settings: &RetrievalSettings,
    seed: u64,
) -> Result<Tensor> {
    let cfg = &params.config;
    match method {
        Method::IclFull => {
            let ids = global_context_ids(
                task.n_train(),
                cfg.l_ctx_max,
                derive_seed(seed, "icl-full-context", 0),
            );
            let cx = task.train_x.gather_rows(&ids);
            let cy: Vec<u32> = ids.iter().map(|&i| task.train_y[i]).collect();
            predict_batched(params, &cx, &cy, &task.test_x, task.n_classes, settings.eval_batch)
        }
        Method::IclKnn => {
            let k = task.k_for(settings, cfg.l_ctx_max);
            knn_probs(params, task, k, settings.eval_batch)
        }
        Method::IclEnsemble => {
            let ids = global_context_ids(
                task.n_train(),
                cfg.l_ctx_max,
                derive_seed(seed, "icl-full-context", 0),
            );
            let cx = task.train_x.gather_rows(&ids);
            let cy: Vec<u32> = ids.iter().map(|&i| task.train_y[i]).collect();
            predict_ensemble(
                params,
                &cx,
                &cy,
                &task.test_x,
                task.n_classes,
                settings.ensemble_members,
                derive_seed(seed, "icl-ensemble", 0),
            )
        }
        Method::IclChunked => predict_chunked(
            params,
            &task.train_x,
            &task.train_y,
            &task.test_x,
            task.n_classes,
            settings.chunk_size.min(cfg.l_ctx_max),
            derive_seed(seed, "icl-chunked", 0),
        ),
        Method::KnnBaseline => {
            let k = k_rule(task.n_train(), settings.k_max);
            knn_baseline_predict(&task.index, &task.train_y, task.n_classes, &task.test_emb, k)
        }
    }
}

/// Local-context prediction on the test split with an explicit k.
pub fn knn_probs(
    params: &ModelParams,
    task: &PreparedTask,
    k: usize,
    eval_batch: usize,
) -> Result<Tensor> {
    predict_local(
        params,
        &task.train_x,
        &task.train_y,
        task.n_classes,
        &task.index,
        &task.test_emb,
        &task.test_x,
        k,
        eval_batch,
        None,
    )
}

/// The reported metric set: AUC (macro one-vs-rest), accuracy, macro F1.
pub const METRICS: [&str; 3] = ["auc", "acc", "f1"];

pub fn evaluate_probs(probs: &Tensor, labels: &[u32]) -> Result<Vec<(&'static str, f64)>> {
    Ok(vec![
        ("auc", auc_multiclass(probs, labels)?),
        ("acc", accuracy(probs, labels)?),
        ("f1", f1_macro(probs, labels)?),
    ])
}
