//! Metrics, aggregate statistics, scaling analyses, and the plain kNN
//! baseline classifier.

pub mod bins;
pub mod bootstrap;
pub mod metrics;
pub mod report;

pub use bins::{complexity_bins, complexity_of, size_bins, BinSummary, ScoreTable};
pub use bootstrap::{quantile_sorted, stratified_bootstrap_ci, Statistic};
pub use metrics::{accuracy, argmax_row, auc_binary, auc_multiclass, f1_macro, iqm, mean};
pub use report::{Aggregate, EvalReport, MetricRecord};

use crate::error::Result;
use crate::numerics::Tensor;
use crate::retrieval::{knn_query, RetrievalIndex};

/// kNN classifier baseline: class probabilities are the label frequencies
/// among the k nearest training rows, under the same index and metric the
/// retrieval module uses.
pub fn knn_baseline_predict(
    index: &RetrievalIndex,
    train_labels: &[u32],
    n_classes: usize,
    queries: &Tensor,
    k: usize,
) -> Result<Tensor> {
    let (nq, _) = queries.dims2();
    let mut out = Tensor::zeros(&[nq, n_classes]);
    for i in 0..nq {
        let ids = knn_query(index, queries.row(i), k, &[])?;
        let row = out.row_mut(i);
        for id in ids {
            row[train_labels[id] as usize] += 1.0;
        }
        for v in row.iter_mut() {
            *v /= k as f64;
        }
    }
    Ok(out)
}
