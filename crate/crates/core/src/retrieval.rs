//! Exact nearest-neighbour search over embedded training rows.
//!
//! Brute-force squared-Euclidean search: at desk scale an approximate index
//! buys nothing, and exactness lets every result be checked against a full
//! sort oracle. Ties break toward the smaller row id so duplicated rows give
//! deterministic results.

use rand::seq::SliceRandom;

use crate::error::{contract, Result};
use crate::numerics::Tensor;
use crate::rng::derive_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Standardized features as-is; categorical columns keep their codes.
    Raw,
    /// Standardized numerics plus one-hot blocks for categorical columns.
    OneHot,
}

/// Embedded training rows supporting exact k-nearest-neighbour queries.
/// Immutable once built.
#[derive(Clone, Debug)]
pub struct RetrievalIndex {
    embeddings: Tensor,
    ids: Vec<usize>,
    kind: EmbeddingKind,
}

/// Paper constraint: one-hot retrieval only while the expanded vector stays
/// within 100 features.
pub const ONE_HOT_WIDTH_CAP: usize = 100;

impl RetrievalIndex {
    pub fn build(embeddings: Tensor, kind: EmbeddingKind) -> Result<Self> {
        let (n, e) = embeddings.dims2();
        if n == 0 {
            return Err(contract("cannot index an empty training set"));
        }
        if kind == EmbeddingKind::OneHot && e > ONE_HOT_WIDTH_CAP {
            return Err(contract(format!(
                "one-hot embedding width {e} exceeds the {ONE_HOT_WIDTH_CAP}-feature cap"
            )));
        }
        embeddings.check_finite("retrieval embeddings")?;
        Ok(RetrievalIndex { embeddings, ids: (0..n).collect(), kind })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dims2().1
    }

    pub fn embedding(&self, id: usize) -> &[f64] {
        self.embeddings.row(id)
    }
}

/// Neighbour-count rule: `min(ceil(10*sqrt(n_train)), k_max, n_train)`.
pub fn k_rule(n_train: usize, k_max: usize) -> usize {
    let by_size = (10.0 * (n_train as f64).sqrt()).ceil() as usize;
    by_size.min(k_max).min(n_train)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc = d.mul_add(d, acc);
    }
    acc
}

/// Exact k nearest neighbours of `point`, ascending by (distance, id).
/// Excluded ids are skipped entirely.
pub fn knn_query(
    index: &RetrievalIndex,
    point: &[f64],
    k: usize,
    exclude: &[usize],
) -> Result<Vec<usize>> {
    if point.len() != index.dim() {
        return Err(contract(format!(
            "query dim {} vs index dim {}",
            point.len(),
            index.dim()
        )));
    }
    let excluded = |id: usize| exclude.contains(&id);
    let available = index.len() - index.ids.iter().filter(|&&id| excluded(id)).count();
    if k == 0 || k > available {
        return Err(contract(format!(
            "k={k} out of range for index of {} usable rows",
            available
        )));
    }
    let mut cand: Vec<(f64, usize)> = index
        .ids
        .iter()
        .filter(|&&id| !excluded(id))
        .map(|&id| (sq_dist(point, index.embedding(id)), id))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
    };
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    Ok(cand.into_iter().map(|(_, id)| id).collect())
}

/// Gather the local context for one query: features and labels of its k
/// nearest training rows. When the query is itself a training row, pass its
/// id so it is excluded. Rows come back in ascending id order; the model is
/// order-invariant and a fixed assembly order keeps the k = N case exactly
/// equal to full-context prediction.
pub fn build_local_context(
    index: &RetrievalIndex,
    train_features: &Tensor,
    train_labels: &[u32],
    query_point: &[f64],
    k: usize,
    self_id: Option<usize>,
) -> Result<(Tensor, Vec<u32>)> {
    let exclude: Vec<usize> = self_id.into_iter().collect();
    let mut ids = knn_query(index, query_point, k, &exclude)?;
    ids.sort_unstable();
    let x = train_features.gather_rows(&ids);
    let y = ids.iter().map(|&i| train_labels[i]).collect();
    Ok((x, y))
}

/// One fine-tuning batch: each anchor's neighbourhood shuffled and split
/// into a context block and a query block that shares it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedContextBatch {
    pub anchors: Vec<usize>,
    pub context_ids: Vec<Vec<usize>>,
    pub query_ids: Vec<Vec<usize>>,
}

impl SharedContextBatch {
    pub fn batch_size(&self) -> usize {
        self.anchors.len()
    }

    /// Debug-run invariant: within each sequence no id repeats, the blocks
    /// are disjoint, and the anchor never appears.
    pub fn check_invariants(&self) {
        for b in 0..self.anchors.len() {
            let mut seen = std::collections::HashSet::new();
            for &id in self.context_ids[b].iter().chain(&self.query_ids[b]) {
                assert_ne!(id, self.anchors[b], "anchor leaked into its own sequence");
                assert!(seen.insert(id), "duplicate id {id} within a sequence");
            }
        }
    }
}

/// Sample `b` anchors without replacement; for each, take its
/// `l_ctx + l_qy` nearest neighbours (anchor itself discarded), shuffle
/// them, and split into context and query id lists.
pub fn build_shared_context_batch(
    index: &RetrievalIndex,
    b: usize,
    l_ctx: usize,
    l_qy: usize,
    seed: u64,
) -> Result<SharedContextBatch> {
    let n = index.len();
    let k = l_ctx + l_qy;
    if b < 1 || l_ctx < 1 || l_qy < 1 {
        return Err(contract("batch, context and query lengths must be positive"));
    }
    if k > n - 1 {
        return Err(contract(format!(
            "dataset too small: need {k} neighbours plus an anchor, have {n} rows"
        )));
    }
    if b > n {
        return Err(contract(format!("cannot sample {b} distinct anchors from {n} rows")));
    }
    let mut rng = derive_rng(seed, "shared-context", 0);
    let anchors: Vec<usize> = rand::seq::index::sample(&mut rng, n, b).into_vec();

    let mut context_ids = Vec::with_capacity(b);
    let mut query_ids = Vec::with_capacity(b);
    for (slot, &anchor) in anchors.iter().enumerate() {
        let mut ids = knn_query(index, index.embedding(anchor), k, &[anchor])?;
        let mut shuffle_rng = derive_rng(seed, "shared-context-shuffle", slot as u64);
        ids.shuffle(&mut shuffle_rng);
        let qy = ids.split_off(l_ctx);
        context_ids.push(ids);
        query_ids.push(qy);
    }
    Ok(SharedContextBatch { anchors, context_ids, query_ids })
}

#[cfg(test)]
pub(crate) fn brute_force_knn(
    embeddings: &Tensor,
    point: &[f64],
    k: usize,
    exclude: &[usize],
) -> Vec<usize> {
    let (n, _) = embeddings.dims2();
    let mut all: Vec<(f64, usize)> = (0..n)
        .filter(|id| !exclude.contains(id))
        .map(|id| (sq_dist(point, embeddings.row(id)), id))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|(_, id)| id).collect()
}
