//! The in-context classifier: token construction, pre-norm transformer
//! blocks under the context-block attention mask, and the prediction
//! variants (full context, k-NN local context, permutation ensemble,
//! chunked context averaging).
//!
//! A row token is the projected padded feature vector plus a label
//! embedding; query positions always use the "label absent" sentinel row.
//! Context rows attend to each other, queries attend only to the context,
//! so query predictions are independent of one another.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{contract, Result};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::{BitMatrix, Tensor};
use crate::retrieval::{build_local_context, RetrievalIndex};
use crate::rng::derive_rng;

/// Inference micro-batch: queries per forward pass.
pub const EVAL_BATCH: usize = 512;

struct BoundLayer {
    ln1_gain: Var,
    ln1_shift: Var,
    wq: Var,
    bq: Var,
    wk: Var,
    bk: Var,
    wv: Var,
    bv: Var,
    wo: Var,
    bo: Var,
    ln2_gain: Var,
    ln2_shift: Var,
    ff_w1: Var,
    ff_b1: Var,
    ff_w2: Var,
    ff_b2: Var,
}

/// Model parameters registered as tape leaves, in canonical order.
pub struct BoundParams {
    feat_w: Var,
    feat_b: Var,
    label_emb: Var,
    layers: Vec<BoundLayer>,
    final_ln_gain: Var,
    final_ln_shift: Var,
    head_w: Var,
    head_b: Var,
    ordered: Vec<Var>,
}

impl BoundParams {
    pub fn bind(tape: &mut Tape, params: &ModelParams) -> Self {
        let mut ordered = Vec::new();
        let mut leaf = |t: &Tensor| {
            let v = tape.leaf(t.clone());
            ordered.push(v);
            v
        };
        let feat_w = leaf(&params.feat_w);
        let feat_b = leaf(&params.feat_b);
        let label_emb = leaf(&params.label_emb);
        let layers = params
            .layers
            .iter()
            .map(|l| BoundLayer {
                ln1_gain: leaf(&l.ln1_gain),
                ln1_shift: leaf(&l.ln1_shift),
                wq: leaf(&l.wq),
                bq: leaf(&l.bq),
                wk: leaf(&l.wk),
                bk: leaf(&l.bk),
                wv: leaf(&l.wv),
                bv: leaf(&l.bv),
                wo: leaf(&l.wo),
                bo: leaf(&l.bo),
                ln2_gain: leaf(&l.ln2_gain),
                ln2_shift: leaf(&l.ln2_shift),
                ff_w1: leaf(&l.ff_w1),
                ff_b1: leaf(&l.ff_b1),
                ff_w2: leaf(&l.ff_w2),
                ff_b2: leaf(&l.ff_b2),
            })
            .collect();
        let final_ln_gain = leaf(&params.final_ln_gain);
        let final_ln_shift = leaf(&params.final_ln_shift);
        let head_w = leaf(&params.head_w);
        let head_b = leaf(&params.head_b);
        BoundParams {
            feat_w,
            feat_b,
            label_emb,
            layers,
            final_ln_gain,
            final_ln_shift,
            head_w,
            head_b,
            ordered,
        }
    }

    /// Leaf vars in the same order as [`ModelParams::named`].
    pub fn ordered_vars(&self) -> &[Var] {
        &self.ordered
    }
}

/// One forward pass over a single sequence of `l_ctx` context rows followed
/// by queries. Returns query probabilities `[L - l_ctx, n_classes]` as a
/// tape value.
pub fn forward_sequence(
    tape: &mut Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    features: &Tensor,
    labels: &[u32],
    l_ctx: usize,
    n_classes: usize,
) -> Result<Var> {
    let (l, d_in) = features.dims2();
    if l_ctx == 0 {
        return Err(contract("empty context"));
    }
    if l_ctx > config.l_ctx_max {
        return Err(contract(format!(
            "context length {l_ctx} exceeds l_ctx_max={}",
            config.l_ctx_max
        )));
    }
    if l_ctx >= l {
        return Err(contract("sequence must contain at least one query row"));
    }
    if d_in != config.d_max {
        return Err(contract(format!("features must be encoded to d_max={}", config.d_max)));
    }
    if n_classes == 0 || n_classes > config.c_max {
        return Err(contract(format!("n_classes={n_classes} outside [1, {}]", config.c_max)));
    }
    if labels.len() != l {
        return Err(contract("one label slot per sequence row"));
    }
    let sentinel = config.sentinel_label();
    for (i, &y) in labels.iter().enumerate() {
        if i < l_ctx {
            if y as usize >= n_classes {
                return Err(contract(format!("context label {y} out of [0,{n_classes})")));
            }
        } else if y != sentinel {
            return Err(contract("query positions must carry the absent-label sentinel"));
        }
    }

    let x = tape.leaf(features.clone());
    let proj = tape.affine(x, bound.feat_w, bound.feat_b)?;
    let emb = tape.embed_rows(bound.label_emb, labels)?;
    let mut h = tape.add(proj, emb)?;

    let mask = BitMatrix::context_block(l, l_ctx);
    for layer in &bound.layers {
        let normed = tape.layer_norm(h, layer.ln1_gain, layer.ln1_shift)?;
        let q = tape.affine(normed, layer.wq, layer.bq)?;
        let k = tape.affine(normed, layer.wk, layer.bk)?;
        let v = tape.affine(normed, layer.wv, layer.bv)?;
        let attn = tape.masked_attention(q, k, v, &mask, config.n_heads)?;
        let attn_out = tape.affine(attn, layer.wo, layer.bo)?;
        h = tape.add(h, attn_out)?;

        let normed2 = tape.layer_norm(h, layer.ln2_gain, layer.ln2_shift)?;
        let ff1 = tape.affine(normed2, layer.ff_w1, layer.ff_b1)?;
        let act = tape.gelu(ff1)?;
        let ff2 = tape.affine(act, layer.ff_w2, layer.ff_b2)?;
        h = tape.add(h, ff2)?;
    }

    let final_norm = tape.layer_norm(h, bound.final_ln_gain, bound.final_ln_shift)?;
    let logits = tape.affine(final_norm, bound.head_w, bound.head_b)?;
    let query_logits = tape.slice_rows(logits, l_ctx, l)?;
    // Softmax over the first n_classes logits only; the remaining class
    // slots are unreachable (equivalent to masking them to -inf).
    let active = tape.slice_cols(query_logits, 0, n_classes)?;
    tape.softmax_rows(active)
}

fn stack_context_and_queries(ctx_x: &Tensor, query_x: &Tensor) -> Tensor {
    let (lc, d) = ctx_x.dims2();
    let (lq, dq) = query_x.dims2();
    assert_eq!(d, dq);
    let mut data = Vec::with_capacity((lc + lq) * d);
    data.extend_from_slice(ctx_x.data());
    data.extend_from_slice(query_x.data());
    Tensor::new(vec![lc + lq, d], data)
}

fn sequence_labels(config: &ModelConfig, ctx_y: &[u32], n_queries: usize) -> Vec<u32> {
    let mut labels = ctx_y.to_vec();
    labels.extend(std::iter::repeat_n(config.sentinel_label(), n_queries));
    labels
}

/// Posterior predictive over the query rows given a labelled context.
/// Queries are processed in micro-batches of [`EVAL_BATCH`]; each row of the
/// result sums to one.
pub fn predict(
    params: &ModelParams,
    ctx_x: &Tensor,
    ctx_y: &[u32],
    query_x: &Tensor,
    n_classes: usize,
) -> Result<Tensor> {
    predict_batched(params, ctx_x, ctx_y, query_x, n_classes, EVAL_BATCH)
}

pub fn predict_batched(
    params: &ModelParams,
    ctx_x: &Tensor,
    ctx_y: &[u32],
    query_x: &Tensor,
    n_classes: usize,
    eval_batch: usize,
) -> Result<Tensor> {
    let (lc, _) = ctx_x.dims2();
    if lc == 0 {
        return Err(contract("empty context"));
    }
    if ctx_y.len() != lc {
        return Err(contract("context features/labels length mismatch"));
    }
    let (nq, _) = query_x.dims2();
    if nq == 0 {
        return Ok(Tensor::zeros(&[0, n_classes]));
    }
    let chunks: Vec<(usize, usize)> = (0..nq)
        .step_by(eval_batch.max(1))
        .map(|s| (s, (s + eval_batch.max(1)).min(nq)))
        .collect();
    let parts: Vec<Result<Tensor>> = chunks
        .par_iter()
        .map(|&(s, e)| {
            let ids: Vec<usize> = (s..e).collect();
            let qx = query_x.gather_rows(&ids);
            let mut tape = Tape::new();
            let bound = BoundParams::bind(&mut tape, params);
            let seq = stack_context_and_queries(ctx_x, &qx);
            let labels = sequence_labels(&params.config, ctx_y, e - s);
            let probs = forward_sequence(
                &mut tape,
                &bound,
                &params.config,
                &seq,
                &labels,
                lc,
                n_classes,
            )?;
            Ok(tape.value(probs).clone())
        })
        .collect();
    let mut out = Tensor::zeros(&[nq, n_classes]);
    let mut at = 0;
    for part in parts {
        let p = part?;
        let (rows, _) = p.dims2();
        for i in 0..rows {
            out.row_mut(at + i).copy_from_slice(p.row(i));
        }
        at += rows;
    }
    Ok(out)
}

/// Local-context prediction: each query is classified against its k nearest
/// training rows. With `k` equal to the training-set size this is exactly
/// full-context prediction.
#[allow(clippy::too_many_arguments)]
pub fn predict_local(
    params: &ModelParams,
    train_x: &Tensor,
    train_y: &[u32],
    n_classes: usize,
    index: &RetrievalIndex,
    query_emb: &Tensor,
    query_x: &Tensor,
    k: usize,
    eval_batch: usize,
    self_ids: Option<&[usize]>,
) -> Result<Tensor> {
    let n_train = index.len();
    if k == 0 || k > n_train {
        return Err(contract(format!("k={k} outside [1, {n_train}]")));
    }
    let (nq, _) = query_x.dims2();
    if query_emb.dims2().0 != nq {
        return Err(contract("query embeddings/features row mismatch"));
    }
    if let Some(ids) = self_ids {
        if ids.len() != nq {
            return Err(contract("self_ids must cover every query"));
        }
    }
    let mut out = Tensor::zeros(&[nq, n_classes]);
    for chunk_start in (0..nq).step_by(eval_batch.max(1)) {
        let chunk_end = (chunk_start + eval_batch.max(1)).min(nq);
        let rows: Vec<Result<Vec<f64>>> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|i| {
                let self_id = self_ids.map(|ids| ids[i]);
                let kk = if self_id.is_some() { k.min(n_train - 1) } else { k };
                let (cx, cy) = build_local_context(
                    index,
                    train_x,
                    train_y,
                    query_emb.row(i),
                    kk,
                    self_id,
                )?;
                let ids = [i];
                let qx = query_x.gather_rows(&ids);
                let probs = predict_batched(params, &cx, &cy, &qx, n_classes, eval_batch)?;
                Ok(probs.row(0).to_vec())
            })
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            out.row_mut(chunk_start + i).copy_from_slice(&row?);
        }
    }
    Ok(out)
}

/// Average of predictions under random feature-column and class-index
/// permutations. Member 0 uses identity permutations, so a one-member
/// ensemble equals [`predict`].
pub fn predict_ensemble(
    params: &ModelParams,
    ctx_x: &Tensor,
    ctx_y: &[u32],
    query_x: &Tensor,
    n_classes: usize,
    n_members: usize,
    seed: u64,
) -> Result<Tensor> {
    if n_members == 0 {
        return Err(contract("ensemble needs at least one member"));
    }
    let (nq, _) = query_x.dims2();
    let d = params.config.d_max;
    // Columns that carry data somewhere; zero padding stays in place so the
    // permuted input keeps the train-time layout of trailing zeros.
    let active: Vec<usize> = (0..d)
        .filter(|&j| {
            (0..ctx_x.dims2().0).any(|i| ctx_x.at2(i, j) != 0.0)
                || (0..nq).any(|i| query_x.at2(i, j) != 0.0)
        })
        .collect();

    let mut sum = Tensor::zeros(&[nq, n_classes]);
    for member in 0..n_members {
        let (col_map, class_map) = if member == 0 {
            ((0..d).collect::<Vec<_>>(), (0..n_classes).collect::<Vec<_>>())
        } else {
            let mut feat_rng = derive_rng(seed, "ensemble-features", member as u64);
            let mut shuffled = active.clone();
            shuffled.shuffle(&mut feat_rng);
            let mut col_map: Vec<usize> = (0..d).collect();
            for (slot, &src) in active.iter().zip(&shuffled) {
                col_map[*slot] = src;
            }
            let mut class_rng = derive_rng(seed, "ensemble-classes", member as u64);
            let mut class_map: Vec<usize> = (0..n_classes).collect();
            class_map.shuffle(&mut class_rng);
            (col_map, class_map)
        };

        let permute_cols = |x: &Tensor| {
            let (n, _) = x.dims2();
            let mut out = Tensor::zeros(&[n, d]);
            for i in 0..n {
                for j in 0..d {
                    out.row_mut(i)[j] = x.at2(i, col_map[j]);
                }
            }
            out
        };
        let ctx_perm = permute_cols(ctx_x);
        let query_perm = permute_cols(query_x);
        let ctx_y_perm: Vec<u32> = ctx_y.iter().map(|&y| class_map[y as usize] as u32).collect();

        let probs = predict(params, &ctx_perm, &ctx_y_perm, &query_perm, n_classes)?;
        // Undo the class permutation: the model's column class_map[c] holds
        // the probability of original class c.
        for i in 0..nq {
            for c in 0..n_classes {
                sum.row_mut(i)[c] += probs.at2(i, class_map[c]);
            }
        }
    }
    for v in sum.data_mut() {
        *v /= n_members as f64;
    }
    Ok(sum)
}

/// Chunked context averaging: the training set is randomly partitioned into
/// `ceil(n / chunk_size)` chunks and the per-chunk predictive distributions
/// are averaged with uniform weights.
pub fn predict_chunked(
    params: &ModelParams,
    train_x: &Tensor,
    train_y: &[u32],
    query_x: &Tensor,
    n_classes: usize,
    chunk_size: usize,
    seed: u64,
) -> Result<Tensor> {
    if chunk_size == 0 {
        return Err(contract("chunk_size must be at least 1"));
    }
    let (n, _) = train_x.dims2();
    if n == 0 {
        return Err(contract("empty context"));
    }
    let (nq, _) = query_x.dims2();
    let mut ids: Vec<usize> = (0..n).collect();
    if n > chunk_size {
        let mut rng = derive_rng(seed, "chunked-partition", 0);
        ids.shuffle(&mut rng);
    }
    let mut sum = Tensor::zeros(&[nq, n_classes]);
    let mut n_chunks = 0usize;
    for chunk in ids.chunks(chunk_size) {
        let mut chunk_ids = chunk.to_vec();
        chunk_ids.sort_unstable();
        let cx = train_x.gather_rows(&chunk_ids);
        let cy: Vec<u32> = chunk_ids.iter().map(|&i| train_y[i]).collect();
        let probs = predict(params, &cx, &cy, query_x, n_classes)?;
        linalg_add(&mut sum, &probs);
        n_chunks += 1;
    }
    for v in sum.data_mut() {
        *v /= n_chunks as f64;
    }
    Ok(sum)
}

fn linalg_add(acc: &mut Tensor, x: &Tensor) {
    for (a, b) in acc.data_mut().iter_mut().zip(x.data()) {
        *a += b;
    }
}

/// One training sequence: encoded rows (context first), context labels, and
/// the true query labels the loss is taken against.
#[derive(Clone, Debug)]
pub struct TrainSequence {
    pub features: Tensor,
    pub ctx_labels: Vec<u32>,
    pub query_labels: Vec<u32>,
    pub n_classes: usize,
}

impl TrainSequence {
    pub fn l_ctx(&self) -> usize {
        self.ctx_labels.len()
    }

    pub fn l_qy(&self) -> usize {
        self.query_labels.len()
    }
}

/// A `(B, L_ctx + L_qy)` arrangement of encoded rows: the unit of both
/// inference and fine-tuning. Query label slots carry the absent-label
/// sentinel; the true query labels are kept separately for the loss.
#[derive(Clone, Debug)]
pub struct ContextBatch {
    pub l_ctx: usize,
    pub l_qy: usize,
    pub n_classes: usize,
    /// `[B, L_ctx + L_qy, d_max]`.
    pub features: Tensor,
    /// `B * (L_ctx + L_qy)`, sentinel at query positions.
    pub labels: Vec<u32>,
    /// `B * L_qy` true labels.
    pub query_labels: Vec<u32>,
}

impl ContextBatch {
    pub fn from_sequences(config: &ModelConfig, seqs: &[TrainSequence]) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| contract("empty batch"))?;
        let l_ctx = first.l_ctx();
        let l_qy = first.l_qy();
        let n_classes = first.n_classes;
        let l = l_ctx + l_qy;
        let sentinel = config.sentinel_label();
        let mut features = Vec::with_capacity(seqs.len() * l * config.d_max);
        let mut labels = Vec::with_capacity(seqs.len() * l);
        let mut query_labels = Vec::with_capacity(seqs.len() * l_qy);
        for seq in seqs {
            if seq.l_ctx() != l_ctx || seq.l_qy() != l_qy || seq.n_classes != n_classes {
                return Err(contract("ragged sequences in a context batch"));
            }
            if seq.features.dims2() != (l, config.d_max) {
                return Err(contract("sequence features must be [l_ctx+l_qy, d_max]"));
            }
            if seq.ctx_labels.iter().any(|&y| y as usize >= n_classes)
                || seq.query_labels.iter().any(|&y| y as usize >= n_classes)
            {
                return Err(contract("labels out of range for the batch class count"));
            }
            features.extend_from_slice(seq.features.data());
            labels.extend_from_slice(&seq.ctx_labels);
            labels.extend(std::iter::repeat_n(sentinel, l_qy));
            query_labels.extend_from_slice(&seq.query_labels);
        }
        Ok(ContextBatch {
            l_ctx,
            l_qy,
            n_classes,
            features: Tensor::new(vec![seqs.len(), l, config.d_max], features),
            labels,
            query_labels,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn sequence(&self, b: usize) -> TrainSequence {
        let l = self.l_ctx + self.l_qy;
        let d = self.features.shape()[2];
        let data = self.features.data()[b * l * d..(b + 1) * l * d].to_vec();
        TrainSequence {
            features: Tensor::new(vec![l, d], data),
            ctx_labels: self.labels[b * l..b * l + self.l_ctx].to_vec(),
            query_labels: self.query_labels[b * self.l_qy..(b + 1) * self.l_qy].to_vec(),
            n_classes: self.n_classes,
        }
    }
}

/// Cross-entropy of one sequence's query rows, as a tape value.
pub fn sequence_loss(
    tape: &mut Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    seq: &TrainSequence,
) -> Result<Var> {
    let labels = sequence_labels(config, &seq.ctx_labels, seq.l_qy());
    let probs = forward_sequence(
        tape,
        bound,
        config,
        &seq.features,
        &labels,
        seq.l_ctx(),
        seq.n_classes,
    )?;
    tape.cross_entropy(probs, &seq.query_labels)
}

/// Mean loss over sequences and the summed-then-averaged gradients, aligned
/// with [`ModelParams::named`] order. Sequences run in parallel; the
/// reduction is sequential in batch order so results are bitwise stable.
pub fn sequences_loss_and_grads(
    params: &ModelParams,
    seqs: &[TrainSequence],
) -> Result<(f64, Vec<Tensor>)> {
    if seqs.is_empty() {
        return Err(contract("empty batch"));
    }
    let per_seq: Vec<Result<(f64, Vec<Tensor>)>> = seqs
        .par_iter()
        .map(|seq| {
            let mut tape = Tape::new();
            let bound = BoundParams::bind(&mut tape, params);
            let loss = sequence_loss(&mut tape, &bound, &params.config, seq)?;
            let value = tape.value(loss).item();
            let mut grads = tape.backward(loss);
            let out: Vec<Tensor> = bound
                .ordered_vars()
                .iter()
                .zip(params.tensors())
                .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
                .collect();
            Ok((value, out))
        })
        .collect();

    let b = seqs.len() as f64;
    let mut total_loss = 0.0;
    let mut total_grads: Option<Vec<Tensor>> = None;
    for item in per_seq {
        let (loss, grads) = item?;
        total_loss += loss;
        match &mut total_grads {
            None => total_grads = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    crate::numerics::linalg::add_assign(a, g);
                }
            }
        }
    }
    let mut grads = total_grads.expect("non-empty batch");
    for g in grads.iter_mut() {
        for v in g.data_mut() {
            *v /= b;
        }
    }
    Ok((total_loss / b, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::EmbeddingKind;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn small_config() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            d_ff: 24,
            d_max: 4,
            c_max: 4,
            l_ctx_max: 64,
            ..ModelConfig::default()
        }
    }

    fn random_task(seed: u64, n_ctx: usize, n_qy: usize, n_classes: usize, d: usize) -> (Tensor, Vec<u32>, Tensor) {
        let mut rng = derive_rng(seed, "net-test", 0);
        let ctx_x = Tensor::new(
            vec![n_ctx, d],
            (0..n_ctx * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        );
        let ctx_y: Vec<u32> = (0..n_ctx)
            .map(|i| if i < n_classes { i as u32 } else { rng.random_range(0..n_classes) as u32 })
            .collect();
        let query_x = Tensor::new(
            vec![n_qy, d],
            (0..n_qy * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        );
        (ctx_x, ctx_y, query_x)
    }

    #[test]
    fn rows_sum_to_one() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 3).unwrap();
        let (cx, cy, qx) = random_task(1, 12, 7, 3, cfg.d_max);
        let probs = predict(&params, &cx, &cy, &qx, 3).unwrap();
        for i in 0..7 {
            let s: f64 = probs.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
            assert!(probs.row(i).iter().all(|&p| p.is_finite() && p >= 0.0));
        }
    }

    #[test]
    fn empty_context_rejected() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 3).unwrap();
        let cx = Tensor::zeros(&[0, cfg.d_max]);
        let qx = Tensor::zeros(&[1, cfg.d_max]);
        assert!(predict(&params, &cx, &[], &qx, 2).is_err());
    }

    #[test]
    fn duplicated_query_rows_equal() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 4).unwrap();
        let (cx, cy, qx) = random_task(2, 10, 1, 2, cfg.d_max);
        let mut dup = Vec::new();
        dup.extend_from_slice(qx.data());
        dup.extend_from_slice(qx.data());
        let qx2 = Tensor::new(vec![2, cfg.d_max], dup);
        let probs = predict(&params, &cx, &cy, &qx2, 2).unwrap();
        assert_eq!(probs.row(0), probs.row(1));
    }

    #[test]
    fn query_independence_is_bitwise() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 5).unwrap();
        let (cx, cy, qx) = random_task(3, 9, 5, 3, cfg.d_max);
        let all = predict(&params, &cx, &cy, &qx, 3).unwrap();
        let solo = predict(&params, &cx, &cy, &qx.gather_rows(&[2]), 3).unwrap();
        assert_eq!(all.row(2), solo.row(0));
    }

    #[test]
    fn context_permutation_invariance() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 6).unwrap();
        let (cx, cy, qx) = random_task(4, 11, 4, 3, cfg.d_max);
        let base = predict(&params, &cx, &cy, &qx, 3).unwrap();

        let mut perm: Vec<usize> = (0..11).collect();
        let mut rng = derive_rng(7, "perm", 0);
        perm.shuffle(&mut rng);
        let cx_p = cx.gather_rows(&perm);
        let cy_p: Vec<u32> = perm.iter().map(|&i| cy[i]).collect();
        let permuted = predict(&params, &cx_p, &cy_p, &qx, 3).unwrap();
        for (a, b) in base.data().iter().zip(permuted.data()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn query_label_values_are_ignored() {
        // forward_sequence requires the sentinel at query slots; the label
        // embedding row for queries is always the sentinel row, so zeroing
        // that row changes nothing about how context labels are read.
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 8).unwrap();
        let (cx, cy, qx) = random_task(5, 8, 3, 2, cfg.d_max);
        let base = predict(&params, &cx, &cy, &qx, 2).unwrap();

        let mut zeroed = params.clone();
        let sent = cfg.sentinel_label() as usize;
        for v in zeroed.label_emb.row_mut(sent) {
            *v = 0.0;
        }
        let out = predict(&zeroed, &cx, &cy, &qx, 2).unwrap();
        // Predictions change (the sentinel row is a learned offset), but both
        // stay valid distributions; what must NOT matter is any "true" query
        // label, which the API cannot even express.
        for i in 0..3 {
            assert!((out.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(base.dims2(), out.dims2());
    }

    #[test]
    fn local_with_k_equal_n_matches_full_context() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 9).unwrap();
        let (cx, cy, qx) = random_task(6, 20, 6, 3, cfg.d_max);
        let full = predict(&params, &cx, &cy, &qx, 3).unwrap();

        let index = RetrievalIndex::build(cx.clone(), EmbeddingKind::Raw).unwrap();
        let local = predict_local(
            &params, &cx, &cy, 3, &index, &qx, &qx, 20, EVAL_BATCH, None,
        )
        .unwrap();
        for (a, b) in full.data().iter().zip(local.data()) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn single_member_ensemble_equals_predict() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 10).unwrap();
        let (cx, cy, qx) = random_task(7, 10, 4, 3, cfg.d_max);
        let a = predict(&params, &cx, &cy, &qx, 3).unwrap();
        let b = predict_ensemble(&params, &cx, &cy, &qx, 3, 1, 99).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn ensemble_rows_normalized() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 11).unwrap();
        let (cx, cy, qx) = random_task(8, 12, 5, 4, cfg.d_max);
        let probs = predict_ensemble(&params, &cx, &cy, &qx, 4, 5, 123).unwrap();
        for i in 0..5 {
            assert!((probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chunked_single_chunk_equals_predict() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 12).unwrap();
        let (cx, cy, qx) = random_task(9, 15, 3, 2, cfg.d_max);
        let a = predict(&params, &cx, &cy, &qx, 2).unwrap();
        let b = predict_chunked(&params, &cx, &cy, &qx, 2, 15, 77).unwrap();
        assert_eq!(a.data(), b.data());
        let c = predict_chunked(&params, &cx, &cy, &qx, 2, 100, 77).unwrap();
        assert_eq!(a.data(), c.data());
    }

    #[test]
    fn chunked_rows_normalized_and_deterministic() {
        let cfg = small_config();
        let params = ModelParams::init(&cfg, 13).unwrap();
        let (cx, cy, qx) = random_task(10, 21, 4, 3, cfg.d_max);
        let a = predict_chunked(&params, &cx, &cy, &qx, 3, 8, 5).unwrap();
        let b = predict_chunked(&params, &cx, &cy, &qx, 3, 8, 5).unwrap();
        assert_eq!(a.data(), b.data());
        for i in 0..4 {
            assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
