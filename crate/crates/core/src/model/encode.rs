//! Row encoding: train-split standardization, optional one-hot expansion,
//! and the pad-and-rescale step that produces model inputs.
//!
//! Retrieval queries the same standardized embedding the model consumes
//! (shared statistics), so the two cannot drift apart: the model input is
//! the embedding zero-padded to `d_max` and scaled by `d_max / d_eff`,
//! which preserves nearest-neighbour order.

use super::config::ModelConfig;
use crate::error::{CoreError, Result};
use crate::numerics::Tensor;
use crate::retrieval::EmbeddingKind;

const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
enum ColumnEncoder {
    /// z-score with train statistics.
    Numeric { mean: f64, std: f64 },
    /// One-hot over the train-split vocabulary (first-appearance order);
    /// unseen categories map to an all-zero block.
    OneHot { vocab: Vec<f64> },
}

impl ColumnEncoder {
    fn width(&self) -> usize {
        match self {
            ColumnEncoder::Numeric { .. } => 1,
            ColumnEncoder::OneHot { vocab } => vocab.len(),
        }
    }
}

/// Fitted feature encoder.
#[derive(Clone, Debug)]
pub struct Encoding {
    kind: EmbeddingKind,
    cols: Vec<ColumnEncoder>,
    d_eff: usize,
}

impl Encoding {
    /// Fit on training rows only.
    pub fn fit(train_features: &Tensor, cat_mask: &[bool], kind: EmbeddingKind) -> Self {
        let (n, d) = train_features.dims2();
        assert_eq!(cat_mask.len(), d, "cat_mask length must equal feature count");
        let mut cols = Vec::with_capacity(d);
        for j in 0..d {
            let one_hot = kind == EmbeddingKind::OneHot && cat_mask[j];
            if one_hot {
                let mut vocab: Vec<f64> = Vec::new();
                for i in 0..n {
                    let v = train_features.at2(i, j);
                    if !vocab.contains(&v) {
                        vocab.push(v);
                    }
                }
                cols.push(ColumnEncoder::OneHot { vocab });
            } else {
                let mut mean = 0.0;
                for i in 0..n {
                    mean += train_features.at2(i, j);
                }
                mean /= n as f64;
                let mut var = 0.0;
                for i in 0..n {
                    let c = train_features.at2(i, j) - mean;
                    var += c * c;
                }
                let std = (var / n as f64).sqrt().max(STD_FLOOR);
                cols.push(ColumnEncoder::Numeric { mean, std });
            }
        }
        let d_eff = cols.iter().map(ColumnEncoder::width).sum();
        Encoding { kind, cols, d_eff }
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    /// Width of the standardized embedding.
    pub fn d_eff(&self) -> usize {
        self.d_eff
    }

    /// Standardized (and possibly one-hot-expanded) rows: the retrieval
    /// embedding.
    pub fn embed(&self, rows: &Tensor) -> Tensor {
        let (n, d) = rows.dims2();
        assert_eq!(d, self.cols.len(), "feature count changed between fit and embed");
        let mut out = Tensor::zeros(&[n, self.d_eff]);
        for i in 0..n {
            let mut at = 0;
            let orow = out.row_mut(i);
            for (j, col) in self.cols.iter().enumerate() {
                let v = rows.at2(i, j);
                match col {
                    ColumnEncoder::Numeric { mean, std } => {
                        orow[at] = (v - mean) / std;
                        at += 1;
                    }
                    ColumnEncoder::OneHot { vocab } => {
                        if let Some(pos) = vocab.iter().position(|&c| c == v) {
                            orow[at + pos] = 1.0;
                        }
                        at += vocab.len();
                    }
                }
            }
        }
        out
    }

    /// Model input: embedding zero-padded to `d_max`, scaled by
    /// `d_max / d_eff`. Rejects the dataset if the effective width exceeds
    /// the model capacity.
    pub fn encode_rows(&self, rows: &Tensor, config: &ModelConfig) -> Result<Tensor> {
        let emb = self.embed(rows);
        self.pad_embedded(&emb, config)
    }

    /// Pad-and-rescale an already-embedded matrix.
    pub fn pad_embedded(&self, emb: &Tensor, config: &ModelConfig) -> Result<Tensor> {
        let (n, e) = emb.dims2();
        if e > config.d_max {
            return Err(CoreError::DataRejected(format!(
                "encoded width {e} exceeds d_max={} (embedding {:?})",
                config.d_max, self.kind
            )));
        }
        let scale = config.d_max as f64 / e as f64;
        let mut out = Tensor::zeros(&[n, config.d_max]);
        for i in 0..n {
            for (slot, &v) in out.row_mut(i).iter_mut().zip(emb.row(i)) {
                *slot = v * scale;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_with_dmax(d_max: usize) -> ModelConfig {
        ModelConfig { d_max, ..ModelConfig::default() }
    }

    #[test]
    fn train_mean_encodes_to_zero() {
        let train = Tensor::from_rows(&[vec![1.0], vec![3.0], vec![5.0]]);
        let enc = Encoding::fit(&train, &[false], EmbeddingKind::Raw);
        let out = enc.embed(&Tensor::from_rows(&[vec![3.0]]));
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn full_width_means_scale_one() {
        let train = Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]);
        let enc = Encoding::fit(&train, &[false, false], EmbeddingKind::Raw);
        let cfg = cfg_with_dmax(2);
        let emb = enc.embed(&train);
        let model_in = enc.encode_rows(&train, &cfg).unwrap();
        assert_eq!(emb.data(), model_in.data());
    }

    #[test]
    fn pad_and_scale_rule() {
        // d=2, d_max=4: a coordinate standardizing to z=1 becomes 2.0.
        let train = Tensor::from_rows(&[vec![0.0, 5.0], vec![2.0, 5.0]]);
        let enc = Encoding::fit(&train, &[false, false], EmbeddingKind::Raw);
        let cfg = cfg_with_dmax(4);
        let out = enc.encode_rows(&Tensor::from_rows(&[vec![2.0, 5.0]]), &cfg).unwrap();
        // col 0: mean 1, std 1 -> z=1 -> scaled by 4/2 = 2
        assert_eq!(out.shape(), &[1, 4]);
        assert!((out.at2(0, 0) - 2.0).abs() < 1e-12);
        assert_eq!(out.at2(0, 2), 0.0);
        assert_eq!(out.at2(0, 3), 0.0);
    }

    #[test]
    fn constant_column_uses_std_floor() {
        let train = Tensor::from_rows(&[vec![7.0], vec![7.0]]);
        let enc = Encoding::fit(&train, &[false], EmbeddingKind::Raw);
        let out = enc.embed(&Tensor::from_rows(&[vec![7.0]]));
        assert_eq!(out.data(), &[0.0]);
        let shifted = enc.embed(&Tensor::from_rows(&[vec![7.0 + 1e-8]]));
        assert!(shifted.data()[0].is_finite());
    }

    #[test]
    fn one_hot_expansion_and_unseen_category() {
        let train = Tensor::from_rows(&[vec![0.0, 2.0], vec![1.0, 0.0], vec![0.0, 2.0]]);
        let enc = Encoding::fit(&train, &[false, true], EmbeddingKind::OneHot);
        assert_eq!(enc.d_eff(), 3); // 1 numeric + vocab {2.0, 0.0}
        let out = enc.embed(&Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 9.0]]));
        // seen category hits its slot
        assert_eq!(out.row(0)[1..], [0.0, 1.0]);
        // unseen category: all-zero block
        assert_eq!(out.row(1)[1..], [0.0, 0.0]);
    }

    #[test]
    fn raw_kind_zscores_categorical_codes() {
        let train = Tensor::from_rows(&[vec![0.0], vec![2.0]]);
        let enc = Encoding::fit(&train, &[true], EmbeddingKind::Raw);
        let out = enc.embed(&train);
        assert_eq!(out.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn too_wide_dataset_rejected() {
        let train = Tensor::zeros(&[3, 5]);
        let enc = Encoding::fit(&train, &[false; 5], EmbeddingKind::Raw);
        let cfg = cfg_with_dmax(4);
        assert!(matches!(
            enc.encode_rows(&train, &cfg),
            Err(CoreError::DataRejected(_))
        ));
    }
}
