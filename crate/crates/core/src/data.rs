//! The universal task container.

use crate::error::{contract, CoreError, Result};
use crate::numerics::Tensor;

/// Disjoint train/validation/test row indices, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// A classification task: feature matrix, integer labels, categorical mask,
/// and (optionally) a split assignment.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    /// `[n, d]` raw feature values; categorical columns hold category codes.
    pub features: Tensor,
    /// Labels in `[0, n_classes)`.
    pub labels: Vec<u32>,
    pub cat_mask: Vec<bool>,
    pub n_classes: usize,
    pub splits: Option<Splits>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Tensor,
        labels: Vec<u32>,
        cat_mask: Vec<bool>,
        n_classes: usize,
    ) -> Result<Self> {
        let (n, d) = features.dims2();
        if labels.len() != n {
            return Err(contract(format!("{n} rows but {} labels", labels.len())));
        }
        if cat_mask.len() != d {
            return Err(contract(format!("{d} columns but cat_mask of length {}", cat_mask.len())));
        }
        if n_classes < 2 {
            return Err(CoreError::DataRejected(
                "degenerate dataset: fewer than two classes".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= n_classes) {
            return Err(contract(format!("label {bad} out of range [0,{n_classes})")));
        }
        features.check_finite("dataset features")?;
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            cat_mask,
            n_classes,
            splits: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.dims2().1
    }

    /// Rows and labels for a sorted index list.
    pub fn subset(&self, ids: &[usize]) -> (Tensor, Vec<u32>) {
        let x = self.features.gather_rows(ids);
        let y = ids.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }
}
