//! Dense row-major `f64` tensors.
//!
//! Everything in the model is 64-bit: the parameter counts are tiny, and
//! sharp finite-difference gradient checks need the precision.

use crate::error::{contract, CoreError, Result};

/// Dense tensor, row-major, 64-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * c);
        for r in rows {
            assert_eq!(r.len(), c, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor { shape: vec![n, c], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Scalar value of a 0-d (or single-element) tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor with {} elements", self.numel());
        self.data[0]
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.rank(), 2, "expected rank-2 tensor, got shape {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, c) = self.dims2();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let (_, c) = self.dims2();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        let (_, c) = self.dims2();
        self.data[i * c + j]
    }

    /// Gather rows by index into a new rank-2 tensor.
    pub fn gather_rows(&self, ids: &[usize]) -> Tensor {
        let (n, c) = self.dims2();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            assert!(i < n, "row index {i} out of range {n}");
            data.extend_from_slice(self.row(i));
        }
        Tensor { shape: vec![ids.len(), c], data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Kernel postcondition: every value finite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(CoreError::NonFinite(what.to_string()))
        }
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(contract(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )))
        }
    }
}

/// Rectangle of attention permissions: `get(i, j)` says whether row `i`
/// may attend to row `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    n_rows: usize,
    n_cols: usize,
    bits: Vec<bool>,
}

impl BitMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        BitMatrix { n_rows, n_cols, bits: vec![false; n_rows * n_cols] }
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BitMatrix::new(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| i == j)
    }

    /// The in-context learning mask: every row (context and query alike)
    /// attends to the first `ctx` rows, queries never attend to each other
    /// and context rows never attend to queries.
    pub fn context_block(len: usize, ctx: usize) -> Self {
        Self::from_fn(len, len, |_, j| j < ctx)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.n_cols + j] = v;
    }

    /// Indices of allowed targets for one row, ascending.
    pub fn allowed(&self, i: usize) -> Vec<usize> {
        (0..self.n_cols).filter(|&j| self.get(i, j)).collect()
    }

    /// If every row allows exactly the prefix `[0, c)`, return `c`.
    pub fn uniform_prefix(&self) -> Option<usize> {
        let first = &self.bits[..self.n_cols];
        let c = first.iter().take_while(|&&b| b).count();
        if first[c..].iter().any(|&b| b) {
            return None;
        }
        for i in 1..self.n_rows {
            if &self.bits[i * self.n_cols..(i + 1) * self.n_cols] != first {
                return None;
            }
        }
        Some(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_invariant() {
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]);
        assert_eq!(t.numel(), 6);
        assert_eq!(t.dims2(), (2, 3));
    }

    #[test]
    #[should_panic]
    fn shape_mismatch_panics() {
        let _ = Tensor::new(vec![2, 3], vec![0.0; 5]);
    }

    #[test]
    fn finite_check() {
        let t = Tensor::new(vec![2], vec![1.0, f64::NAN]);
        assert!(t.check_finite("t").is_err());
    }

    #[test]
    fn context_block_is_uniform_prefix() {
        let m = BitMatrix::context_block(6, 4);
        assert_eq!(m.uniform_prefix(), Some(4));
        assert!(m.get(5, 0) && !m.get(5, 5) && !m.get(0, 4));
        assert_eq!(BitMatrix::identity(3).uniform_prefix(), None);
    }
}
