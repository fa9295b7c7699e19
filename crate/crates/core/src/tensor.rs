//! Dense row-major tensors and integer index matrices.
//!
//! `Tensor` is the engine's sole numeric carrier: a shape vector plus a flat
//! `Vec<f64>` in row-major order. All layer code indexes the flat buffer
//! directly, so the hot paths stay allocation- and bounds-check-friendly.

use serde::{Deserialize, Serialize};

/// Dense multi-dimensional array of 64-bit floats, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and flat row-major data.
    ///
    /// Panics if `data.len()` does not equal the product of `shape`.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let expected: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            expected,
            "shape {:?} expects {} elements, got {}",
            shape,
            expected,
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Reinterprets the flat buffer under a new shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Self {
        let expected: usize = shape.iter().product();
        assert_eq!(
            self.data.len(),
            expected,
            "reshape to {:?} changes size",
            shape
        );
        self.shape = shape;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Rectangular matrix of integer indices (e.g. encoded feature rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<usize>,
}

impl IndexMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<usize>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "index matrix size mismatch");
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }

    /// Gathers the given rows into a new matrix, preserving order.
    pub fn select_rows(&self, rows: &[usize]) -> IndexMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        IndexMatrix::new(rows.len(), self.n_cols, data)
    }
}

/// Gathers rows of a 2-D tensor into a new 2-D tensor.
pub fn select_rows(x: &Tensor, rows: &[usize]) -> Tensor {
    assert_eq!(x.shape().len(), 2, "select_rows expects a 2-D tensor");
    let cols = x.shape()[1];
    let mut data = Vec::with_capacity(rows.len() * cols);
    for &r in rows {
        data.extend_from_slice(&x.data()[r * cols..(r + 1) * cols]);
    }
    Tensor::new(vec![rows.len(), cols], data)
}
