//! Dense row-major tensor of f64 values.
//!
//! This is deliberately minimal: no broadcasting, no views, no slicing
//! language. It only provides what the signal and network code needs —
//! shape bookkeeping, flat storage, and index/offset arithmetic.

use crate::error::{Error, Result};

/// Dense n-dimensional array of 64-bit floats in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and a flat row-major buffer.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::invalid_argument("tensor shape must not be empty"));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid_argument(format!(
                "tensor dimensions must be >= 1, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::invalid_argument(format!(
                "shape {:?} implies {} elements but buffer has {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// All-zero tensor of the given shape. Panics on an invalid shape;
    /// internal call sites always pass validated shapes.
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        assert!(!shape.is_empty() && shape.iter().all(|&d| d >= 1));
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// Constant-filled tensor of the given shape.
    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data.iter_mut().for_each(|v| *v = value);
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Row-major strides: `stride[d] = product(shape[d+1..])`.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.shape.len()];
        for d in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.shape[d + 1];
        }
        strides
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0usize;
        for (d, &i) in index.iter().enumerate() {
            debug_assert!(i < self.shape[d]);
            off = off * self.shape[d] + i;
        }
        off
    }

    /// Multi-index of a flat offset; inverse of [`Tensor::offset`].
    pub fn index_of(&self, mut offset: usize) -> Vec<usize> {
        debug_assert!(offset < self.data.len());
        let mut index = vec![0usize; self.shape.len()];
        for d in (0..self.shape.len()).rev() {
            index[d] = offset % self.shape[d];
            offset /= self.shape[d];
        }
        index
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// True iff every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
