//! Dense single-precision tensors and the handful of kernels the frozen
//! network needs: convolution, ReLU, 2×2 pooling and Gram matrices, each with
//! the backward pass with respect to its input.
//!
//! Feature maps are rank 3 `(channels, height, width)` with an implicit batch
//! of one; convolution kernels are rank 4 `(out, in, kh, kw)`. Storage is
//! row-major.

mod conv;
mod gram;
mod pool;
mod relu;

pub use conv::{conv2d_backward_input, conv2d_forward};
pub use gram::{gram_backward, gram_matrix, GramMatrix};
pub use pool::{pool2d_backward, pool2d_forward, PoolMode, PoolRouting};
pub use relu::{relu_backward, relu_forward};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let dims = dims.into();
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::invalid(format!(
                "shape {dims:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: f32) -> Self {
        let dims = dims.into();
        let len = dims.iter().product();
        Self {
            dims,
            data: vec![value; len],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(channels, height, width)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.dims[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::invalid(format!(
                "expected a rank-3 (C, H, W) tensor, got shape {:?}",
                self.dims
            ))),
        }
    }

    /// `(out, in, kh, kw)` of a rank-4 kernel tensor.
    pub fn oihw(&self) -> Result<(usize, usize, usize, usize)> {
        match self.dims[..] {
            [o, i, kh, kw] => Ok((o, i, kh, kw)),
            _ => Err(Error::invalid(format!(
                "expected a rank-4 (O, I, KH, KW) kernel, got shape {:?}",
                self.dims
            ))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{what} produced non-finite values")))
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: shape {:?} does not match {:?}",
                self.dims, other.dims
            )))
        }
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.ensure_same_shape(other, "add")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Elementwise `self *= factor`.
    pub fn scale(&mut self, factor: f32) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Inner product accumulated in double precision.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }
}
