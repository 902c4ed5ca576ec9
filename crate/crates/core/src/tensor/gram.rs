use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Channel-by-channel inner products of a feature map over its spatial
/// positions. `values` is `n_channels × n_channels`, row-major, and exactly
/// symmetric: the upper triangle is computed and mirrored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub n_channels: usize,
    /// Spatial size `H·W` of the source feature map.
    pub m_spatial: usize,
    pub values: Vec<f32>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.n_channels + j]
    }
}

pub fn gram_matrix(feature_map: &Tensor) -> Result<GramMatrix> {
    let (n, h, w) = feature_map.chw()?;
    let m = h * w;
    let mut values = vec![0.0f32; n * n];
    if n > 0 && m > 0 {
        // SAFETY: F is n×m row-major; Fᵀ is read through swapped strides and
        // the n×n destination is fully owned.
        unsafe {
            matrixmultiply::sgemm(
                n,
                m,
                n,
                1.0,
                feature_map.data().as_ptr(),
                m as isize,
                1,
                feature_map.data().as_ptr(),
                1,
                m as isize,
                0.0,
                values.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    for i in 0..n {
        for j in 0..i {
            values[i * n + j] = values[j * n + i];
        }
    }
    let gram = GramMatrix {
        n_channels: n,
        m_spatial: m,
        values,
    };
    if gram.values.iter().all(|v| v.is_finite()) {
        Ok(gram)
    } else {
        Err(Error::Numeric(
            "gram_matrix produced non-finite values".into(),
        ))
    }
}

/// Gradient of `Σ_ij grad_gram[i][j]·G[i][j]` with respect to the feature
/// map, i.e. `(R + Rᵀ)·F = 2·R·F` for the required symmetric `R`.
pub fn gram_backward(feature_map: &Tensor, grad_gram: &[f32]) -> Result<Tensor> {
    let (n, h, w) = feature_map.chw()?;
    let m = h * w;
    if grad_gram.len() != n * n {
        return Err(Error::invalid(format!(
            "grad_gram has {} entries, expected {n}x{n}",
            grad_gram.len()
        )));
    }
    let scale = grad_gram.iter().fold(0.0f32, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (grad_gram[i * n + j], grad_gram[j * n + i]);
            if (a - b).abs() > 1e-6 * scale {
                return Err(Error::invalid(format!(
                    "grad_gram is not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    let mut grad = vec![0.0f32; n * m];
    if n > 0 && m > 0 {
        // SAFETY: R is n×n, F is n×m, output n×m; all row-major and in bounds.
        unsafe {
            matrixmultiply::sgemm(
                n,
                n,
                m,
                2.0,
                grad_gram.as_ptr(),
                n as isize,
                1,
                feature_map.data().as_ptr(),
                m as isize,
                1,
                0.0,
                grad.as_mut_ptr(),
                m as isize,
                1,
            );
        }
    }
    Tensor::new([n, h, w], grad)
}
