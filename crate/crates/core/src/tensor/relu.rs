use super::Tensor;
use crate::error::Result;

pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor {
        dims: input.dims().to_vec(),
        data,
    }
}

/// Passes `grad_output` through where `input > 0`; the subgradient at exactly
/// zero is taken as 0.
pub fn relu_backward(grad_output: &Tensor, input: &Tensor) -> Result<Tensor> {
    grad_output.ensure_same_shape(input, "relu_backward")?;
    let data = grad_output
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor {
        dims: input.dims().to_vec(),
        data,
    })
}
