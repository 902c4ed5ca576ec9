//! 2×2, stride-2 pooling. Odd heights/widths are padded on the bottom/right
//! by replicating the last row/column, so the output is `ceil(H/2) × ceil(W/2)`
//! and gradients for replicated cells land back on the edge they copy.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    #[default]
    Max,
    Average,
}

impl std::str::FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolMode::Max),
            "average" | "avg" => Ok(PoolMode::Average),
            other => Err(Error::invalid(format!("unknown pooling mode {other:?}"))),
        }
    }
}

/// What the backward pass needs: the input shape and, for max pooling, the
/// flat input index that won each window.
#[derive(Debug, Clone, PartialEq)]
pub enum PoolRouting {
    Max {
        input_shape: (usize, usize, usize),
        argmax: Vec<u32>,
    },
    Average {
        input_shape: (usize, usize, usize),
    },
}

impl PoolRouting {
    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self {
            PoolRouting::Max { input_shape, .. } | PoolRouting::Average { input_shape } => {
                *input_shape
            }
        }
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        let (c, h, w) = self.input_shape();
        (c, h.div_ceil(2), w.div_ceil(2))
    }
}

/// The four (replicated-edge) source indices of output cell `(oy, ox)` in one
/// channel plane, in scan order.
#[inline]
fn window(h: usize, w: usize, oy: usize, ox: usize) -> [usize; 4] {
    let y0 = 2 * oy;
    let x0 = 2 * ox;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1]
}

pub fn pool2d_forward(input: &Tensor, mode: PoolMode) -> Result<(Tensor, PoolRouting)> {
    let (c, h, w) = input.chw()?;
    if h == 0 || w == 0 {
        return Err(Error::invalid("cannot pool an empty feature map"));
    }
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let plane = h * w;
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::new();
    if mode == PoolMode::Max {
        argmax.reserve(c * oh * ow);
    }
    for ch in 0..c {
        let src = &input.data()[ch * plane..(ch + 1) * plane];
        for oy in 0..oh {
            for ox in 0..ow {
                let idx = window(h, w, oy, ox);
                match mode {
                    PoolMode::Max => {
                        let mut best = idx[0];
                        for &i in &idx[1..] {
                            if src[i] > src[best] {
                                best = i;
                            }
                        }
                        out.push(src[best]);
                        argmax.push((ch * plane + best) as u32);
                    }
                    PoolMode::Average => {
                        let sum: f32 = idx.iter().map(|&i| src[i]).sum();
                        out.push(sum * 0.25);
                    }
                }
            }
        }
    }
    let routing = match mode {
        PoolMode::Max => PoolRouting::Max {
            input_shape: (c, h, w),
            argmax,
        },
        PoolMode::Average => PoolRouting::Average {
            input_shape: (c, h, w),
        },
    };
    Ok((Tensor::new([c, oh, ow], out)?, routing))
}

pub fn pool2d_backward(grad_output: &Tensor, routing: &PoolRouting) -> Result<Tensor> {
    let (oc, oh, ow) = routing.output_shape();
    if grad_output.dims() != [oc, oh, ow] {
        return Err(Error::invalid(format!(
            "pool grad shape {:?} does not match routing output {:?}",
            grad_output.dims(),
            (oc, oh, ow)
        )));
    }
    let (c, h, w) = routing.input_shape();
    let mut grad = vec![0.0f32; c * h * w];
    match routing {
        PoolRouting::Max { argmax, .. } => {
            for (&g, &src) in grad_output.data().iter().zip(argmax) {
                grad[src as usize] += g;
            }
        }
        PoolRouting::Average { .. } => {
            let plane = h * w;
            for ch in 0..c {
                let dst = &mut grad[ch * plane..(ch + 1) * plane];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = grad_output.data()[(ch * oh + oy) * ow + ox] * 0.25;
                        for i in window(h, w, oy, ox) {
                            dst[i] += g;
                        }
                    }
                }
            }
        }
    }
    Tensor::new([c, h, w], grad)
}
