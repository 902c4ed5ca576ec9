//! 2-D convolution by banded im2col + sgemm.
//!
//! The unfolded patch matrix for a full 512×512 map would run to hundreds of
//! megabytes, so output rows are processed in bands whose column matrix stays
//! under [`BAND_BUDGET`] floats. Every output element is produced by the same
//! GEMM reduction order regardless of the band split, so results are
//! deterministic for a fixed thread count.

use super::Tensor;
use crate::error::{Error, Result};

/// Upper bound on the number of floats in one band's column matrix (16 MiB).
const BAND_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(
        input: (usize, usize, usize),
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (channels, height, width) = input;
        let (kh, kw) = kernel;
        if stride == 0 {
            return Err(Error::invalid("convolution stride must be at least 1"));
        }
        if kh == 0 || kw == 0 {
            return Err(Error::invalid("convolution kernel must be non-empty"));
        }
        let padded_h = height + 2 * padding;
        let padded_w = width + 2 * padding;
        if padded_h < kh || padded_w < kw {
            return Err(Error::invalid(format!(
                "{kh}x{kw} kernel does not fit a {height}x{width} input with padding {padding}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            kh,
            kw,
            stride,
            padding,
            out_h: (padded_h - kh) / stride + 1,
            out_w: (padded_w - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn band_rows(&self, budget: usize) -> usize {
        (budget / (self.patch_len() * self.out_w).max(1)).clamp(1, self.out_h)
    }

    /// Input coordinate for output position `out` and kernel offset `k`, or
    /// `None` when it falls in the zero padding.
    #[inline]
    fn source(&self, out: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (out * self.stride + k).checked_sub(self.padding)?;
        (pos < extent).then_some(pos)
    }

    /// Unfolds output rows `rows` into `cols`, laid out `[patch_len, band]`.
    fn im2col(&self, input: &[f32], rows: std::ops::Range<usize>, cols: &mut [f32]) {
        let band = rows.len() * self.out_w;
        let plane = self.height * self.width;
        for c in 0..self.channels {
            let src = &input[c * plane..(c + 1) * plane];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * band..(row + 1) * band];
                    for (bi, oy) in rows.clone().enumerate() {
                        let line = &mut dst[bi * self.out_w..(bi + 1) * self.out_w];
                        match self.source(oy, ky, self.height) {
                            None => line.fill(0.0),
                            Some(iy) => {
                                let src_row = &src[iy * self.width..(iy + 1) * self.width];
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = match self.source(ox, kx, self.width) {
                                        Some(ix) => src_row[ix],
                                        None => 0.0,
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a `[patch_len, band]` column matrix back onto the input grid.
    fn col2im(&self, cols: &[f32], rows: std::ops::Range<usize>, out: &mut [f32]) {
        let band = rows.len() * self.out_w;
        let plane = self.height * self.width;
        for c in 0..self.channels {
            let dst = &mut out[c * plane..(c + 1) * plane];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * band..(row + 1) * band];
                    for (bi, oy) in rows.clone().enumerate() {
                        let Some(iy) = self.source(oy, ky, self.height) else {
                            continue;
                        };
                        let line = &src[bi * self.out_w..(bi + 1) * self.out_w];
                        let dst_row = &mut dst[iy * self.width..(iy + 1) * self.width];
                        for (ox, &v) in line.iter().enumerate() {
                            if let Some(ix) = self.source(ox, kx, self.width) {
                                dst_row[ix] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn kernel_geometry(
    input_shape: (usize, usize, usize),
    weights: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Geometry, usize)> {
    let (out_c, in_c, kh, kw) = weights.oihw()?;
    if in_c != input_shape.0 {
        return Err(Error::invalid(format!(
            "kernel expects {in_c} input channels, input has {}",
            input_shape.0
        )));
    }
    Ok((
        Geometry::new(input_shape, (kh, kw), stride, padding)?,
        out_c,
    ))
}

/// Zero-padded cross-correlation (the deep-learning "convolution") of a
/// `(C, H, W)` input with an `(O, C, kh, kw)` kernel plus per-output bias.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &[f32],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    forward_banded(input, weights, bias, stride, padding, BAND_BUDGET)
}

fn forward_banded(
    input: &Tensor,
    weights: &Tensor,
    bias: &[f32],
    stride: usize,
    padding: usize,
    budget: usize,
) -> Result<Tensor> {
    let (geo, out_c) = kernel_geometry(input.chw()?, weights, stride, padding)?;
    if bias.len() != out_c {
        return Err(Error::invalid(format!(
            "bias has {} entries, kernel has {out_c} outputs",
            bias.len()
        )));
    }

    let out_plane = geo.out_h * geo.out_w;
    let mut out = vec![0.0f32; out_c * out_plane];
    for (o, &b) in bias.iter().enumerate() {
        out[o * out_plane..(o + 1) * out_plane].fill(b);
    }

    let k = geo.patch_len();
    let band_rows = geo.band_rows(budget);
    let mut cols = vec![0.0f32; k * band_rows * geo.out_w];
    let mut r0 = 0;
    while r0 < geo.out_h {
        let r1 = (r0 + band_rows).min(geo.out_h);
        let band = (r1 - r0) * geo.out_w;
        geo.im2col(input.data(), r0..r1, &mut cols[..k * band]);
        // SAFETY: `weights` is O×K row-major, `cols` is K×band row-major and
        // the destination is the O×band sub-block starting at column
        // r0*out_w of the O×out_plane output; all extents are in bounds.
        unsafe {
            matrixmultiply::sgemm(
                out_c,
                k,
                band,
                1.0,
                weights.data().as_ptr(),
                k as isize,
                1,
                cols.as_ptr(),
                band as isize,
                1,
                1.0,
                out.as_mut_ptr().add(r0 * geo.out_w),
                out_plane as isize,
                1,
            );
        }
        r0 = r1;
    }

    let out = Tensor::new([out_c, geo.out_h, geo.out_w], out)?;
    out.ensure_finite("conv2d_forward")?;
    Ok(out)
}

/// Gradient of a scalar loss with respect to the convolution input, given the
/// gradient with respect to its output. Linear in `grad_output`; the bias
/// does not enter.
pub fn conv2d_backward_input(
    grad_output: &Tensor,
    weights: &Tensor,
    input_shape: (usize, usize, usize),
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    backward_banded(
        grad_output,
        weights,
        input_shape,
        stride,
        padding,
        BAND_BUDGET,
    )
}

fn backward_banded(
    grad_output: &Tensor,
    weights: &Tensor,
    input_shape: (usize, usize, usize),
    stride: usize,
    padding: usize,
    budget: usize,
) -> Result<Tensor> {
    let (geo, out_c) = kernel_geometry(input_shape, weights, stride, padding)?;
    let expected = [out_c, geo.out_h, geo.out_w];
    if grad_output.dims() != expected {
        return Err(Error::invalid(format!(
            "grad_output shape {:?} does not match convolution output {expected:?}",
            grad_output.dims()
        )));
    }
    if stride == 1 && geo.kh == geo.kw && padding < geo.kh {
        // Unit stride: the input gradient is a correlation of grad_output with
        // the spatially flipped, in/out-transposed kernel. Going through the
        // forward path gives every input pixel a fixed summation order.
        let (kh, kw) = (geo.kh, geo.kw);
        let mut flipped = vec![0.0f32; geo.channels * out_c * kh * kw];
        let w = weights.data();
        for o in 0..out_c {
            for c in 0..geo.channels {
                for ky in 0..kh {
                    for kx in 0..kw {
                        flipped[((c * out_c + o) * kh + (kh - 1 - ky)) * kw + (kw - 1 - kx)] =
                            w[((o * geo.channels + c) * kh + ky) * kw + kx];
                    }
                }
            }
        }
        let flipped = Tensor::new([geo.channels, out_c, kh, kw], flipped)?;
        let zero_bias = vec![0.0f32; geo.channels];
        return forward_banded(
            grad_output,
            &flipped,
            &zero_bias,
            1,
            kh - 1 - padding,
            budget,
        );
    }
    col2im_backward(grad_output, weights, geo, out_c, budget)
}

/// General-stride input gradient: GEMM into patch columns, then scatter-add.
/// The scatter order follows the band split.
fn col2im_backward(
    grad_output: &Tensor,
    weights: &Tensor,
    geo: Geometry,
    out_c: usize,
    budget: usize,
) -> Result<Tensor> {
    let out_plane = geo.out_h * geo.out_w;
    let k = geo.patch_len();
    let band_rows = geo.band_rows(budget);
    let mut cols = vec![0.0f32; k * band_rows * geo.out_w];
    let mut grad_in = vec![0.0f32; geo.channels * geo.height * geo.width];
    let mut r0 = 0;
    while r0 < geo.out_h {
        let r1 = (r0 + band_rows).min(geo.out_h);
        let band = (r1 - r0) * geo.out_w;
        // SAFETY: reads the transpose of the O×K kernel (row stride 1, column
        // stride K) and the O×band block of grad_output at column r0*out_w;
        // writes a K×band row-major block inside `cols`.
        unsafe {
            matrixmultiply::sgemm(
                k,
                out_c,
                band,
                1.0,
                weights.data().as_ptr(),
                1,
                k as isize,
                grad_output.data().as_ptr().add(r0 * geo.out_w),
                out_plane as isize,
                1,
                0.0,
                cols.as_mut_ptr(),
                band as isize,
                1,
            );
        }
        geo.col2im(&cols[..k * band], r0..r1, &mut grad_in);
        r0 = r1;
    }

    Tensor::new([geo.channels, geo.height, geo.width], grad_in)
}
