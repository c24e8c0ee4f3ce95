//! 2-D cross-correlation over H×W×C maps.
//!
//! Kernels are rank-4 tensors shaped `[out_c, kh, kw, in_c]`. With stride `s`
//! and zero padding `p` the output is
//! `oh = (h + 2p − kh) / s + 1`, `ow = (w + 2p − kw) / s + 1`.

use super::tensor::{FeatureMap, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads {
    pub input: FeatureMap,
    pub kernel: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    out_c: usize,
    kh: usize,
    kw: usize,
    in_c: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

fn geometry(input: &FeatureMap, kernel: &Tensor, stride: usize, padding: usize) -> Result<Geometry> {
    let shape = kernel.shape();
    if shape.len() != 4 {
        return Err(Error::shape(format!("conv kernel must be rank 4, got {shape:?}")));
    }
    let (out_c, kh, kw, in_c) = (shape[0], shape[1], shape[2], shape[3]);
    if in_c != input.c() {
        return Err(Error::shape(format!(
            "kernel expects {in_c} input channels, map has {}",
            input.c()
        )));
    }
    if stride == 0 {
        return Err(Error::shape("conv stride must be positive"));
    }
    let (ph, pw) = (input.h() + 2 * padding, input.w() + 2 * padding);
    if kh > ph || kw > pw || kh == 0 || kw == 0 {
        return Err(Error::shape(format!(
            "kernel {kh}x{kw} does not fit padded input {ph}x{pw}"
        )));
    }
    Ok(Geometry {
        out_c,
        kh,
        kw,
        in_c,
        oh: (ph - kh) / stride + 1,
        ow: (pw - kw) / stride + 1,
        stride,
        padding,
    })
}

/// Input coordinate for output position `o` and kernel tap `k`, or `None` in padding.
#[inline]
fn source(o: usize, k: usize, g: &Geometry, extent: usize) -> Option<usize> {
    let pos = (o * g.stride + k).checked_sub(g.padding)?;
    (pos < extent).then_some(pos)
}

pub fn conv2d(
    input: &FeatureMap,
    kernel: &Tensor,
    bias: Option<&[f64]>,
    stride: usize,
    padding: usize,
) -> Result<FeatureMap> {
    let g = geometry(input, kernel, stride, padding)?;
    if let Some(b) = bias {
        if b.len() != g.out_c {
            return Err(Error::shape("conv bias length must equal output channels"));
        }
    }
    let k = kernel.data();
    let x = input.data();
    let mut out = FeatureMap::zeros(g.oh, g.ow, g.out_c);
    let w_in = input.w();
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let base = (oy * g.ow + ox) * g.out_c;
            let acc = &mut out.data_mut()[base..base + g.out_c];
            if let Some(b) = bias {
                acc.copy_from_slice(b);
            }
            for ky in 0..g.kh {
                let Some(iy) = source(oy, ky, &g, input.h()) else { continue };
                for kx in 0..g.kw {
                    let Some(ix) = source(ox, kx, &g, w_in) else { continue };
                    let px = &x[(iy * w_in + ix) * g.in_c..][..g.in_c];
                    for (oc, a) in acc.iter_mut().enumerate() {
                        let kb = ((oc * g.kh + ky) * g.kw + kx) * g.in_c;
                        let taps = &k[kb..kb + g.in_c];
                        *a += taps.iter().zip(px).map(|(t, v)| t * v).sum::<f64>();
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates input, kernel and bias gradients of [`conv2d`] given dL/d(output).
pub fn conv2d_backward_into(
    input: &FeatureMap,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &FeatureMap,
    grad_input: &mut FeatureMap,
    grad_kernel: &mut [f64],
    grad_bias: Option<&mut [f64]>,
) -> Result<()> {
    let g = geometry(input, kernel, stride, padding)?;
    if grad_out.shape() != (g.oh, g.ow, g.out_c) {
        return Err(Error::shape(format!(
            "upstream gradient shape {:?} does not match conv output {:?}",
            grad_out.shape(),
            (g.oh, g.ow, g.out_c)
        )));
    }
    if grad_input.shape() != input.shape() || grad_kernel.len() != kernel.len() {
        return Err(Error::shape("conv backward buffers do not match operands"));
    }
    let k = kernel.data();
    let x = input.data();
    let w_in = input.w();
    let go = grad_out.data();
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let base = (oy * g.ow + ox) * g.out_c;
            let up = &go[base..base + g.out_c];
            for ky in 0..g.kh {
                let Some(iy) = source(oy, ky, &g, input.h()) else { continue };
                for kx in 0..g.kw {
                    let Some(ix) = source(ox, kx, &g, w_in) else { continue };
                    let pix = (iy * w_in + ix) * g.in_c;
                    for (oc, &u) in up.iter().enumerate() {
                        if u == 0.0 {
                            continue;
                        }
                        let kb = ((oc * g.kh + ky) * g.kw + kx) * g.in_c;
                        for ic in 0..g.in_c {
                            grad_kernel[kb + ic] += u * x[pix + ic];
                            grad_input.data_mut()[pix + ic] += u * k[kb + ic];
                        }
                    }
                }
            }
        }
    }
    if let Some(gb) = grad_bias {
        for px in go.chunks(g.out_c) {
            for (b, u) in gb.iter_mut().zip(px) {
                *b += u;
            }
        }
    }
    Ok(())
}

pub fn conv2d_backward(
    input: &FeatureMap,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &FeatureMap,
) -> Result<Conv2dGrads> {
    let mut grads = Conv2dGrads {
        input: FeatureMap::zeros(input.h(), input.w(), input.c()),
        kernel: kernel.zeros_like(),
        bias: vec![0.0; kernel.shape().first().copied().unwrap_or(0)],
    };
    conv2d_backward_into(
        input,
        kernel,
        stride,
        padding,
        grad_out,
        &mut grads.input,
        grads.kernel.data_mut(),
        Some(&mut grads.bias),
    )?;
    Ok(grads)
}
