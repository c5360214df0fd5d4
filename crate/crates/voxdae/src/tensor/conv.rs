//! 3D convolution: im2col lowering plus a blocked matrix product.
//!
//! The lowering turns each output position into a column of the unrolled
//! input window, so the whole layer is one `[out_ch, K] x [K, positions]`
//! product with `K = in_ch * f^3`. The brute-force twin of this kernel lives
//! in [`crate::reference::conv3d_reference`].

use super::{check_activation, gemm_into, ConvKind, ConvSpec, LayerParams, ShapeError, Tensor};
use crate::scalar::Scalar;

/// Gathers input windows into a `[channels * f^3, out_edge^3]` column matrix.
///
/// Row `((ci * f + kz) * f + ky) * f + kx`, column `(oz * O + oy) * O + ox`
/// holds `input[ci, oz*d + kz, oy*d + ky, ox*d + kx]`.
pub(crate) fn im2col<F: Scalar>(
    input: &[F],
    channels: usize,
    edge: usize,
    filter: usize,
    stride: usize,
    out_edge: usize,
    cols: &mut [F],
) {
    let positions = out_edge * out_edge * out_edge;
    debug_assert_eq!(input.len(), channels * edge * edge * edge);
    debug_assert_eq!(cols.len(), channels * filter * filter * filter * positions);
    let plane = edge * edge;
    let mut row = 0;
    for ci in 0..channels {
        let chan = &input[ci * edge * plane..(ci + 1) * edge * plane];
        for kz in 0..filter {
            for ky in 0..filter {
                for kx in 0..filter {
                    let dst = &mut cols[row * positions..(row + 1) * positions];
                    let mut p = 0;
                    for oz in 0..out_edge {
                        let z = oz * stride + kz;
                        for oy in 0..out_edge {
                            let y = oy * stride + ky;
                            let src = &chan[z * plane + y * edge + kx..];
                            if stride == 1 {
                                dst[p..p + out_edge].copy_from_slice(&src[..out_edge]);
                            } else {
                                for ox in 0..out_edge {
                                    dst[p + ox] = src[ox * stride];
                                }
                            }
                            p += out_edge;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Scatter-adds a column matrix back into a `[channels, dst_edge^3]` volume:
/// the exact adjoint of [`im2col`]. Rows and columns are walked in a fixed
/// order so overlap sums are deterministic.
pub(crate) fn col2im_add<F: Scalar>(
    cols: &[F],
    channels: usize,
    filter: usize,
    stride: usize,
    pos_edge: usize,
    dst: &mut [F],
    dst_edge: usize,
) {
    let positions = pos_edge * pos_edge * pos_edge;
    debug_assert_eq!(cols.len(), channels * filter * filter * filter * positions);
    debug_assert_eq!(dst.len(), channels * dst_edge * dst_edge * dst_edge);
    let plane = dst_edge * dst_edge;
    let mut row = 0;
    for ci in 0..channels {
        let chan = &mut dst[ci * dst_edge * plane..(ci + 1) * dst_edge * plane];
        for kz in 0..filter {
            for ky in 0..filter {
                for kx in 0..filter {
                    let src = &cols[row * positions..(row + 1) * positions];
                    let mut p = 0;
                    for oz in 0..pos_edge {
                        let z = oz * stride + kz;
                        for oy in 0..pos_edge {
                            let y = oy * stride + ky;
                            let base = z * plane + y * dst_edge + kx;
                            if stride == 1 {
                                let out = &mut chan[base..base + pos_edge];
                                for (o, &s) in out.iter_mut().zip(&src[p..p + pos_edge]) {
                                    *o += s;
                                }
                            } else {
                                for ox in 0..pos_edge {
                                    chan[base + ox * stride] += src[p + ox];
                                }
                            }
                            p += pos_edge;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn validate<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    spec: &ConvSpec,
) -> Result<(usize, usize), ShapeError> {
    spec.expect_kind(ConvKind::Convolution)?;
    params.check_conv(spec)?;
    let edge = check_activation(input, spec.in_channels)?;
    let out_edge = spec.out_edge(edge)?;
    Ok((edge, out_edge))
}

/// Strided valid 3D convolution.
///
/// `output[c, p] = bias[c] + sum over the input window at `p * d` of the
/// elementwise product with `weights[c]`. Output edge is
/// `floor((x - f) / d) + 1`.
pub fn conv3d_forward<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    spec: &ConvSpec,
) -> Result<Tensor<F>, ShapeError> {
    let (edge, out_edge) = validate(input, params, spec)?;
    let k = spec.in_channels * spec.filter.pow(3);
    let positions = out_edge * out_edge * out_edge;
    let mut cols = vec![F::ZERO; k * positions];
    im2col(
        input.data(),
        spec.in_channels,
        edge,
        spec.filter,
        spec.stride,
        out_edge,
        &mut cols,
    );
    let mut out = Tensor::zeros(&[spec.out_channels, out_edge, out_edge, out_edge]);
    gemm_into(
        out.data_mut(),
        spec.out_channels,
        k,
        positions,
        params.weights.data(),
        false,
        &cols,
        false,
        F::ZERO,
    );
    for co in 0..spec.out_channels {
        let b = params.bias.data()[co];
        for v in &mut out.data_mut()[co * positions..(co + 1) * positions] {
            *v += b;
        }
    }
    Ok(out)
}

/// Backward pass of [`conv3d_forward`]: gradients with respect to the input,
/// the weights and the bias, for upstream gradient `grad_out`.
pub fn conv3d_backward<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    spec: &ConvSpec,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, LayerParams<F>), ShapeError> {
    let mut grads = LayerParams::zeros_conv(spec);
    let mut grad_input = Tensor::zeros(input.shape());
    conv3d_backward_into(input, params, spec, grad_out, &mut grads, Some(&mut grad_input))?;
    Ok((grad_input, grads))
}

/// Buffer-reusing form of [`conv3d_backward`]. `grads` is overwritten; pass
/// `None` for `grad_input` when the upstream gradient is not needed (first
/// layer of a network).
pub(crate) fn conv3d_backward_into<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    spec: &ConvSpec,
    grad_out: &Tensor<F>,
    grads: &mut LayerParams<F>,
    grad_input: Option<&mut Tensor<F>>,
) -> Result<(), ShapeError> {
    let (edge, out_edge) = validate(input, params, spec)?;
    let got = check_activation(grad_out, spec.out_channels)?;
    if got != out_edge {
        return Err(ShapeError::Axis {
            axis: 1,
            expected: out_edge,
            actual: got,
        });
    }
    debug_assert_eq!(grads.weights.shape(), params.weights.shape());
    let k = spec.in_channels * spec.filter.pow(3);
    let positions = out_edge * out_edge * out_edge;

    for co in 0..spec.out_channels {
        let mut acc = F::ZERO;
        for &g in &grad_out.data()[co * positions..(co + 1) * positions] {
            acc += g;
        }
        grads.bias.data_mut()[co] = acc;
    }

    let mut cols = vec![F::ZERO; k * positions];
    im2col(
        input.data(),
        spec.in_channels,
        edge,
        spec.filter,
        spec.stride,
        out_edge,
        &mut cols,
    );
    // dW[co, r] = sum_p grad_out[co, p] * cols[r, p]
    gemm_into(
        grads.weights.data_mut(),
        spec.out_channels,
        positions,
        k,
        grad_out.data(),
        false,
        &cols,
        true,
        F::ZERO,
    );

    if let Some(grad_input) = grad_input {
        input.same_shape(grad_input)?;
        // dcols[r, p] = sum_co W[co, r] * grad_out[co, p], then scatter-add.
        let mut dcols = cols;
        gemm_into(
            &mut dcols,
            k,
            spec.out_channels,
            positions,
            params.weights.data(),
            true,
            grad_out.data(),
            false,
            F::ZERO,
        );
        grad_input.data_mut().fill(F::ZERO);
        col2im_add(
            &dcols,
            spec.in_channels,
            spec.filter,
            spec.stride,
            out_edge,
            grad_input.data_mut(),
            edge,
        );
    }
    Ok(())
}
