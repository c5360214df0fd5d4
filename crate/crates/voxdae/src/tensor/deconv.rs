//! 3D transposed convolution (deconvolution): the learnable upsampling unit.
//!
//! Each input value scatters its weighted `f^3` filter into the output at
//! stride `d`, overlaps summing; the output edge is `(x - 1) * d + f`. The
//! map is exactly the adjoint of the strided convolution with the same
//! weights, which is what the lowering below exploits: forward is a matrix
//! product followed by [`col2im_add`], backward to the input is [`im2col`]
//! followed by a matrix product.

use super::conv::{col2im_add, im2col};
use super::{check_activation, gemm_into, ConvKind, ConvSpec, LayerParams, ShapeError, Tensor};
use crate::scalar::Scalar;

fn validate<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    spec: &ConvSpec,
) -> Result<(usize, usize), ShapeError> {
    spec.expect_kind(ConvKind::Transposed)?;
    params.check_conv(spec)?;
    let edge = check_activation(input, spec.in_channels)?;
    let out_edge = spec.out_edge(edge)?;
    Ok((edge, out_edge))
}

/// Strided 3D transposed convolution with per-channel bias.
pub fn deconv3d_forward<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    spec: &ConvSpec,
) -> Result<Tensor<F>, ShapeError> {
    let (edge, out_edge) = validate(input, params, spec)?;
    let k = spec.out_channels * spec.filter.pow(3);
    let positions = edge * edge * edge;
    // cols[r, p] = sum_ci W[ci, r] * input[ci, p]
    let mut cols = vec![F::ZERO; k * positions];
    gemm_into(
        &mut cols,
        k,
        spec.in_channels,
        positions,
        params.weights.data(),
        true,
        input.data(),
        false,
        F::ZERO,
    );
    let mut out = Tensor::zeros(&[spec.out_channels, out_edge, out_edge, out_edge]);
    col2im_add(
        &cols,
        spec.out_channels,
        spec.filter,
        spec.stride,
        edge,
        out.data_mut(),
        out_edge,
    );
    let out_positions = out_edge * out_edge * out_edge;
    for co in 0..spec.out_channels {
        let b = params.bias.data()[co];
        for v in &mut out.data_mut()[co * out_positions..(co + 1) * out_positions] {
            *v += b;
        }
    }
    Ok(out)
}

/// Backward pass of [`deconv3d_forward`].
///
/// The gradient with respect to the input is a strided convolution of
/// `grad_out` with the same weights; weight gradients pair each input value
/// with the output window it scattered into.
pub fn deconv3d_backward<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    spec: &ConvSpec,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, LayerParams<F>), ShapeError> {
    let mut grads = LayerParams::zeros_conv(spec);
    let mut grad_input = Tensor::zeros(input.shape());
    deconv3d_backward_into(input, params, spec, grad_out, &mut grads, Some(&mut grad_input))?;
    Ok((grad_input, grads))
}

/// Buffer-reusing form of [`deconv3d_backward`]; `grads` is overwritten.
pub(crate) fn deconv3d_backward_into<F: Scalar>(
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
    let k = spec.out_channels * spec.filter.pow(3);
    let positions = edge * edge * edge;
    let out_positions = out_edge * out_edge * out_edge;

    for co in 0..spec.out_channels {
        let mut acc = F::ZERO;
        for &g in &grad_out.data()[co * out_positions..(co + 1) * out_positions] {
            acc += g;
        }
        grads.bias.data_mut()[co] = acc;
    }

    // Windows of grad_out at stride d line up with input positions exactly:
    // ((x-1)d + f - f)/d + 1 == x.
    let mut gcols = vec![F::ZERO; k * positions];
    im2col(
        grad_out.data(),
        spec.out_channels,
        out_edge,
        spec.filter,
        spec.stride,
        edge,
        &mut gcols,
    );

    // dW[ci, r] = sum_p input[ci, p] * gcols[r, p]
    gemm_into(
        grads.weights.data_mut(),
        spec.in_channels,
        positions,
        k,
        input.data(),
        false,
        &gcols,
        true,
        F::ZERO,
    );

    if let Some(grad_input) = grad_input {
        input.same_shape(grad_input)?;
        // dIn[ci, p] = sum_r W[ci, r] * gcols[r, p]
        gemm_into(
            grad_input.data_mut(),
            spec.in_channels,
            k,
            positions,
            params.weights.data(),
            false,
            &gcols,
            false,
            F::ZERO,
        );
    }
    Ok(())
}
