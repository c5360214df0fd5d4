//! Brute-force reference implementations of the numeric kernels.
//!
//! Everything here is a direct transcription of the operation definitions:
//! nested loops, no lowering, no shared code with the optimized paths in
//! [`crate::tensor`]. The test suites and [`crate::gradcheck`] compare the
//! fast kernels against these. Do not call them from production code paths.

use crate::scalar::Scalar;
use crate::tensor::{ConvKind, ConvSpec, LayerParams, Tensor};

/// Direct triple-loop 3D convolution.
pub fn conv3d_reference<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    spec: &ConvSpec,
) -> Tensor<F> {
    assert_eq!(spec.kind, ConvKind::Convolution);
    let edge = input.shape()[1];
    let f = spec.filter;
    let d = spec.stride;
    let out_edge = (edge - f) / d + 1;
    let mut out = Tensor::zeros(&[spec.out_channels, out_edge, out_edge, out_edge]);
    for co in 0..spec.out_channels {
        for oz in 0..out_edge {
            for oy in 0..out_edge {
                for ox in 0..out_edge {
                    let mut acc = params.bias.data()[co];
                    for ci in 0..spec.in_channels {
                        for kz in 0..f {
                            for ky in 0..f {
                                for kx in 0..f {
                                    let w_idx =
                                        (((co * spec.in_channels + ci) * f + kz) * f + ky) * f + kx;
                                    let i_idx =
                                        input.idx4(ci, oz * d + kz, oy * d + ky, ox * d + kx);
                                    acc += params.weights.data()[w_idx] * input.data()[i_idx];
                                }
                            }
                        }
                    }
                    let o_idx = out.idx4(co, oz, oy, ox);
                    out.data_mut()[o_idx] = acc;
                }
            }
        }
    }
    out
}

/// Direct scatter 3D transposed convolution.
pub fn deconv3d_reference<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    spec: &ConvSpec,
) -> Tensor<F> {
    assert_eq!(spec.kind, ConvKind::Transposed);
    let edge = input.shape()[1];
    let f = spec.filter;
    let d = spec.stride;
    let out_edge = (edge - 1) * d + f;
    let mut out = Tensor::zeros(&[spec.out_channels, out_edge, out_edge, out_edge]);
    for co in 0..spec.out_channels {
        let b = params.bias.data()[co];
        let positions = out_edge * out_edge * out_edge;
        for v in &mut out.data_mut()[co * positions..(co + 1) * positions] {
            *v = b;
        }
    }
    for ci in 0..spec.in_channels {
        for iz in 0..edge {
            for iy in 0..edge {
                for ix in 0..edge {
                    let x = input.data()[input.idx4(ci, iz, iy, ix)];
                    for co in 0..spec.out_channels {
                        for kz in 0..f {
                            for ky in 0..f {
                                for kx in 0..f {
                                    let w_idx =
                                        (((ci * spec.out_channels + co) * f + kz) * f + ky) * f + kx;
                                    let o_idx =
                                        out.idx4(co, iz * d + kz, iy * d + ky, ix * d + kx);
                                    out.data_mut()[o_idx] += x * params.weights.data()[w_idx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Loop-by-loop matrix-vector product.
pub fn fc_reference<F: Scalar>(input: &Tensor<F>, params: &LayerParams<F>) -> Tensor<F> {
    let out_dim = params.weights.shape()[0];
    let in_dim = params.weights.shape()[1];
    assert_eq!(input.len(), in_dim);
    let mut out = Tensor::zeros(&[out_dim]);
    for i in 0..out_dim {
        let mut acc = params.bias.data()[i];
        for j in 0..in_dim {
            acc += params.weights.data()[i * in_dim + j] * input.data()[j];
        }
        out.data_mut()[i] = acc;
    }
    out
}

/// Central finite-difference gradient of a scalar objective `f` at `x`.
/// `x` is perturbed in place and restored before returning.
pub fn central_difference_grad<F: Scalar>(
    f: &mut dyn FnMut(&[F]) -> F,
    x: &mut [F],
    eps: F,
) -> Vec<F> {
    let two = F::from_f64(2.0);
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let saved = x[i];
        x[i] = saved + eps;
        let plus = f(x);
        x[i] = saved - eps;
        let minus = f(x);
        x[i] = saved;
        grad.push((plus - minus) / (two * eps));
    }
    grad
}

/// Maximum relative error between two gradient vectors.
///
/// Per element: `|a - b| / max(|a|, |b|, floor)` with a small floor so that
/// pairs of near-zero entries do not dominate the statistic.
pub fn max_relative_error<F: Scalar>(a: &[F], b: &[F], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut worst = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let xa = x.to_f64();
        let ya = y.to_f64();
        let denom = xa.abs().max(ya.abs()).max(floor);
        worst = worst.max((xa - ya).abs() / denom);
    }
    worst
}
