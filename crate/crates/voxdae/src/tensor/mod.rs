//! Dense tensors and the differentiable primitives built on them.
//!
//! A [`Tensor`] is a shape header over a flat row-major buffer. Rank-4
//! activations are laid out `[channels, depth, height, width]` with the last
//! axis fastest; convolution weights are rank-5 `[out, in, f, f, f]`
//! (transposed convolution: `[in, out, f, f, f]`).
//!
//! Every forward operation here has an analytic backward companion, and every
//! optimized kernel has a brute-force twin in [`crate::reference`] that the
//! test suites compare against.

mod activation;
pub(crate) mod conv;
pub(crate) mod deconv;
mod dropout;
pub(crate) mod fc;
mod loss;
mod optim;

pub use activation::{activation_backward, activation_forward, Activation};
pub(crate) use activation::apply_activation_gate;
pub use conv::{conv3d_backward, conv3d_forward};
pub use deconv::{deconv3d_backward, deconv3d_forward};
pub use dropout::{apply_mask, dropout_mask};
pub use fc::{fc_backward, fc_forward};
pub use loss::{bce_loss, mse_loss, LossKind, BCE_EPSILON};
pub use optim::{sgd_momentum_step, sgd_momentum_step_slices};

use crate::scalar::Scalar;
use thiserror::Error;

/// Structured shape/contract violations raised by tensor operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("axis {axis}: expected extent {expected}, got {actual}")]
    Axis {
        axis: usize,
        expected: usize,
        actual: usize,
    },
    #[error("extent of axis {axis} must be at least 1")]
    ZeroExtent { axis: usize },
    #[error("shape {shape:?} implies {product} elements but buffer holds {len}")]
    DataLength {
        shape: Vec<usize>,
        product: usize,
        len: usize,
    },
    #[error("expected rank {expected}, got {actual}")]
    Rank { expected: usize, actual: usize },
    #[error("expected {expected} channels, got {actual}")]
    Channels { expected: usize, actual: usize },
    #[error("spatial edge {edge} is smaller than filter size {filter}")]
    EdgeTooSmall { edge: usize, filter: usize },
    #[error("expected length {expected}, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("spatial extents must be cubic, got {extents:?}")]
    NotCubic { extents: Vec<usize> },
    #[error("operation requires a {expected:?} spec, got {actual:?}")]
    KindMismatch { expected: ConvKind, actual: ConvKind },
}

/// Dense real tensor: row-major data plus shape metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Builds a tensor, checking `product(shape) == data.len()` and that all
    /// extents are at least 1.
    pub fn new(shape: &[usize], data: Vec<F>) -> Result<Self, ShapeError> {
        for (axis, &e) in shape.iter().enumerate() {
            if e == 0 {
                return Err(ShapeError::ZeroExtent { axis });
            }
        }
        let product: usize = shape.iter().product();
        if product != data.len() {
            return Err(ShapeError::DataLength {
                shape: shape.to_vec(),
                product,
                len: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        assert!(shape.iter().all(|&e| e >= 1), "zero extent in {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::ZERO; n],
        }
    }

    pub fn filled(shape: &[usize], value: F) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> F) -> Self {
        let n: usize = shape.iter().product();
        assert!(shape.iter().all(|&e| e >= 1), "zero extent in {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|i| f(i)).collect(),
        }
    }

    pub fn scalar(value: F) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
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

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor<F>, ShapeError> {
        Tensor::new(shape, self.data.clone())
    }

    /// Same-shape check used by elementwise operations.
    pub fn same_shape(&self, other: &Tensor<F>) -> Result<(), ShapeError> {
        if self.shape.len() != other.shape.len() {
            return Err(ShapeError::Rank {
                expected: self.shape.len(),
                actual: other.shape.len(),
            });
        }
        for (axis, (&a, &b)) in self.shape.iter().zip(&other.shape).enumerate() {
            if a != b {
                return Err(ShapeError::Axis {
                    axis,
                    expected: a,
                    actual: b,
                });
            }
        }
        Ok(())
    }

    /// For rank-4 `[c, d, h, w]`: the flat index of `(c, z, y, x)`.
    #[inline]
    pub fn idx4(&self, c: usize, z: usize, y: usize, x: usize) -> usize {
        debug_assert_eq!(self.rank(), 4);
        ((c * self.shape[1] + z) * self.shape[2] + y) * self.shape[3] + x
    }

    /// Maximum absolute difference against another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor<F>) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().to_f64())
            .fold(0.0, f64::max)
    }

    /// Converts elementwise to another precision.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| G::from_f64(x.to_f64())).collect(),
        }
    }
}

/// Validates a rank-4 `[channels, e, e, e]` activation against an expected
/// channel count, returning the spatial edge.
pub(crate) fn check_activation<F: Scalar>(
    t: &Tensor<F>,
    channels: usize,
) -> Result<usize, ShapeError> {
    if t.rank() != 4 {
        return Err(ShapeError::Rank {
            expected: 4,
            actual: t.rank(),
        });
    }
    if t.shape()[0] != channels {
        return Err(ShapeError::Channels {
            expected: channels,
            actual: t.shape()[0],
        });
    }
    let (d, h, w) = (t.shape()[1], t.shape()[2], t.shape()[3]);
    if d != h || h != w {
        return Err(ShapeError::NotCubic {
            extents: vec![d, h, w],
        });
    }
    Ok(d)
}

/// Whether a convolution spec describes the forward or the transposed map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Convolution,
    Transposed,
}

/// Geometry of one (de)convolution layer: cubic filter edge `f`, stride `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub filter: usize,
    pub stride: usize,
    pub kind: ConvKind,
}

impl ConvSpec {
    pub fn conv(in_channels: usize, out_channels: usize, filter: usize, stride: usize) -> Self {
        assert!(filter >= 1 && stride >= 1, "filter and stride must be >= 1");
        ConvSpec {
            in_channels,
            out_channels,
            filter,
            stride,
            kind: ConvKind::Convolution,
        }
    }

    pub fn transposed(
        in_channels: usize,
        out_channels: usize,
        filter: usize,
        stride: usize,
    ) -> Self {
        assert!(filter >= 1 && stride >= 1, "filter and stride must be >= 1");
        ConvSpec {
            in_channels,
            out_channels,
            filter,
            stride,
            kind: ConvKind::Transposed,
        }
    }

    /// Output spatial edge for an input edge `x`.
    ///
    /// Convolution: `floor((x - f) / d) + 1` (requires `x >= f`).
    /// Transposed: `(x - 1) * d + f`.
    pub fn out_edge(&self, x: usize) -> Result<usize, ShapeError> {
        match self.kind {
            ConvKind::Convolution => {
                if x < self.filter {
                    Err(ShapeError::EdgeTooSmall {
                        edge: x,
                        filter: self.filter,
                    })
                } else {
                    Ok((x - self.filter) / self.stride + 1)
                }
            }
            ConvKind::Transposed => Ok((x - 1) * self.stride + self.filter),
        }
    }

    /// Weight tensor shape for this spec: `[out, in, f, f, f]` for
    /// convolution, `[in, out, f, f, f]` for transposed convolution.
    pub fn weight_shape(&self) -> [usize; 5] {
        let f = self.filter;
        match self.kind {
            ConvKind::Convolution => [self.out_channels, self.in_channels, f, f, f],
            ConvKind::Transposed => [self.in_channels, self.out_channels, f, f, f],
        }
    }

    pub(crate) fn expect_kind(&self, expected: ConvKind) -> Result<(), ShapeError> {
        if self.kind != expected {
            Err(ShapeError::KindMismatch {
                expected,
                actual: self.kind,
            })
        } else {
            Ok(())
        }
    }
}

/// Weights plus bias of one layer.
///
/// Convolution: weights `[out, in, f, f, f]`, bias `[out]`.
/// Transposed convolution: weights `[in, out, f, f, f]`, bias `[out]`.
/// Fully connected: weights `[out_dim, in_dim]`, bias `[out_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub weights: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Scalar> LayerParams<F> {
    pub fn zeros_conv(spec: &ConvSpec) -> Self {
        LayerParams {
            weights: Tensor::zeros(&spec.weight_shape()),
            bias: Tensor::zeros(&[spec.out_channels]),
        }
    }

    pub fn zeros_fc(in_dim: usize, out_dim: usize) -> Self {
        LayerParams {
            weights: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn zeros_like(other: &LayerParams<F>) -> Self {
        LayerParams {
            weights: Tensor::zeros(other.weights.shape()),
            bias: Tensor::zeros(other.bias.shape()),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn check_conv(&self, spec: &ConvSpec) -> Result<(), ShapeError> {
        let expected = spec.weight_shape();
        if self.weights.shape() != expected {
            return Err(ShapeError::DataLength {
                shape: self.weights.shape().to_vec(),
                product: expected.iter().product(),
                len: self.weights.len(),
            });
        }
        if self.bias.len() != spec.out_channels {
            return Err(ShapeError::Length {
                expected: spec.out_channels,
                actual: self.bias.len(),
            });
        }
        Ok(())
    }
}

/// `c = a_mat * b_mat + beta * c` over row-major buffers.
///
/// `a` holds an `m x k` matrix (or `k x m` when `a_trans`), `b` a `k x n`
/// matrix (or `n x k` when `b_trans`), `c` is `m x n`.
pub(crate) fn gemm_into<F: Scalar>(
    c: &mut [F],
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    a_trans: bool,
    b: &[F],
    b_trans: bool,
    beta: F,
) {
    assert_eq!(a.len(), m * k, "lhs buffer size");
    assert_eq!(b.len(), k * n, "rhs buffer size");
    assert_eq!(c.len(), m * n, "out buffer size");
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            F::ONE,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_invariants() {
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert_eq!(
            Tensor::<f32>::new(&[2, 3], vec![0.0; 5]),
            Err(ShapeError::DataLength {
                shape: vec![2, 3],
                product: 6,
                len: 5
            })
        );
        assert_eq!(
            Tensor::<f32>::new(&[2, 0], vec![]),
            Err(ShapeError::ZeroExtent { axis: 1 })
        );
    }

    #[test]
    fn conv_shape_law_paper_pipeline() {
        // Encoder: 30 -> 8 -> 3.
        let c1 = ConvSpec::conv(1, 64, 9, 3);
        let c2 = ConvSpec::conv(64, 256, 4, 2);
        assert_eq!(c1.out_edge(30).unwrap(), 8);
        assert_eq!(c2.out_edge(8).unwrap(), 3);
        // Decoder: 3 -> 9 -> 30.
        let d1 = ConvSpec::transposed(256, 64, 5, 2);
        let d2 = ConvSpec::transposed(64, 1, 6, 3);
        assert_eq!(d1.out_edge(3).unwrap(), 9);
        assert_eq!(d2.out_edge(9).unwrap(), 30);
    }

    #[test]
    fn conv_edge_too_small_is_an_error() {
        let spec = ConvSpec::conv(1, 1, 5, 1);
        assert_eq!(
            spec.out_edge(4),
            Err(ShapeError::EdgeTooSmall { edge: 4, filter: 5 })
        );
    }

    #[test]
    fn gemm_matches_hand_product() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        gemm_into(&mut c, 2, 2, 2, &a, false, &b, false, 0.0);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        // Transposed lhs: a^T * b.
        let mut ct = [0.0f64; 4];
        gemm_into(&mut ct, 2, 2, 2, &a, true, &b, false, 0.0);
        assert_eq!(ct, [26.0, 30.0, 38.0, 44.0]);
    }
}
