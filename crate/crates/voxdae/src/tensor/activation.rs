//! Elementwise activations.

use super::{ShapeError, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Numerically stable logistic function; output is in (0, 1).
#[inline]
pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::ZERO {
        F::ONE / (F::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::ONE + e)
    }
}

pub fn activation_forward<F: Scalar>(input: &Tensor<F>, kind: Activation) -> Tensor<F> {
    let mut out = input.clone();
    match kind {
        Activation::Relu => {
            for v in out.data_mut() {
                if *v < F::ZERO {
                    *v = F::ZERO;
                }
            }
        }
        Activation::Sigmoid => {
            for v in out.data_mut() {
                *v = sigmoid(*v);
            }
        }
    }
    out
}

/// Backward pass from the cached forward *output*:
/// relu' = 1 where output > 0; sigmoid' = y * (1 - y).
pub fn activation_backward<F: Scalar>(
    output: &Tensor<F>,
    grad_out: &Tensor<F>,
    kind: Activation,
) -> Result<Tensor<F>, ShapeError> {
    output.same_shape(grad_out)?;
    let mut grad = grad_out.clone();
    apply_activation_gate(output, grad.data_mut(), kind);
    Ok(grad)
}

/// In-place variant used on the training hot path: multiplies `grad` by the
/// activation derivative taken at the cached output.
pub(crate) fn apply_activation_gate<F: Scalar>(output: &Tensor<F>, grad: &mut [F], kind: Activation) {
    debug_assert_eq!(output.len(), grad.len());
    match kind {
        Activation::Relu => {
            for (g, &y) in grad.iter_mut().zip(output.data()) {
                if y <= F::ZERO {
                    *g = F::ZERO;
                }
            }
        }
        Activation::Sigmoid => {
            for (g, &y) in grad.iter_mut().zip(output.data()) {
                *g *= y * (F::ONE - y);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::new(&[3], vec![-1.0f64, 0.0, 2.0]).unwrap();
        let y = activation_forward(&x, Activation::Relu);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_values() {
        let x = Tensor::new(&[3], vec![0.0f64, 10.0, -10.0]).unwrap();
        let y = activation_forward(&x, Activation::Sigmoid);
        assert_eq!(y.data()[0], 0.5);
        assert!(y.data()[1] > 0.5 && y.data()[1] < 1.0);
        assert!(y.data()[2] > 0.0 && y.data()[2] < 0.5);
    }

    #[test]
    fn sigmoid_gradient_uses_output() {
        let x = Tensor::new(&[1], vec![0.0f64]).unwrap();
        let y = activation_forward(&x, Activation::Sigmoid);
        let g = activation_backward(&y, &Tensor::scalar(1.0), Activation::Sigmoid).unwrap();
        assert!((g.data()[0] - 0.25).abs() < 1e-12);
    }
}
