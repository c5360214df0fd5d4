//! Fully connected layer.
//!
//! The bottleneck weight matrix is 6912x6912, so both passes are written to
//! stream the matrix exactly once in row-major order. Dot products use eight
//! parallel accumulators reduced in a fixed tree so the summation order (and
//! therefore the result) is identical from run to run.

use super::{LayerParams, ShapeError, Tensor};
use crate::scalar::Scalar;

// Wide enough to keep several vector FMA chains in flight; the reduction
// tree is fixed, so summation order (and the result) is build-stable.
const LANES: usize = 32;

#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::ZERO; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = F::ZERO;
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] = acc[l] + acc[l + width];
        }
    }
    acc[0] + tail
}

fn dims<F: Scalar>(params: &LayerParams<F>) -> (usize, usize) {
    let s = params.weights.shape();
    assert_eq!(s.len(), 2, "fc weights must be rank 2");
    (s[1], s[0])
}

/// `out = W * input + b` for rank-1 input.
pub fn fc_forward<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
) -> Result<Tensor<F>, ShapeError> {
    let (in_dim, out_dim) = dims(params);
    if input.rank() != 1 {
        return Err(ShapeError::Rank {
            expected: 1,
            actual: input.rank(),
        });
    }
    if input.len() != in_dim {
        return Err(ShapeError::Length {
            expected: in_dim,
            actual: input.len(),
        });
    }
    let x = input.data();
    let w = params.weights.data();
    let b = params.bias.data();
    let data = (0..out_dim)
        .map(|i| dot(&w[i * in_dim..(i + 1) * in_dim], x) + b[i])
        .collect();
    Tensor::new(&[out_dim], data)
}

/// Backward pass: `grad_W = outer(grad_out, input)`, `grad_b = grad_out`,
/// `grad_in = W^T * grad_out`.
pub fn fc_backward<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, LayerParams<F>), ShapeError> {
    let mut grads = LayerParams {
        weights: Tensor::zeros(params.weights.shape()),
        bias: Tensor::zeros(params.bias.shape()),
    };
    let mut grad_input = Tensor::zeros(input.shape());
    fc_backward_into(input, params, grad_out, &mut grads, Some(&mut grad_input))?;
    Ok((grad_input, grads))
}

/// Buffer-reusing form of [`fc_backward`]; `grads` is overwritten.
pub(crate) fn fc_backward_into<F: Scalar>(
    input: &Tensor<F>,
    params: &LayerParams<F>,
    grad_out: &Tensor<F>,
    grads: &mut LayerParams<F>,
    grad_input: Option<&mut Tensor<F>>,
) -> Result<(), ShapeError> {
    let (in_dim, out_dim) = dims(params);
    if input.len() != in_dim {
        return Err(ShapeError::Length {
            expected: in_dim,
            actual: input.len(),
        });
    }
    if grad_out.len() != out_dim {
        return Err(ShapeError::Length {
            expected: out_dim,
            actual: grad_out.len(),
        });
    }
    debug_assert_eq!(grads.weights.shape(), params.weights.shape());
    let x = input.data();
    let go = grad_out.data();

    grads.bias.data_mut().copy_from_slice(go);

    let gw = grads.weights.data_mut();
    for i in 0..out_dim {
        let g = go[i];
        let row = &mut gw[i * in_dim..(i + 1) * in_dim];
        if g == F::ZERO {
            row.fill(F::ZERO);
        } else {
            for (dst, &xj) in row.iter_mut().zip(x) {
                *dst = g * xj;
            }
        }
    }

    if let Some(grad_input) = grad_input {
        if grad_input.len() != in_dim {
            return Err(ShapeError::Length {
                expected: in_dim,
                actual: grad_input.len(),
            });
        }
        let w = params.weights.data();
        let gi = grad_input.data_mut();
        gi.fill(F::ZERO);
        for i in 0..out_dim {
            let g = go[i];
            if g == F::ZERO {
                continue;
            }
            let row = &w[i * in_dim..(i + 1) * in_dim];
            for (dst, &wj) in gi.iter_mut().zip(row) {
                *dst += g * wj;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use rand::Rng;

    #[test]
    fn identity_weights_pass_input_through() {
        let n = 5;
        let mut params = LayerParams::<f64>::zeros_fc(n, n);
        for i in 0..n {
            params.weights.data_mut()[i * n + i] = 1.0;
        }
        let input = Tensor::from_fn(&[n], |i| i as f64 - 2.0);
        let out = fc_forward(&input, &params).unwrap();
        assert_eq!(out, input);
        // Identity weights: grad_in == grad_out.
        let grad_out = Tensor::from_fn(&[n], |i| (i as f64).cos());
        let (gi, gp) = fc_backward(&input, &params, &grad_out).unwrap();
        assert_eq!(gi, grad_out);
        assert_eq!(gp.bias, grad_out);
    }

    #[test]
    fn bottleneck_dimensions() {
        let params = LayerParams::<f32>::zeros_fc(6912, 6912);
        let input = Tensor::zeros(&[6912]);
        let out = fc_forward(&input, &params).unwrap();
        assert_eq!(out.shape(), &[6912]);
    }

    #[test]
    fn matches_loop_oracle_on_random_case() {
        let mut rng = crate::rng::stream(23, "fc-oracle");
        let input: Tensor<f64> = Tensor::from_fn(&[4], |_| rng.random_range(-1.0..1.0));
        let params = LayerParams {
            weights: Tensor::from_fn(&[3, 4], |_| rng.random_range(-1.0..1.0)),
            bias: Tensor::from_fn(&[3], |_| rng.random_range(-1.0..1.0)),
        };
        let fast = fc_forward(&input, &params).unwrap();
        let naive = reference::fc_reference(&input, &params);
        assert!(fast.max_abs_diff(&naive) <= 1e-12);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = crate::rng::stream(29, "fc-zero");
        let input: Tensor<f64> = Tensor::from_fn(&[6], |_| rng.random_range(-1.0..1.0));
        let params = LayerParams {
            weights: Tensor::from_fn(&[4, 6], |_| rng.random_range(-1.0..1.0)),
            bias: Tensor::zeros(&[4]),
        };
        let grad_out = Tensor::zeros(&[4]);
        let (gi, gp) = fc_backward(&input, &params, &grad_out).unwrap();
        assert!(gi.data().iter().all(|&x| x == 0.0));
        assert!(gp.weights.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let params = LayerParams::<f32>::zeros_fc(4, 3);
        let input = Tensor::zeros(&[5]);
        assert_eq!(
            fc_forward(&input, &params).unwrap_err(),
            ShapeError::Length {
                expected: 4,
                actual: 5
            }
        );
    }
}
