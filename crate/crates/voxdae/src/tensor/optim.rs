//! Stochastic gradient descent with classical (heavy-ball) momentum.

use super::Tensor;
use crate::scalar::Scalar;

/// One momentum update over raw slices:
/// `v <- mu * v - lr * g; w <- w + v`, elementwise, in a single pass.
pub fn sgd_momentum_step_slices<F: Scalar>(w: &mut [F], g: &[F], v: &mut [F], lr: F, mu: F) {
    assert_eq!(w.len(), g.len(), "gradient length");
    assert_eq!(w.len(), v.len(), "velocity length");
    for i in 0..w.len() {
        let nv = mu * v[i] - lr * g[i];
        v[i] = nv;
        w[i] += nv;
    }
}

/// One momentum update for a parameter tensor and its velocity.
pub fn sgd_momentum_step<F: Scalar>(
    param: &mut Tensor<F>,
    grad: &Tensor<F>,
    velocity: &mut Tensor<F>,
    lr: F,
    mu: F,
) {
    assert_eq!(param.shape(), grad.shape(), "gradient shape");
    assert_eq!(param.shape(), velocity.shape(), "velocity shape");
    sgd_momentum_step_slices(param.data_mut(), grad.data(), velocity.data_mut(), lr, mu);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut w = Tensor::scalar(1.0f64);
        let mut v = Tensor::scalar(0.0f64);
        sgd_momentum_step(&mut w, &Tensor::scalar(1.0), &mut v, 0.1, 0.9);
        assert!((w.data()[0] - 0.9).abs() < 1e-15);
        assert!((v.data()[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn momentum_compounds_on_second_step() {
        // v1 = -0.1, v2 = 0.9*(-0.1) - 0.1 = -0.19, so the second step moves
        // the weight by -0.19.
        let mut w = Tensor::scalar(0.0f64);
        let mut v = Tensor::scalar(0.0f64);
        let g = Tensor::scalar(1.0f64);
        sgd_momentum_step(&mut w, &g, &mut v, 0.1, 0.9);
        let after_first = w.data()[0];
        sgd_momentum_step(&mut w, &g, &mut v, 0.1, 0.9);
        assert!((w.data()[0] - after_first + 0.19).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_zero_velocity_is_a_fixed_point() {
        let mut w = Tensor::scalar(3.5f32);
        let mut v = Tensor::scalar(0.0f32);
        sgd_momentum_step(&mut w, &Tensor::scalar(0.0), &mut v, 0.1, 0.9);
        assert_eq!(w.data()[0], 3.5);
        assert_eq!(v.data()[0], 0.0);
    }
}
