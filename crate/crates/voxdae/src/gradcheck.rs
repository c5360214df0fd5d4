//! Finite-difference verification of every analytic backward pass.
//!
//! Each check builds a small randomized instance of one layer, picks a fixed
//! random projection vector `r`, and treats `sum(r * forward(...))` as a
//! scalar objective. The analytic gradient of that objective is exactly the
//! layer backward pass evaluated with upstream gradient `r`; the numeric
//! gradient comes from [`crate::reference::central_difference_grad`]. The
//! returned value is the worst relative error across inputs, weights and
//! biases.
//!
//! Run these at 64-bit; central differences at 32-bit drown in round-off.

use crate::reference::{central_difference_grad, max_relative_error};
use crate::scalar::Scalar;
use crate::tensor::{
    activation_backward, activation_forward, bce_loss, conv3d_backward, conv3d_forward,
    deconv3d_backward, deconv3d_forward, fc_backward, fc_forward, mse_loss, Activation, ConvKind,
    ConvSpec, LayerParams, Tensor,
};
use rand::Rng;

/// Relative-error floor: gradient entries below this magnitude are compared
/// absolutely, to keep near-zero pairs from dominating the statistic.
pub const REL_FLOOR: f64 = 1e-5;

fn random_tensor<F: Scalar>(shape: &[usize], rng: &mut impl Rng) -> Tensor<F> {
    Tensor::from_fn(shape, |_| F::from_f64(rng.random_range(-1.0..1.0)))
}

fn weighted_sum<F: Scalar>(out: &Tensor<F>, r: &Tensor<F>) -> F {
    out.data().iter().zip(r.data()).map(|(&a, &b)| a * b).sum()
}

/// Gradient check for [`conv3d_forward`] / [`conv3d_backward`] or their
/// transposed counterparts, depending on `spec.kind`.
pub fn check_conv_layer<F: Scalar>(spec: &ConvSpec, edge: usize, eps: F, seed: u64) -> f64 {
    let mut rng = crate::rng::stream_indexed(seed, "gradcheck-conv", &[edge as u64]);
    let input: Tensor<F> = random_tensor(&[spec.in_channels, edge, edge, edge], &mut rng);
    let params = LayerParams {
        weights: random_tensor(&spec.weight_shape(), &mut rng),
        bias: random_tensor(&[spec.out_channels], &mut rng),
    };
    let forward = |inp: &Tensor<F>, par: &LayerParams<F>| match spec.kind {
        ConvKind::Convolution => conv3d_forward(inp, par, spec).unwrap(),
        ConvKind::Transposed => deconv3d_forward(inp, par, spec).unwrap(),
    };
    let out = forward(&input, &params);
    let r: Tensor<F> = random_tensor(out.shape(), &mut rng);

    let (grad_input, grad_params) = match spec.kind {
        ConvKind::Convolution => conv3d_backward(&input, &params, spec, &r).unwrap(),
        ConvKind::Transposed => deconv3d_backward(&input, &params, spec, &r).unwrap(),
    };

    let input_shape = input.shape().to_vec();
    let mut x = input.data().to_vec();
    let fd_input = central_difference_grad(
        &mut |v: &[F]| {
            let t = Tensor::new(&input_shape, v.to_vec()).unwrap();
            weighted_sum(&forward(&t, &params), &r)
        },
        &mut x,
        eps,
    );

    let w_shape = params.weights.shape().to_vec();
    let mut w = params.weights.data().to_vec();
    let fd_weights = central_difference_grad(
        &mut |v: &[F]| {
            let par = LayerParams {
                weights: Tensor::new(&w_shape, v.to_vec()).unwrap(),
                bias: params.bias.clone(),
            };
            weighted_sum(&forward(&input, &par), &r)
        },
        &mut w,
        eps,
    );

    let mut b = params.bias.data().to_vec();
    let fd_bias = central_difference_grad(
        &mut |v: &[F]| {
            let par = LayerParams {
                weights: params.weights.clone(),
                bias: Tensor::new(&[spec.out_channels], v.to_vec()).unwrap(),
            };
            weighted_sum(&forward(&input, &par), &r)
        },
        &mut b,
        eps,
    );

    max_relative_error(grad_input.data(), &fd_input, REL_FLOOR)
        .max(max_relative_error(grad_params.weights.data(), &fd_weights, REL_FLOOR))
        .max(max_relative_error(grad_params.bias.data(), &fd_bias, REL_FLOOR))
}

/// Gradient check for the fully connected layer.
pub fn check_fc_layer<F: Scalar>(in_dim: usize, out_dim: usize, eps: F, seed: u64) -> f64 {
    let mut rng = crate::rng::stream_indexed(seed, "gradcheck-fc", &[in_dim as u64, out_dim as u64]);
    let input: Tensor<F> = random_tensor(&[in_dim], &mut rng);
    let params = LayerParams {
        weights: random_tensor(&[out_dim, in_dim], &mut rng),
        bias: random_tensor(&[out_dim], &mut rng),
    };
    let r: Tensor<F> = random_tensor(&[out_dim], &mut rng);
    let (grad_input, grad_params) = fc_backward(&input, &params, &r).unwrap();

    let mut x = input.data().to_vec();
    let fd_input = central_difference_grad(
        &mut |v: &[F]| {
            let t = Tensor::new(&[in_dim], v.to_vec()).unwrap();
            weighted_sum(&fc_forward(&t, &params).unwrap(), &r)
        },
        &mut x,
        eps,
    );

    let mut w = params.weights.data().to_vec();
    let fd_weights = central_difference_grad(
        &mut |v: &[F]| {
            let par = LayerParams {
                weights: Tensor::new(&[out_dim, in_dim], v.to_vec()).unwrap(),
                bias: params.bias.clone(),
            };
            weighted_sum(&fc_forward(&input, &par).unwrap(), &r)
        },
        &mut w,
        eps,
    );

    let mut b = params.bias.data().to_vec();
    let fd_bias = central_difference_grad(
        &mut |v: &[F]| {
            let par = LayerParams {
                weights: params.weights.clone(),
                bias: Tensor::new(&[out_dim], v.to_vec()).unwrap(),
            };
            weighted_sum(&fc_forward(&input, &par).unwrap(), &r)
        },
        &mut b,
        eps,
    );

    max_relative_error(grad_input.data(), &fd_input, REL_FLOOR)
        .max(max_relative_error(grad_params.weights.data(), &fd_weights, REL_FLOOR))
        .max(max_relative_error(grad_params.bias.data(), &fd_bias, REL_FLOOR))
}

/// Gradient check for an elementwise activation. Inputs are kept away from
/// the ReLU kink, where the one-sided derivative makes central differences
/// meaningless.
pub fn check_activation<F: Scalar>(kind: Activation, n: usize, eps: F, seed: u64) -> f64 {
    let mut rng = crate::rng::stream_indexed(seed, "gradcheck-act", &[n as u64]);
    let input: Tensor<F> = Tensor::from_fn(&[n], |_| {
        let mut v: f64 = rng.random_range(-1.0..1.0);
        if v.abs() < 0.05 {
            v = 0.1 * v.signum() + v;
        }
        F::from_f64(v)
    });
    let r: Tensor<F> = random_tensor(&[n], &mut rng);
    let out = activation_forward(&input, kind);
    let analytic = activation_backward(&out, &r, kind).unwrap();

    let mut x = input.data().to_vec();
    let fd = central_difference_grad(
        &mut |v: &[F]| {
            let t = Tensor::new(&[n], v.to_vec()).unwrap();
            weighted_sum(&activation_forward(&t, kind), &r)
        },
        &mut x,
        eps,
    );
    max_relative_error(analytic.data(), &fd, REL_FLOOR)
}

/// Gradient check for a loss function's gradient with respect to its
/// prediction argument. Probabilities stay inside (0.1, 0.9), clear of the
/// epsilon clip.
pub fn check_loss<F: Scalar>(kind: crate::tensor::LossKind, n: usize, eps: F, seed: u64) -> f64 {
    let mut rng = crate::rng::stream_indexed(seed, "gradcheck-loss", &[n as u64]);
    let prob: Tensor<F> = Tensor::from_fn(&[n], |_| F::from_f64(rng.random_range(0.1..0.9)));
    let target: Tensor<F> = Tensor::from_fn(&[n], |_| {
        if rng.random::<f64>() < 0.5 {
            F::ONE
        } else {
            F::ZERO
        }
    });
    let run = |p: &Tensor<F>| match kind {
        crate::tensor::LossKind::CrossEntropy => bce_loss(p, &target).unwrap(),
        crate::tensor::LossKind::MeanSquared => mse_loss(p, &target).unwrap(),
    };
    let (_, analytic) = run(&prob);
    let mut x = prob.data().to_vec();
    let fd = central_difference_grad(
        &mut |v: &[F]| {
            let t = Tensor::new(&[n], v.to_vec()).unwrap();
            run(&t).0
        },
        &mut x,
        eps,
    );
    max_relative_error(analytic.data(), &fd, REL_FLOOR)
}
