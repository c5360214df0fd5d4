//! Reconstruction losses over voxel probability grids.

use super::{ShapeError, Tensor};
use crate::scalar::Scalar;

/// Probabilities are clipped to `[BCE_EPSILON, 1 - BCE_EPSILON]` before the
/// logs; keeps 32-bit training away from `ln(0)`.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    CrossEntropy,
    MeanSquared,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::CrossEntropy => write!(f, "bce"),
            LossKind::MeanSquared => write!(f, "mse"),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bce" | "cross_entropy" | "xent" => Ok(LossKind::CrossEntropy),
            "mse" | "mean_squared" => Ok(LossKind::MeanSquared),
            other => Err(format!("unknown loss kind `{other}` (expected bce|mse)")),
        }
    }
}

/// Mean binary cross entropy of probabilities against binary targets, plus
/// the gradient with respect to the (clipped) probabilities.
///
/// Inside the clip interval the per-element gradient is
/// `(-t/p + (1-t)/(1-p)) / N`; where the clip saturates, the loss is locally
/// flat in the raw probability and the gradient is zero.
pub fn bce_loss<F: Scalar>(
    prob: &Tensor<F>,
    target: &Tensor<F>,
) -> Result<(F, Tensor<F>), ShapeError> {
    prob.same_shape(target)?;
    let eps = F::from_f64(BCE_EPSILON);
    let hi = F::ONE - eps;
    let n = F::from_usize(prob.len());
    let mut total = F::ZERO;
    let mut grad = Tensor::zeros(prob.shape());
    for ((&p_raw, &t), g) in prob.data().iter().zip(target.data()).zip(grad.data_mut()) {
        let clipped = p_raw < eps || p_raw > hi;
        let p = p_raw.maximum(eps).minimum(hi);
        total += -(t * p.ln() + (F::ONE - t) * (F::ONE - p).ln());
        if !clipped {
            *g = (-t / p + (F::ONE - t) / (F::ONE - p)) / n;
        }
    }
    Ok((total / n, grad))
}

/// Mean squared error and its gradient `2 (pred - target) / N`.
pub fn mse_loss<F: Scalar>(
    pred: &Tensor<F>,
    target: &Tensor<F>,
) -> Result<(F, Tensor<F>), ShapeError> {
    pred.same_shape(target)?;
    let n = F::from_usize(pred.len());
    let two = F::from_f64(2.0);
    let mut total = F::ZERO;
    let mut grad = Tensor::zeros(pred.shape());
    for ((&p, &t), g) in pred.data().iter().zip(target.data()).zip(grad.data_mut()) {
        let d = p - t;
        total += d * d;
        *g = two * d / n;
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_half_is_ln_two() {
        let p = Tensor::filled(&[10], 0.5f64);
        let t = Tensor::from_fn(&[10], |i| if i % 3 == 0 { 1.0 } else { 0.0 });
        let (loss, _) = bce_loss(&p, &t).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_at_exact_fit_is_near_zero() {
        let t = Tensor::from_fn(&[8], |i| if i % 2 == 0 { 1.0f64 } else { 0.0 });
        let (loss, _) = bce_loss(&t, &t).unwrap();
        // Bounded by the epsilon clip.
        assert!(loss >= 0.0 && loss < 2.0 * BCE_EPSILON.max(1e-7));
    }

    #[test]
    fn bce_gradient_points_toward_target() {
        // d loss / d p must be negative below t=1 and positive above t=0.
        for &(p, t) in &[(0.3f64, 1.0), (0.7, 1.0), (0.3, 0.0), (0.7, 0.0)] {
            let (_, g) = bce_loss(&Tensor::scalar(p), &Tensor::scalar(t)).unwrap();
            if t == 1.0 {
                assert!(g.data()[0] < 0.0);
            } else {
                assert!(g.data()[0] > 0.0);
            }
        }
    }

    #[test]
    fn mse_values() {
        let (zero, _) = mse_loss(&Tensor::scalar(0.25f64), &Tensor::scalar(0.25)).unwrap();
        assert_eq!(zero, 0.0);
        let (one, g) = mse_loss(&Tensor::scalar(1.0f64), &Tensor::scalar(0.0)).unwrap();
        assert_eq!(one, 1.0);
        assert_eq!(g.data()[0], 2.0);
    }

    #[test]
    fn losses_are_nonnegative() {
        let mut rng = crate::rng::stream(31, "loss-sign");
        use rand::Rng;
        for _ in 0..50 {
            let p: Tensor<f64> = Tensor::from_fn(&[16], |_| rng.random_range(0.0..1.0));
            let t: Tensor<f64> =
                Tensor::from_fn(&[16], |_| if rng.random_range(0.0..1.0) < 0.5 { 1.0 } else { 0.0 });
            assert!(bce_loss(&p, &t).unwrap().0 >= 0.0);
            assert!(mse_loss(&p, &t).unwrap().0 >= 0.0);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = Tensor::<f64>::zeros(&[3]);
        let t = Tensor::<f64>::zeros(&[4]);
        assert!(bce_loss(&p, &t).is_err());
        assert!(mse_loss(&p, &t).is_err());
    }
}
