//! Input corruption masks.
//!
//! The mask models *missing voxels*, so there is no 1/(1-p) rescaling of the
//! survivors: at train time the network sees a grid with cells knocked out,
//! at eval time the layer is the identity.

use super::Tensor;
use crate::scalar::Scalar;
use rand::Rng;

/// A 0/1 tensor where each element is independently 0 with probability `p`.
/// Deterministic for a given generator state.
pub fn dropout_mask<F: Scalar>(shape: &[usize], p: f64, rng: &mut impl Rng) -> Tensor<F> {
    assert!((0.0..=1.0).contains(&p), "dropout rate must be in [0,1]");
    Tensor::from_fn(shape, |_| {
        if rng.random::<f64>() < p {
            F::ZERO
        } else {
            F::ONE
        }
    })
}

/// Elementwise product of an activation with a mask of the same shape.
pub fn apply_mask<F: Scalar>(input: &Tensor<F>, mask: &Tensor<F>) -> Tensor<F> {
    assert_eq!(input.shape(), mask.shape());
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_rates() {
        let mut rng = crate::rng::stream(1, "mask-extremes");
        let ones: Tensor<f32> = dropout_mask(&[100], 0.0, &mut rng);
        assert!(ones.data().iter().all(|&x| x == 1.0));
        let zeros: Tensor<f32> = dropout_mask(&[100], 1.0, &mut rng);
        assert!(zeros.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn half_rate_concentrates() {
        let mut rng = crate::rng::stream(2, "mask-half");
        let n = 100_000;
        let mask: Tensor<f64> = dropout_mask(&[n], 0.5, &mut rng);
        let ones = mask.data().iter().filter(|&&x| x == 1.0).count() as f64 / n as f64;
        assert!((ones - 0.5).abs() < 0.01, "ones fraction {ones}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Tensor<f32> = dropout_mask(&[64], 0.3, &mut crate::rng::stream(9, "m"));
        let b: Tensor<f32> = dropout_mask(&[64], 0.3, &mut crate::rng::stream(9, "m"));
        assert_eq!(a, b);
    }
}
