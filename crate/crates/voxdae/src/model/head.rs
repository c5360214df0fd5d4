//! Classification head for fine-tuning: embedding -> 512 -> classes.
//!
//! Mirrors the evaluation protocol that stacks a hidden layer and a softmax
//! on the 6912-dimensional bottleneck (6912-512-K). Training updates either
//! the head alone or, jointly, the encoder as well.

use super::{ModelGrads, ModelParams, BOTTLENECK_DIM};
use crate::mesh::VoxelGrid;
use crate::scalar::Scalar;
use crate::tensor::{
    activation_forward, apply_activation_gate, fc_forward, sgd_momentum_step_slices, Activation,
    LayerParams, ShapeError, Tensor,
};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

const HIDDEN_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum HeadError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("sample {index} has no class label")]
    Unlabeled { index: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelRange { label: u16, num_classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FineTuneMode {
    /// Train only the two head layers on frozen embeddings.
    HeadOnly,
    /// Backpropagate into the encoder as well.
    Joint,
}

#[derive(Debug, Clone)]
pub struct HeadTrainConfig {
    pub mode: FineTuneMode,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        HeadTrainConfig {
            mode: FineTuneMode::HeadOnly,
            epochs: 20,
            lr: 0.01,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Encoder plus classification head.
pub struct ClassifierModel<F> {
    pub base: ModelParams<F>,
    pub head: [LayerParams<F>; 2],
    head_velocity: [LayerParams<F>; 2],
    pub num_classes: usize,
}

/// Builds a classifier by appending a Glorot-initialized 6912-512-K head to
/// a (typically pretrained) model.
pub fn fine_tune_head<F: Scalar>(
    base: ModelParams<F>,
    num_classes: usize,
    seed: u64,
) -> ClassifierModel<F> {
    let mut rng = crate::rng::stream(seed, "head-init");
    let mut glorot = |in_dim: usize, out_dim: usize| {
        let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
        LayerParams {
            weights: Tensor::from_fn(&[out_dim, in_dim], |_| F::from_f64(rng.random_range(-s..s))),
            bias: Tensor::zeros(&[out_dim]),
        }
    };
    let fc1 = glorot(BOTTLENECK_DIM, HIDDEN_DIM);
    let fc2 = glorot(HIDDEN_DIM, num_classes);
    let head_velocity = [LayerParams::zeros_like(&fc1), LayerParams::zeros_like(&fc2)];
    ClassifierModel {
        base,
        head: [fc1, fc2],
        head_velocity,
        num_classes,
    }
}

/// Numerically stable softmax over a logit vector.
pub fn softmax<F: Scalar>(logits: &Tensor<F>) -> Tensor<F> {
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(F::from_f64(f64::NEG_INFINITY), F::maximum);
    let mut out = logits.clone();
    let mut total = F::ZERO;
    for v in out.data_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in out.data_mut() {
        *v /= total;
    }
    out
}

/// Multinomial cross entropy of a logit vector against a class index;
/// returns the loss and the gradient with respect to the logits
/// (`softmax - onehot`).
pub fn softmax_cross_entropy<F: Scalar>(logits: &Tensor<F>, label: usize) -> (F, Tensor<F>) {
    let mut probs = softmax(logits);
    let eps = F::from_f64(1e-12);
    let loss = -(probs.data()[label].maximum(eps)).ln();
    probs.data_mut()[label] -= F::ONE;
    (loss, probs)
}

impl<F: Scalar> ClassifierModel<F> {
    /// Head forward от an embedding: (post-ReLU hidden, logits).
    fn head_forward(&self, embedding: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>), ShapeError> {
        let hidden = activation_forward(&fc_forward(embedding, &self.head[0])?, Activation::Relu);
        let logits = fc_forward(&hidden, &self.head[1])?;
        Ok((hidden, logits))
    }

    /// Class logits for a grid.
    pub fn logits(&self, grid: &VoxelGrid) -> Result<Tensor<F>, ShapeError> {
        let embedding = self.base.encode(grid)?;
        Ok(self.head_forward(&embedding)?.1)
    }

    pub fn predict(&self, grid: &VoxelGrid) -> Result<usize, ShapeError> {
        let logits = self.logits(grid)?;
        Ok(argmax(logits.data()))
    }

    /// Fraction of labeled grids classified correctly.
    pub fn accuracy(&self, grids: &[VoxelGrid]) -> Result<f64, HeadError> {
        let mut correct = 0usize;
        for (index, grid) in grids.iter().enumerate() {
            let label = grid.label.ok_or(HeadError::Unlabeled { index })? as usize;
            if self.predict(grid)? == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / grids.len().max(1) as f64)
    }

    /// Trains the head (and, in joint mode, the encoder) with SGD momentum.
    /// Returns the mean epoch losses.
    pub fn train(
        &mut self,
        grids: &[VoxelGrid],
        config: &HeadTrainConfig,
    ) -> Result<Vec<f64>, HeadError> {
        let labels: Vec<usize> = grids
            .iter()
            .enumerate()
            .map(|(index, g)| {
                let label = g.label.ok_or(HeadError::Unlabeled { index })?;
                if (label as usize) >= self.num_classes {
                    return Err(HeadError::LabelRange {
                        label,
                        num_classes: self.num_classes,
                    });
                }
                Ok(label as usize)
            })
            .collect::<Result<_, _>>()?;

        // Frozen encoder: embed once up front.
        let cached: Option<Vec<Tensor<F>>> = match config.mode {
            FineTuneMode::HeadOnly => Some(
                grids
                    .iter()
                    .map(|g| self.base.encode(g))
                    .collect::<Result<_, _>>()?,
            ),
            FineTuneMode::Joint => None,
        };

        let lr = F::from_f64(config.lr);
        let momentum = F::from_f64(config.momentum);
        let mut history = Vec::with_capacity(config.epochs);
        let mut base_grads = match config.mode {
            FineTuneMode::Joint => Some(ModelGrads::zeros_like(&self.base)),
            FineTuneMode::HeadOnly => None,
        };
        let mut order: Vec<usize> = (0..grids.len()).collect();
        for epoch in 0..config.epochs {
            let mut rng =
                crate::rng::stream_indexed(config.seed, "head-shuffle", &[epoch as u64]);
            order.shuffle(&mut rng);
            let mut total = 0.0f64;
            for &i in &order {
                let loss = match config.mode {
                    FineTuneMode::HeadOnly => {
                        let embedding = &cached.as_ref().expect("cached embeddings")[i];
                        self.step_head_only(embedding, labels[i], lr, momentum)?
                    }
                    FineTuneMode::Joint => self.step_joint(
                        &grids[i],
                        labels[i],
                        lr,
                        momentum,
                        base_grads.as_mut().expect("joint gradient buffer"),
                    )?,
                };
                total += loss.to_f64();
            }
            history.push(total / grids.len().max(1) as f64);
        }
        Ok(history)
    }

    /// One SGD step on the head; returns `(loss, gradient wrt embedding)`
    /// machinery shared by both modes.
    fn head_step(
        &mut self,
        embedding: &Tensor<F>,
        label: usize,
        lr: F,
        momentum: F,
        want_embedding_grad: bool,
    ) -> Result<(F, Option<Tensor<F>>), ShapeError> {
        let (hidden, logits) = self.head_forward(embedding)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, label);

        let mut g2 = LayerParams::zeros_like(&self.head[1]);
        let mut g_hidden = Tensor::zeros(&[HIDDEN_DIM]);
        crate::tensor::fc::fc_backward_into(
            &hidden,
            &self.head[1],
            &dlogits,
            &mut g2,
            Some(&mut g_hidden),
        )?;
        apply_activation_gate(&hidden, g_hidden.data_mut(), Activation::Relu);

        let mut g1 = LayerParams::zeros_like(&self.head[0]);
        let mut g_embedding = if want_embedding_grad {
            Some(Tensor::zeros(&[BOTTLENECK_DIM]))
        } else {
            None
        };
        crate::tensor::fc::fc_backward_into(
            embedding,
            &self.head[0],
            &g_hidden,
            &mut g1,
            g_embedding.as_mut(),
        )?;

        let [h0, h1] = &mut self.head;
        let [v0, v1] = &mut self.head_velocity;
        for (params, grads, velocity) in [(h0, &g1, v0), (h1, &g2, v1)] {
            sgd_momentum_step_slices(
                params.weights.data_mut(),
                grads.weights.data(),
                velocity.weights.data_mut(),
                lr,
                momentum,
            );
            sgd_momentum_step_slices(
                params.bias.data_mut(),
                grads.bias.data(),
                velocity.bias.data_mut(),
                lr,
                momentum,
            );
        }
        Ok((loss, g_embedding))
    }

    fn step_head_only(
        &mut self,
        embedding: &Tensor<F>,
        label: usize,
        lr: F,
        momentum: F,
    ) -> Result<F, ShapeError> {
        let (loss, _) = self.head_step(embedding, label, lr, momentum, false)?;
        Ok(loss)
    }

    /// Joint step: the head updates as above, then the embedding gradient
    /// flows back through the encoder (no input dropout during fine-tuning).
    fn step_joint(
        &mut self,
        grid: &VoxelGrid,
        label: usize,
        lr: F,
        momentum: F,
        grads: &mut ModelGrads<F>,
    ) -> Result<F, ShapeError> {
        let input: Tensor<F> = grid.to_tensor();
        let (conv1_out, conv2_out, bottleneck) = self.base.encoder_pass(&input)?;
        let (loss, g_embedding) = self.head_step(&bottleneck, label, lr, momentum, true)?;
        let mut g_code = g_embedding.expect("embedding gradient requested");
        apply_activation_gate(&bottleneck, g_code.data_mut(), Activation::Relu);

        let mut g_fc_in = Tensor::zeros(conv2_out.shape());
        crate::tensor::fc::fc_backward_into(
            &conv2_out,
            &self.base.layers[2],
            &g_code,
            &mut grads.layers[2],
            Some(&mut g_fc_in),
        )?;
        apply_activation_gate(&conv2_out, g_fc_in.data_mut(), Activation::Relu);

        let mut g_c1 = Tensor::zeros(conv1_out.shape());
        crate::tensor::conv::conv3d_backward_into(
            &conv1_out,
            &self.base.layers[1],
            self.base.conv_spec(1),
            &g_fc_in,
            &mut grads.layers[1],
            Some(&mut g_c1),
        )?;
        apply_activation_gate(&conv1_out, g_c1.data_mut(), Activation::Relu);

        crate::tensor::conv::conv3d_backward_into(
            &input,
            &self.base.layers[0],
            self.base.conv_spec(0),
            &g_c1,
            &mut grads.layers[0],
            None,
        )?;

        for i in 0..3 {
            sgd_momentum_step_slices(
                self.base.layers[i].weights.data_mut(),
                grads.layers[i].weights.data(),
                self.base.velocity[i].weights.data_mut(),
                lr,
                momentum,
            );
            sgd_momentum_step_slices(
                self.base.layers[i].bias.data_mut(),
                grads.layers[i].bias.data(),
                self.base.velocity[i].bias.data_mut(),
                lr,
                momentum,
            );
        }
        Ok(loss)
    }
}

fn argmax<F: Scalar>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
