//! The volumetric denoising autoencoder.
//!
//! The network is a fixed five-layer pipeline over 30^3 occupancy grids:
//!
//! ```text
//! input dropout
//!   -> conv   64 filters, size 9, stride 3   (1x30^3  -> 64x8^3)   ReLU
//!   -> conv  256 filters, size 4, stride 2   (64x8^3  -> 256x3^3)  ReLU
//!   -> flatten to 6912 -> fully connected 6912 -> 6912             ReLU
//!   -> reshape to 256x3^3
//!   -> deconv 64 filters, size 5, stride 2   (256x3^3 -> 64x9^3)   ReLU
//!   -> deconv  1 filter,  size 6, stride 3   (64x9^3  -> 1x30^3)   sigmoid
//! ```
//!
//! The 6912-wide fully connected output is the shape embedding used for
//! classification probes and interpolation. Hidden activations are ReLU and
//! the output is a sigmoid so the two-class occupancy target gets (0,1)
//! probabilities; input dropout is the only dropout in the network and acts
//! as the corruption process, so it performs no rescaling and is the
//! identity at eval time.

mod checkpoint;
mod head;

pub use checkpoint::{
    checkpoint_precision, load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta,
};
pub use head::{
    fine_tune_head, softmax, softmax_cross_entropy, ClassifierModel, FineTuneMode, HeadError,
    HeadTrainConfig,
};

use crate::mesh::VoxelGrid;
use crate::scalar::Scalar;
use crate::tensor::{
    apply_mask, bce_loss, conv3d_forward, deconv3d_forward, dropout_mask, fc_forward, mse_loss,
    sgd_momentum_step_slices, Activation, ConvSpec, LayerParams, LossKind, ShapeError, Tensor,
};
use crate::tensor::{activation_forward, apply_activation_gate};
use rand::Rng;
use std::fmt;

pub const INPUT_EDGE: usize = 30;
pub const BOTTLENECK_DIM: usize = 6912;

/// One layer of the pipeline as stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv(ConvSpec),
    Fc { in_dim: usize, out_dim: usize },
}

/// A stage of the feature chain: a channel volume or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Volume { channels: usize, edge: usize },
    Vector { dim: usize },
}

impl fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureShape::Volume { channels, edge } => write!(f, "{channels}x{edge}^3"),
            FeatureShape::Vector { dim } => write!(f, "{dim}"),
        }
    }
}

/// Architecture plus the train-time input dropout rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input_edge: usize,
    pub dropout_p: f64,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// The standard five-layer network with the given input dropout rate
    /// (0.5 for denoising training, 0 for the plain autoencoder baseline).
    pub fn vconv_dae(dropout_p: f64) -> Self {
        ModelSpec {
            input_edge: INPUT_EDGE,
            dropout_p,
            layers: vec![
                LayerSpec::Conv(ConvSpec::conv(1, 64, 9, 3)),
                LayerSpec::Conv(ConvSpec::conv(64, 256, 4, 2)),
                LayerSpec::Fc {
                    in_dim: BOTTLENECK_DIM,
                    out_dim: BOTTLENECK_DIM,
                },
                LayerSpec::Conv(ConvSpec::transposed(256, 64, 5, 2)),
                LayerSpec::Conv(ConvSpec::transposed(64, 1, 6, 3)),
            ],
        }
    }

    /// The feature chain this spec produces, including the flatten and
    /// reshape stages around the fully connected bottleneck.
    pub fn shape_chain(&self) -> Result<Vec<FeatureShape>, ShapeError> {
        let mut chain = vec![FeatureShape::Volume {
            channels: 1,
            edge: self.input_edge,
        }];
        for layer in &self.layers {
            let cur = *chain.last().expect("chain is never empty");
            match layer {
                LayerSpec::Conv(cs) => {
                    let (channels, edge) = match cur {
                        FeatureShape::Volume { channels, edge } => (channels, edge),
                        FeatureShape::Vector { dim } => {
                            // Reshape a vector back into the volume the next
                            // (de)convolution expects.
                            let ch = cs.in_channels;
                            let per = dim / ch;
                            let edge = (per as f64).cbrt().round() as usize;
                            if ch * edge * edge * edge != dim {
                                return Err(ShapeError::NotCubic {
                                    extents: vec![ch, dim],
                                });
                            }
                            chain.push(FeatureShape::Volume { channels: ch, edge });
                            (ch, edge)
                        }
                    };
                    if channels != cs.in_channels {
                        return Err(ShapeError::Channels {
                            expected: cs.in_channels,
                            actual: channels,
                        });
                    }
                    chain.push(FeatureShape::Volume {
                        channels: cs.out_channels,
                        edge: cs.out_edge(edge)?,
                    });
                }
                LayerSpec::Fc { in_dim, out_dim } => {
                    let dim = match cur {
                        FeatureShape::Vector { dim } => dim,
                        FeatureShape::Volume { channels, edge } => {
                            let flat = channels * edge * edge * edge;
                            chain.push(FeatureShape::Vector { dim: flat });
                            flat
                        }
                    };
                    if dim != *in_dim {
                        return Err(ShapeError::Length {
                            expected: *in_dim,
                            actual: dim,
                        });
                    }
                    chain.push(FeatureShape::Vector { dim: *out_dim });
                }
            }
        }
        Ok(chain)
    }

    /// Validates the spec against the fixed pipeline this module implements,
    /// including the exact feature chain
    /// `1x30^3 -> 64x8^3 -> 256x3^3 -> 6912 -> 6912 -> 256x3^3 -> 64x9^3 -> 1x30^3`.
    pub fn validate(&self) -> Result<(), ShapeError> {
        let canonical = ModelSpec::vconv_dae(self.dropout_p);
        if self.input_edge != canonical.input_edge || self.layers != canonical.layers {
            return Err(ShapeError::Rank {
                expected: canonical.layers.len(),
                actual: self.layers.len(),
            });
        }
        let chain = self.shape_chain()?;
        let expected = [
            FeatureShape::Volume { channels: 1, edge: 30 },
            FeatureShape::Volume { channels: 64, edge: 8 },
            FeatureShape::Volume { channels: 256, edge: 3 },
            FeatureShape::Vector { dim: 6912 },
            FeatureShape::Vector { dim: 6912 },
            FeatureShape::Volume { channels: 256, edge: 3 },
            FeatureShape::Volume { channels: 64, edge: 9 },
            FeatureShape::Volume { channels: 1, edge: 30 },
        ];
        if chain != expected {
            let got = chain.iter().map(|s| s.to_string()).collect::<Vec<_>>();
            panic!("shape chain violated: {got:?}");
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv(cs) => {
                    cs.in_channels * cs.out_channels * cs.filter.pow(3) + cs.out_channels
                }
                LayerSpec::Fc { in_dim, out_dim } => in_dim * out_dim + out_dim,
            })
            .sum()
    }

    fn layer_names(&self) -> Vec<String> {
        let mut counts = [0usize; 3];
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv(cs) if cs.kind == crate::tensor::ConvKind::Convolution => {
                    counts[0] += 1;
                    format!("conv{}", counts[0])
                }
                LayerSpec::Conv(_) => {
                    counts[1] += 1;
                    format!("deconv{}", counts[1])
                }
                LayerSpec::Fc { .. } => {
                    counts[2] += 1;
                    format!("fc{}", counts[2])
                }
            })
            .collect()
    }
}

/// Whether a forward pass applies the input corruption mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Mask the input with fresh dropout at the spec's rate.
    Train,
    /// Pass the input through unmasked; deterministic.
    Eval,
}

/// Parameters, optimizer velocity, and provenance of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    spec: ModelSpec,
    pub layers: Vec<LayerParams<F>>,
    pub velocity: Vec<LayerParams<F>>,
    pub init_seed: u64,
}

/// Per-layer gradient buffers matching a model's parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<F> {
    pub layers: Vec<LayerParams<F>>,
}

impl<F: Scalar> ModelGrads<F> {
    pub fn zeros_like(params: &ModelParams<F>) -> Self {
        ModelGrads {
            layers: params.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    pub fn scale(&mut self, factor: F) {
        for layer in &mut self.layers {
            for v in layer.weights.data_mut() {
                *v *= factor;
            }
            for v in layer.bias.data_mut() {
                *v *= factor;
            }
        }
    }

    /// Fixed-order elementwise accumulation, used for minibatch gradients.
    pub fn accumulate(&mut self, other: &ModelGrads<F>) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                *x += y;
            }
            for (x, &y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += y;
            }
        }
    }
}

/// Reusable buffers for [`ModelParams::train_step`]: gradient storage for
/// the four (de)convolution layers plus the intermediate activation
/// gradients. The fully connected layer needs no gradient buffer there.
pub struct StepScratch<F> {
    conv1: LayerParams<F>,
    conv2: LayerParams<F>,
    deconv1: LayerParams<F>,
    deconv2: LayerParams<F>,
    g_d1: Tensor<F>,
    g_code: Tensor<F>,
    g_fc_in: Tensor<F>,
    g_c1: Tensor<F>,
}

impl<F: Scalar> StepScratch<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        StepScratch {
            conv1: LayerParams::zeros_like(&params.layers[0]),
            conv2: LayerParams::zeros_like(&params.layers[1]),
            deconv1: LayerParams::zeros_like(&params.layers[3]),
            deconv2: LayerParams::zeros_like(&params.layers[4]),
            g_d1: Tensor::zeros(&[64, 9, 9, 9]),
            g_code: Tensor::zeros(&[256, 3, 3, 3]),
            g_fc_in: Tensor::zeros(&[256, 3, 3, 3]),
            g_c1: Tensor::zeros(&[64, 8, 8, 8]),
        }
    }
}

/// Activations cached by a forward pass for the backward pass.
pub struct ForwardCache<F> {
    pub masked_input: Tensor<F>,
    pub mask: Option<Tensor<F>>,
    pub conv1_out: Tensor<F>,
    pub conv2_out: Tensor<F>,
    pub bottleneck: Tensor<F>,
    pub decoder_in: Tensor<F>,
    pub deconv1_out: Tensor<F>,
    pub prob: Tensor<F>,
}

/// Glorot-uniform initialization: weights from `U(-s, s)` with
/// `s = sqrt(6 / (fan_in + fan_out))`, zero biases, zero velocity.
/// Deterministic for a given seed.
pub fn init_model<F: Scalar>(spec: ModelSpec, seed: u64) -> Result<ModelParams<F>, ShapeError> {
    spec.validate()?;
    let mut rng = crate::rng::stream(seed, "model-init");
    let mut layers = Vec::with_capacity(spec.layers.len());
    let mut velocity = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let params = match layer {
            LayerSpec::Conv(cs) => {
                let fan_in = cs.in_channels * cs.filter.pow(3);
                let fan_out = cs.out_channels * cs.filter.pow(3);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                LayerParams {
                    weights: Tensor::from_fn(&cs.weight_shape(), |_| {
                        F::from_f64(rng.random_range(-s..s))
                    }),
                    bias: Tensor::zeros(&[cs.out_channels]),
                }
            }
            LayerSpec::Fc { in_dim, out_dim } => {
                let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
                LayerParams {
                    weights: Tensor::from_fn(&[*out_dim, *in_dim], |_| {
                        F::from_f64(rng.random_range(-s..s))
                    }),
                    bias: Tensor::zeros(&[*out_dim]),
                }
            }
        };
        velocity.push(LayerParams::zeros_like(&params));
        layers.push(params);
    }
    Ok(ModelParams {
        spec,
        layers,
        velocity,
        init_seed: seed,
    })
}

impl<F: Scalar> ModelParams<F> {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerParams::parameter_count).sum()
    }

    /// FNV-1a over the serialized weight and bias bytes; identifies the
    /// model function in reports.
    pub fn content_hash(&self) -> u64 {
        let mut bytes = Vec::new();
        for layer in &self.layers {
            for &v in layer.weights.data() {
                v.write_le(&mut bytes);
            }
            for &v in layer.bias.data() {
                v.write_le(&mut bytes);
            }
        }
        crate::rng::fnv1a64(&bytes)
    }

    fn conv_spec(&self, index: usize) -> &ConvSpec {
        match &self.spec.layers[index] {
            LayerSpec::Conv(cs) => cs,
            LayerSpec::Fc { .. } => unreachable!("layer {index} is fully connected"),
        }
    }

    fn encoder_pass(
        &self,
        input: &Tensor<F>,
    ) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>), ShapeError> {
        let conv1_out = activation_forward(
            &conv3d_forward(input, &self.layers[0], self.conv_spec(0))?,
            Activation::Relu,
        );
        debug_assert_eq!(conv1_out.shape(), &[64, 8, 8, 8]);
        let conv2_out = activation_forward(
            &conv3d_forward(&conv1_out, &self.layers[1], self.conv_spec(1))?,
            Activation::Relu,
        );
        debug_assert_eq!(conv2_out.shape(), &[256, 3, 3, 3]);
        let flat = conv2_out.reshaped(&[BOTTLENECK_DIM])?;
        let bottleneck = activation_forward(&fc_forward(&flat, &self.layers[2])?, Activation::Relu);
        debug_assert_eq!(bottleneck.shape(), &[BOTTLENECK_DIM]);
        Ok((conv1_out, conv2_out, bottleneck))
    }

    fn decoder_pass(
        &self,
        code: &Tensor<F>,
    ) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>), ShapeError> {
        let decoder_in = code.reshaped(&[256, 3, 3, 3])?;
        let deconv1_out = activation_forward(
            &deconv3d_forward(&decoder_in, &self.layers[3], self.conv_spec(3))?,
            Activation::Relu,
        );
        debug_assert_eq!(deconv1_out.shape(), &[64, 9, 9, 9]);
        let prob = activation_forward(
            &deconv3d_forward(&deconv1_out, &self.layers[4], self.conv_spec(4))?,
            Activation::Sigmoid,
        );
        debug_assert_eq!(prob.shape(), &[1, 30, 30, 30]);
        Ok((decoder_in, deconv1_out, prob))
    }

    /// Full forward pass with cached activations. In [`ForwardMode::Train`]
    /// the input is first masked by fresh dropout at the spec's rate; in
    /// eval mode the generator is not consulted at all.
    pub fn forward(
        &self,
        grid: &VoxelGrid,
        mode: ForwardMode,
        rng: &mut impl Rng,
    ) -> Result<(Tensor<F>, ForwardCache<F>), ShapeError> {
        let input: Tensor<F> = grid.to_tensor();
        if grid.edge() != self.spec.input_edge {
            return Err(ShapeError::Axis {
                axis: 1,
                expected: self.spec.input_edge,
                actual: grid.edge(),
            });
        }
        let (masked_input, mask) = match mode {
            ForwardMode::Train => {
                let p = self.spec.dropout_p;
                let mask = dropout_mask(input.shape(), p, rng);
                let mut masked = apply_mask(&input, &mask);
                // Surviving voxels are scaled by 1/(1-p), as in standard
                // dropout layers, so the expected input magnitude matches
                // the unmasked eval-time input. Without this the encoder
                // only ever sees half-density volumes during training and
                // lightly-corrupted test inputs land out of distribution.
                if p > 0.0 && p < 1.0 {
                    let scale = F::from_f64(1.0 / (1.0 - p));
                    for v in masked.data_mut() {
                        *v *= scale;
                    }
                }
                (masked, Some(mask))
            }
            ForwardMode::Eval => (input, None),
        };
        let (conv1_out, conv2_out, bottleneck) = self.encoder_pass(&masked_input)?;
        let (decoder_in, deconv1_out, prob) = self.decoder_pass(&bottleneck)?;
        let cache = ForwardCache {
            masked_input,
            mask,
            conv1_out,
            conv2_out,
            bottleneck,
            decoder_in,
            deconv1_out,
            prob: prob.clone(),
        };
        Ok((prob, cache))
    }

    /// Deterministic eval-mode forward: exactly `decode(encode(grid))`.
    pub fn forward_eval(&self, grid: &VoxelGrid) -> Result<Tensor<F>, ShapeError> {
        let code = self.encode(grid)?;
        self.decode(&code)
    }

    /// Eval-mode forward truncated at the bottleneck: the 6912-dimensional
    /// shape embedding.
    pub fn encode(&self, grid: &VoxelGrid) -> Result<Tensor<F>, ShapeError> {
        let input: Tensor<F> = grid.to_tensor();
        let (_, _, bottleneck) = self.encoder_pass(&input)?;
        Ok(bottleneck)
    }

    /// Decodes a 6912-dimensional embedding into a probability volume.
    pub fn decode(&self, code: &Tensor<F>) -> Result<Tensor<F>, ShapeError> {
        if code.len() != BOTTLENECK_DIM {
            return Err(ShapeError::Length {
                expected: BOTTLENECK_DIM,
                actual: code.len(),
            });
        }
        let (_, _, prob) = self.decoder_pass(code)?;
        Ok(prob)
    }

    /// Loss and parameter gradients against the (uncorrupted) target grid.
    ///
    /// With the cross-entropy loss the gradient is propagated through the
    /// output sigmoid analytically (`dz = (p - t) / N`), which is both the
    /// exact derivative and numerically stable where the sigmoid saturates.
    pub fn backward(
        &self,
        cache: &ForwardCache<F>,
        target: &VoxelGrid,
        loss: LossKind,
    ) -> Result<(F, ModelGrads<F>), ShapeError> {
        let mut grads = ModelGrads::zeros_like(self);
        let value = self.backward_into(cache, target, loss, &mut grads)?;
        Ok((value, grads))
    }

    /// Buffer-reusing form of [`Self::backward`]; `grads` is overwritten.
    pub fn backward_into(
        &self,
        cache: &ForwardCache<F>,
        target: &VoxelGrid,
        loss: LossKind,
        grads: &mut ModelGrads<F>,
    ) -> Result<F, ShapeError> {
        let t: Tensor<F> = target.to_tensor();
        cache.prob.same_shape(&t)?;
        let n = F::from_usize(cache.prob.len());
        let (value, dz) = match loss {
            LossKind::CrossEntropy => {
                let (value, _) = bce_loss(&cache.prob, &t)?;
                let mut dz = Tensor::zeros(cache.prob.shape());
                for ((g, &p), &tv) in dz
                    .data_mut()
                    .iter_mut()
                    .zip(cache.prob.data())
                    .zip(t.data())
                {
                    *g = (p - tv) / n;
                }
                (value, dz)
            }
            LossKind::MeanSquared => {
                let (value, mut dy) = mse_loss(&cache.prob, &t)?;
                apply_activation_gate(&cache.prob, dy.data_mut(), Activation::Sigmoid);
                (value, dy)
            }
        };

        // deconv2 <- sigmoid gate already folded into dz.
        let mut g_d1 = Tensor::zeros(cache.deconv1_out.shape());
        crate::tensor::deconv::deconv3d_backward_into(
            &cache.deconv1_out,
            &self.layers[4],
            self.conv_spec(4),
            &dz,
            &mut grads.layers[4],
            Some(&mut g_d1),
        )?;
        apply_activation_gate(&cache.deconv1_out, g_d1.data_mut(), Activation::Relu);

        // deconv1
        let mut g_code = Tensor::zeros(cache.decoder_in.shape());
        crate::tensor::deconv::deconv3d_backward_into(
            &cache.decoder_in,
            &self.layers[3],
            self.conv_spec(3),
            &g_d1,
            &mut grads.layers[3],
            Some(&mut g_code),
        )?;
        apply_activation_gate(&cache.bottleneck, g_code.data_mut(), Activation::Relu);

        // fully connected bottleneck; its input was conv2_out flattened.
        let mut g_fc_in = Tensor::zeros(cache.conv2_out.shape());
        crate::tensor::fc::fc_backward_into(
            &cache.conv2_out,
            &self.layers[2],
            &g_code,
            &mut grads.layers[2],
            Some(&mut g_fc_in),
        )?;
        apply_activation_gate(&cache.conv2_out, g_fc_in.data_mut(), Activation::Relu);

        // conv2
        let mut g_c1 = Tensor::zeros(cache.conv1_out.shape());
        crate::tensor::conv::conv3d_backward_into(
            &cache.conv1_out,
            &self.layers[1],
            self.conv_spec(1),
            &g_fc_in,
            &mut grads.layers[1],
            Some(&mut g_c1),
        )?;
        apply_activation_gate(&cache.conv1_out, g_c1.data_mut(), Activation::Relu);

        // conv1; the gradient with respect to the network input is not
        // needed for training, so it is skipped.
        crate::tensor::conv::conv3d_backward_into(
            &cache.masked_input,
            &self.layers[0],
            self.conv_spec(0),
            &g_c1,
            &mut grads.layers[0],
            None,
        )?;

        Ok(value)
    }

    /// Combined backward pass and momentum update for one sample: exactly
    /// `backward_into` followed by `apply_gradients`, but the fully
    /// connected layer folds its rank-1 weight gradient `g[i] * x[j]`
    /// directly into the velocity update instead of materializing the
    /// 6912 x 6912 gradient. The per-element arithmetic (one product, one
    /// `mu*v - lr*g`, one add) is unchanged, so results are bit-identical to
    /// the two-call form; per step it saves two full passes over the largest
    /// matrix in the model.
    pub fn train_step(
        &mut self,
        cache: &ForwardCache<F>,
        target: &VoxelGrid,
        loss: LossKind,
        lr: F,
        momentum: F,
        scratch: &mut StepScratch<F>,
    ) -> Result<F, ShapeError> {
        let t: Tensor<F> = target.to_tensor();
        cache.prob.same_shape(&t)?;
        let n = F::from_usize(cache.prob.len());
        let (value, dz) = match loss {
            LossKind::CrossEntropy => {
                let (value, _) = bce_loss(&cache.prob, &t)?;
                let mut dz = Tensor::zeros(cache.prob.shape());
                for ((g, &p), &tv) in dz
                    .data_mut()
                    .iter_mut()
                    .zip(cache.prob.data())
                    .zip(t.data())
                {
                    *g = (p - tv) / n;
                }
                (value, dz)
            }
            LossKind::MeanSquared => {
                let (value, mut dy) = mse_loss(&cache.prob, &t)?;
                apply_activation_gate(&cache.prob, dy.data_mut(), Activation::Sigmoid);
                (value, dy)
            }
        };

        crate::tensor::deconv::deconv3d_backward_into(
            &cache.deconv1_out,
            &self.layers[4],
            self.conv_spec(4),
            &dz,
            &mut scratch.deconv2,
            Some(&mut scratch.g_d1),
        )?;
        apply_activation_gate(&cache.deconv1_out, scratch.g_d1.data_mut(), Activation::Relu);

        crate::tensor::deconv::deconv3d_backward_into(
            &cache.decoder_in,
            &self.layers[3],
            self.conv_spec(3),
            &scratch.g_d1,
            &mut scratch.deconv1,
            Some(&mut scratch.g_code),
        )?;
        apply_activation_gate(&cache.bottleneck, scratch.g_code.data_mut(), Activation::Relu);

        // Fully connected layer: one pass per weight row computes the input
        // gradient from the pre-update weights, then updates the row.
        {
            let in_dim = BOTTLENECK_DIM;
            let x = cache.conv2_out.data();
            let go = scratch.g_code.data();
            let w = self.layers[2].weights.data_mut();
            let v = self.velocity[2].weights.data_mut();
            let gi = scratch.g_fc_in.data_mut();
            gi.fill(F::ZERO);
            for i in 0..BOTTLENECK_DIM {
                let g = go[i];
                let row_w = &mut w[i * in_dim..(i + 1) * in_dim];
                let row_v = &mut v[i * in_dim..(i + 1) * in_dim];
                if g == F::ZERO {
                    for (wj, vj) in row_w.iter_mut().zip(row_v.iter_mut()) {
                        let nv = momentum * *vj;
                        *vj = nv;
                        *wj += nv;
                    }
                } else {
                    for ((wj, vj), (gj, &xj)) in row_w
                        .iter_mut()
                        .zip(row_v.iter_mut())
                        .zip(gi.iter_mut().zip(x))
                    {
                        *gj += g * *wj;
                        let nv = momentum * *vj - lr * (g * xj);
                        *vj = nv;
                        *wj += nv;
                    }
                }
            }
            sgd_momentum_step_slices(
                self.layers[2].bias.data_mut(),
                go,
                self.velocity[2].bias.data_mut(),
                lr,
                momentum,
            );
        }
        apply_activation_gate(&cache.conv2_out, scratch.g_fc_in.data_mut(), Activation::Relu);

        crate::tensor::conv::conv3d_backward_into(
            &cache.conv1_out,
            &self.layers[1],
            self.conv_spec(1),
            &scratch.g_fc_in,
            &mut scratch.conv2,
            Some(&mut scratch.g_c1),
        )?;
        apply_activation_gate(&cache.conv1_out, scratch.g_c1.data_mut(), Activation::Relu);

        crate::tensor::conv::conv3d_backward_into(
            &cache.masked_input,
            &self.layers[0],
            self.conv_spec(0),
            &scratch.g_c1,
            &mut scratch.conv1,
            None,
        )?;

        for (i, grads) in [
            (0, &scratch.conv1),
            (1, &scratch.conv2),
            (3, &scratch.deconv1),
            (4, &scratch.deconv2),
        ] {
            sgd_momentum_step_slices(
                self.layers[i].weights.data_mut(),
                grads.weights.data(),
                self.velocity[i].weights.data_mut(),
                lr,
                momentum,
            );
            sgd_momentum_step_slices(
                self.layers[i].bias.data_mut(),
                grads.bias.data(),
                self.velocity[i].bias.data_mut(),
                lr,
                momentum,
            );
        }
        Ok(value)
    }

    /// One momentum step over every parameter tensor, in layer order.
    pub fn apply_gradients(&mut self, grads: &ModelGrads<F>, lr: F, momentum: F) {
        assert_eq!(grads.layers.len(), self.layers.len());
        for i in 0..self.layers.len() {
            sgd_momentum_step_slices(
                self.layers[i].weights.data_mut(),
                grads.layers[i].weights.data(),
                self.velocity[i].weights.data_mut(),
                lr,
                momentum,
            );
            sgd_momentum_step_slices(
                self.layers[i].bias.data_mut(),
                grads.layers[i].bias.data(),
                self.velocity[i].bias.data_mut(),
                lr,
                momentum,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_chain_matches_the_fixed_pipeline() {
        let spec = ModelSpec::vconv_dae(0.5);
        spec.validate().unwrap();
        let chain = spec.shape_chain().unwrap();
        let rendered: Vec<String> = chain.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            rendered,
            vec!["1x30^3", "64x8^3", "256x3^3", "6912", "6912", "256x3^3", "64x9^3", "1x30^3"]
        );
    }

    #[test]
    fn parameter_count_matches_hand_arithmetic() {
        // conv1: 64*(1*9^3) + 64        =    46_720
        // conv2: 256*(64*4^3) + 256     = 1_048_832
        // fc:    6912*6912 + 6912       = 47_782_656
        // deconv1: 256*64*5^3 + 64      = 2_048_064
        // deconv2: 64*1*6^3 + 1         =    13_825
        let expected = 46_720 + 1_048_832 + 47_782_656 + 2_048_064 + 13_825;
        assert_eq!(expected, 50_940_097usize);
        let spec = ModelSpec::vconv_dae(0.5);
        assert_eq!(spec.parameter_count(), expected);
        let model: ModelParams<f32> = init_model(spec, 1).unwrap();
        assert_eq!(model.parameter_count(), expected);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), 7).unwrap();
        let b: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), 7).unwrap();
        assert_eq!(a, b);
        for layer in &a.layers {
            assert!(layer.bias.data().iter().all(|&v| v == 0.0));
        }
        for layer in &a.velocity {
            assert!(layer.weights.data().iter().all(|&v| v == 0.0));
        }
        let c: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_weight_spread_matches_glorot_uniform() {
        // conv1 weights ~ U(-s, s), s = sqrt(6 / (729 + 64*729)); the sample
        // standard deviation over 46656 draws should sit within 10% of
        // s/sqrt(3).
        let model: ModelParams<f64> = init_model(ModelSpec::vconv_dae(0.5), 42).unwrap();
        let w = model.layers[0].weights.data();
        let n = w.len() as f64;
        let mean: f64 = w.iter().sum::<f64>() / n;
        let var: f64 = w.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let s = (6.0 / (729.0 + 64.0 * 729.0)).sqrt();
        let expected = s / 3.0f64.sqrt();
        let ratio = var.sqrt() / expected;
        assert!((0.9..=1.1).contains(&ratio), "stddev ratio {ratio}");
    }

    #[test]
    fn eval_forward_ignores_rng_and_equals_decode_of_encode() {
        use crate::mesh::synthetic_dataset;
        let grid = synthetic_dataset(1, 31).remove(0);
        let model: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), 13).unwrap();
        let mut rng_a = crate::rng::stream(1, "a");
        let mut rng_b = crate::rng::stream(2, "b");
        let (prob_a, _) = model.forward(&grid, ForwardMode::Eval, &mut rng_a).unwrap();
        let (prob_b, _) = model.forward(&grid, ForwardMode::Eval, &mut rng_b).unwrap();
        assert_eq!(prob_a, prob_b, "eval forward must not consult the generator");
        assert_eq!(prob_a, model.forward_eval(&grid).unwrap());
        let code = model.encode(&grid).unwrap();
        assert_eq!(code.len(), BOTTLENECK_DIM);
        assert_eq!(model.decode(&code).unwrap(), prob_a, "decode(encode(g)) == forward");
    }

    #[test]
    fn zero_weights_propagate_constant_bias_chain() {
        use crate::mesh::synthetic_dataset;
        let grid = synthetic_dataset(1, 33).remove(0);
        let mut model: ModelParams<f64> = init_model(ModelSpec::vconv_dae(0.5), 14).unwrap();
        for layer in &mut model.layers {
            layer.weights.data_mut().fill(0.0);
            layer.bias.data_mut().fill(0.0);
        }
        // All-zero weights and biases: the output is uniformly sigmoid(0).
        let prob = model.forward_eval(&grid).unwrap();
        assert!(prob.data().iter().all(|&p| p == 0.5));
        // A final-layer bias c shifts it to sigmoid(c) everywhere.
        model.layers[4].bias.data_mut().fill(2.0);
        let prob = model.forward_eval(&grid).unwrap();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!(prob.data().iter().all(|&p| (p - expected).abs() < 1e-15));
    }

    #[test]
    fn saturated_fit_has_near_zero_gradients() {
        use crate::mesh::VoxelGrid;
        // Zero weights plus a strongly negative output bias: the model
        // confidently predicts "empty", and an empty target makes every
        // gradient vanish up to the saturation residue.
        let mut model: ModelParams<f64> = init_model(ModelSpec::vconv_dae(0.5), 15).unwrap();
        for layer in &mut model.layers {
            layer.weights.data_mut().fill(0.0);
            layer.bias.data_mut().fill(0.0);
        }
        model.layers[4].bias.data_mut().fill(-12.0);
        let target = VoxelGrid::standard();
        let mut rng = crate::rng::stream(0, "x");
        let (_, cache) = model.forward(&target, ForwardMode::Eval, &mut rng).unwrap();
        let (loss, grads) = model.backward(&cache, &target, LossKind::CrossEntropy).unwrap();
        assert!(loss < 1e-5, "loss {loss}");
        for layer in &grads.layers {
            for &g in layer.weights.data().iter().chain(layer.bias.data()) {
                assert!(g.abs() < 1e-5, "gradient {g} not near zero");
            }
        }
    }

    #[test]
    fn fused_train_step_matches_backward_plus_update() {
        use crate::mesh::synthetic_dataset;
        let grids = synthetic_dataset(1, 11);
        let spec = ModelSpec::vconv_dae(0.5);
        let mut fused: ModelParams<f32> = init_model(spec.clone(), 21).unwrap();
        let mut reference = fused.clone();
        let mut scratch = StepScratch::new(&fused);
        let mut grads = ModelGrads::zeros_like(&reference);
        for (step, grid) in grids.iter().cycle().take(3).enumerate() {
            let mut rng_a = crate::rng::stream_indexed(5, "step", &[step as u64]);
            let mut rng_b = crate::rng::stream_indexed(5, "step", &[step as u64]);
            let (_, cache_a) = fused.forward(grid, ForwardMode::Train, &mut rng_a).unwrap();
            let (_, cache_b) = reference.forward(grid, ForwardMode::Train, &mut rng_b).unwrap();
            assert_eq!(cache_a.prob, cache_b.prob);
            let la = fused
                .train_step(&cache_a, grid, LossKind::CrossEntropy, 0.1, 0.9, &mut scratch)
                .unwrap();
            let lb = reference
                .backward_into(&cache_b, grid, LossKind::CrossEntropy, &mut grads)
                .unwrap();
            reference.apply_gradients(&grads, 0.1, 0.9);
            assert_eq!(la, lb);
        }
        assert_eq!(fused, reference);
    }

    #[test]
    fn layer_names_follow_kind_order() {
        let spec = ModelSpec::vconv_dae(0.0);
        assert_eq!(
            spec.layer_names(),
            vec!["conv1", "conv2", "fc1", "deconv1", "deconv2"]
        );
    }
}
