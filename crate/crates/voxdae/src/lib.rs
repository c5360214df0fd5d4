//! Volumetric shape learning on binary voxel occupancy grids.
//!
//! `voxdae` implements a fully convolutional denoising autoencoder for
//! 30x30x30 occupancy grids, together with everything needed to run it as a
//! reproducible experiment pipeline:
//!
//! - [`tensor`]: dense tensors and the differentiable primitives (3D
//!   convolution, 3D transposed convolution, fully connected, activations,
//!   losses, dropout masks, SGD with momentum), each with an analytic
//!   backward pass.
//! - [`mesh`]: OFF mesh ingestion, rotation augmentation, solid voxelization
//!   into padded occupancy grids, dataset manifests and synthetic shapes.
//! - [`corruption`]: random voxel dropout and structured slicing noise.
//! - [`model`]: the five-layer encoder/decoder network, its forward and
//!   backward passes, embedding extraction, classification head and
//!   checkpoint persistence.
//! - [`train`]: the corruption-on-the-fly training loop.
//! - [`eval`]: reconstruction-error metrics, per-class report tables,
//!   embedding interpolation, linear probing and rendering helpers.
//!
//! The [`reference`] module holds naive brute-force implementations of the
//! numeric kernels. They are deliberately slow, share no code with the
//! optimized paths, and back the verification suites in [`gradcheck`] and in
//! the tests.
//!
//! A narrative guide lives in the `book/` directory of the repository; its
//! code snippets are compiled and run as doc-tests through the [`guide`]
//! module.

pub mod config;
pub mod corruption;
pub mod eval;
pub mod gradcheck;
pub mod guide;
pub mod mesh;
pub mod model;
pub mod reference;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use corruption::NoiseSpec;
pub use mesh::{Mesh, VoxelGrid};
pub use model::{ModelParams, ModelSpec};
pub use scalar::{Precision, Scalar};
pub use tensor::{ConvSpec, LayerParams, Tensor};
pub use train::TrainConfig;
