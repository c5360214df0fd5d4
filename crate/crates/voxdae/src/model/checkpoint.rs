//! Model checkpoint files.
//!
//! Layout (integers little-endian, floats IEEE-754 little-endian):
//!
//! ```text
//! magic        4 bytes  "VCDA"
//! version      u16      1
//! precision    u8       32 or 64
//! input_edge   u16
//! dropout_p    f64
//! init_seed    u64
//! layer_count  u8
//!   per layer: kind u8 (0 conv, 1 transposed, 2 fully connected),
//!              in u32, out u32, f u8, d u8   (f = d = 0 for fully connected)
//! epoch        u32
//! tail_len     u16, then tail_len f64 recent epoch losses
//! config_hash  u64
//! tensor_count u16
//!   per tensor: name_len u16, name bytes (UTF-8),
//!               rank u8, extents u32 x rank,
//!               raw elements (4 or 8 bytes each per the precision tag)
//! ```
//!
//! Tensors are written in a fixed order: for each layer `L`, `L.weight`,
//! `L.bias`, `L.vel.weight`, `L.vel.bias`. Readers enforce that order, so a
//! checkpoint round-trips bit-exactly.

use super::{LayerSpec, ModelParams, ModelSpec};
use crate::scalar::{Precision, Scalar};
use crate::tensor::{ConvKind, ConvSpec, LayerParams, Tensor};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: [u8; 4] = *b"VCDA";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"VCDA\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint precision is {found}-bit, expected {expected}-bit")]
    PrecisionMismatch { expected: u8, found: u8 },
    #[error("unknown precision tag {0}")]
    UnknownPrecision(u8),
    #[error("unknown layer kind {0}")]
    UnknownLayerKind(u8),
    #[error("checkpoint does not match its spec: {0}")]
    SpecMismatch(String),
    #[error("file ends before the checkpoint is complete")]
    Truncated,
}

/// Training metadata stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub epoch: u32,
    /// Tail of the epoch loss history (most recent last).
    pub loss_tail: Vec<f64>,
    /// Hash of the resolved experiment configuration, for audit.
    pub config_hash: u64,
}

fn eof(e: io::Error) -> CheckpointError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        CheckpointError::Truncated
    } else {
        CheckpointError::Io(e)
    }
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], CheckpointError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(eof)?;
    Ok(buf)
}

fn write_tensor<F: Scalar>(
    w: &mut impl Write,
    name: &str,
    tensor: &Tensor<F>,
) -> io::Result<()> {
    w.write_all(&(name.len() as u16).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&[tensor.rank() as u8])?;
    for &e in tensor.shape() {
        w.write_all(&(e as u32).to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(tensor.len() * F::BYTE_WIDTH);
    for &v in tensor.data() {
        v.write_le(&mut bytes);
    }
    w.write_all(&bytes)
}

fn read_tensor<F: Scalar>(
    r: &mut impl Read,
    expected_name: &str,
) -> Result<Tensor<F>, CheckpointError> {
    let name_len = u16::from_le_bytes(read_exact::<2>(r)?) as usize;
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name).map_err(eof)?;
    let name = String::from_utf8_lossy(&name).into_owned();
    if name != expected_name {
        return Err(CheckpointError::SpecMismatch(format!(
            "expected tensor `{expected_name}`, found `{name}`"
        )));
    }
    let rank = read_exact::<1>(r)?[0] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u32::from_le_bytes(read_exact::<4>(r)?) as usize);
    }
    let n: usize = shape.iter().product();
    let mut bytes = vec![0u8; n * F::BYTE_WIDTH];
    r.read_exact(&mut bytes).map_err(eof)?;
    let data = bytes.chunks_exact(F::BYTE_WIDTH).map(F::read_le).collect();
    Tensor::new(&shape, data)
        .map_err(|e| CheckpointError::SpecMismatch(format!("tensor `{expected_name}`: {e}")))
}

fn layer_entry(layer: &LayerSpec) -> (u8, u32, u32, u8, u8) {
    match layer {
        LayerSpec::Conv(cs) => (
            match cs.kind {
                ConvKind::Convolution => 0,
                ConvKind::Transposed => 1,
            },
            cs.in_channels as u32,
            cs.out_channels as u32,
            cs.filter as u8,
            cs.stride as u8,
        ),
        LayerSpec::Fc { in_dim, out_dim } => (2, *in_dim as u32, *out_dim as u32, 0, 0),
    }
}

/// Serializes parameters, velocity, and metadata.
pub fn write_checkpoint<F: Scalar>(
    params: &ModelParams<F>,
    meta: &CheckpointMeta,
    w: &mut impl Write,
) -> io::Result<()> {
    let spec = params.spec();
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[F::PRECISION.tag()])?;
    w.write_all(&(spec.input_edge as u16).to_le_bytes())?;
    w.write_all(&spec.dropout_p.to_le_bytes())?;
    w.write_all(&params.init_seed.to_le_bytes())?;
    w.write_all(&[spec.layers.len() as u8])?;
    for layer in &spec.layers {
        let (kind, cin, cout, f, d) = layer_entry(layer);
        w.write_all(&[kind])?;
        w.write_all(&cin.to_le_bytes())?;
        w.write_all(&cout.to_le_bytes())?;
        w.write_all(&[f, d])?;
    }
    w.write_all(&meta.epoch.to_le_bytes())?;
    w.write_all(&(meta.loss_tail.len() as u16).to_le_bytes())?;
    for &loss in &meta.loss_tail {
        w.write_all(&loss.to_le_bytes())?;
    }
    w.write_all(&meta.config_hash.to_le_bytes())?;

    let names = spec.layer_names();
    w.write_all(&((names.len() * 4) as u16).to_le_bytes())?;
    for (i, name) in names.iter().enumerate() {
        write_tensor(w, &format!("{name}.weight"), &params.layers[i].weights)?;
        write_tensor(w, &format!("{name}.bias"), &params.layers[i].bias)?;
        write_tensor(w, &format!("{name}.vel.weight"), &params.velocity[i].weights)?;
        write_tensor(w, &format!("{name}.vel.bias"), &params.velocity[i].bias)?;
    }
    Ok(())
}

/// Deserializes a checkpoint written at precision `F`.
pub fn read_checkpoint<F: Scalar>(
    r: &mut impl Read,
) -> Result<(ModelParams<F>, CheckpointMeta), CheckpointError> {
    let magic = read_exact::<4>(r)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(read_exact::<2>(r)?);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let precision = read_exact::<1>(r)?[0];
    if Precision::from_tag(precision).is_none() {
        return Err(CheckpointError::UnknownPrecision(precision));
    }
    if precision != F::PRECISION.tag() {
        return Err(CheckpointError::PrecisionMismatch {
            expected: F::PRECISION.tag(),
            found: precision,
        });
    }
    let input_edge = u16::from_le_bytes(read_exact::<2>(r)?) as usize;
    let dropout_p = f64::from_le_bytes(read_exact::<8>(r)?);
    let init_seed = u64::from_le_bytes(read_exact::<8>(r)?);
    let layer_count = read_exact::<1>(r)?[0] as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let kind = read_exact::<1>(r)?[0];
        let cin = u32::from_le_bytes(read_exact::<4>(r)?) as usize;
        let cout = u32::from_le_bytes(read_exact::<4>(r)?) as usize;
        let fd = read_exact::<2>(r)?;
        layers.push(match kind {
            0 => LayerSpec::Conv(ConvSpec::conv(cin, cout, fd[0] as usize, fd[1] as usize)),
            1 => LayerSpec::Conv(ConvSpec::transposed(cin, cout, fd[0] as usize, fd[1] as usize)),
            2 => LayerSpec::Fc {
                in_dim: cin,
                out_dim: cout,
            },
            other => return Err(CheckpointError::UnknownLayerKind(other)),
        });
    }
    let spec = ModelSpec {
        input_edge,
        dropout_p,
        layers,
    };
    spec.validate()
        .map_err(|e| CheckpointError::SpecMismatch(e.to_string()))?;

    let epoch = u32::from_le_bytes(read_exact::<4>(r)?);
    let tail_len = u16::from_le_bytes(read_exact::<2>(r)?) as usize;
    let mut loss_tail = Vec::with_capacity(tail_len);
    for _ in 0..tail_len {
        loss_tail.push(f64::from_le_bytes(read_exact::<8>(r)?));
    }
    let config_hash = u64::from_le_bytes(read_exact::<8>(r)?);

    let tensor_count = u16::from_le_bytes(read_exact::<2>(r)?) as usize;
    let names = spec.layer_names();
    if tensor_count != names.len() * 4 {
        return Err(CheckpointError::SpecMismatch(format!(
            "expected {} tensors, header says {tensor_count}",
            names.len() * 4
        )));
    }
    let mut layer_params = Vec::with_capacity(names.len());
    let mut velocity = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let weights = read_tensor::<F>(r, &format!("{name}.weight"))?;
        let bias = read_tensor::<F>(r, &format!("{name}.bias"))?;
        let vw = read_tensor::<F>(r, &format!("{name}.vel.weight"))?;
        let vb = read_tensor::<F>(r, &format!("{name}.vel.bias"))?;
        let expected_shape: Vec<usize> = match &spec.layers[i] {
            LayerSpec::Conv(cs) => cs.weight_shape().to_vec(),
            LayerSpec::Fc { in_dim, out_dim } => vec![*out_dim, *in_dim],
        };
        if weights.shape() != expected_shape.as_slice() {
            return Err(CheckpointError::SpecMismatch(format!(
                "{name}.weight has shape {:?}, spec implies {expected_shape:?}",
                weights.shape()
            )));
        }
        if vw.shape() != weights.shape() || vb.shape() != bias.shape() {
            return Err(CheckpointError::SpecMismatch(format!(
                "{name} velocity shapes do not match parameters"
            )));
        }
        layer_params.push(LayerParams { weights, bias });
        velocity.push(LayerParams {
            weights: vw,
            bias: vb,
        });
    }

    Ok((
        ModelParams {
            spec,
            layers: layer_params,
            velocity,
            init_seed,
        },
        CheckpointMeta {
            epoch,
            loss_tail,
            config_hash,
        },
    ))
}

pub fn save_checkpoint<F: Scalar>(
    params: &ModelParams<F>,
    meta: &CheckpointMeta,
    path: impl AsRef<Path>,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(params, meta, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(
    path: impl AsRef<Path>,
) -> Result<(ModelParams<F>, CheckpointMeta), CheckpointError> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

/// Peeks at the precision tag so callers can dispatch to the right float
/// type before loading.
pub fn checkpoint_precision(path: impl AsRef<Path>) -> Result<Precision, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact::<4>(&mut r)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(read_exact::<2>(&mut r)?);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let tag = read_exact::<1>(&mut r)?[0];
    Precision::from_tag(tag).ok_or(CheckpointError::UnknownPrecision(tag))
}
