//! Linear interpolation in the embedding space.

use crate::mesh::VoxelGrid;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::tensor::{ShapeError, Tensor};

/// Walks the embedding space linearly from `source` to `target` over
/// `steps` stations (default protocol: 10, so step `t` uses
/// `alpha = (t - 1) / 9` for `t = 1..=10`) and decodes each interpolated
/// code into a probability volume.
///
/// The first and last stations use the unblended codes, so they equal the
/// plain encode/decode round trips bitwise; intermediate stations blend as
/// `s + alpha * (t - s)`, which collapses exactly to `s` when source and
/// target coincide.
pub fn interpolate<F: Scalar>(
    params: &ModelParams<F>,
    source: &VoxelGrid,
    target: &VoxelGrid,
    steps: usize,
) -> Result<Vec<Tensor<F>>, ShapeError> {
    assert!(steps >= 2, "interpolation needs at least the two endpoints");
    let code_source = params.encode(source)?;
    let code_target = params.encode(target)?;
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let code = if t == 0 {
            code_source.clone()
        } else if t == steps - 1 {
            code_target.clone()
        } else {
            let alpha = F::from_f64(t as f64 / (steps - 1) as f64);
            Tensor::new(
                code_source.shape(),
                code_source
                    .data()
                    .iter()
                    .zip(code_target.data())
                    .map(|(&s, &tgt)| s + alpha * (tgt - s))
                    .collect(),
            )?
        };
        outputs.push(params.decode(&code)?);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::synthetic_dataset;
    use crate::model::{init_model, ModelSpec};

    #[test]
    fn endpoints_equal_encode_decode_round_trips_bitwise() {
        let grids = synthetic_dataset(1, 8);
        let model: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), 2).unwrap();
        let (source, target) = (&grids[0], &grids[3]);
        let path = interpolate(&model, source, target, 10).unwrap();
        assert_eq!(path.len(), 10);
        let s_round = model.decode(&model.encode(source).unwrap()).unwrap();
        let t_round = model.decode(&model.encode(target).unwrap()).unwrap();
        assert_eq!(path[0], s_round);
        assert_eq!(path[9], t_round);
    }

    #[test]
    fn identical_endpoints_give_identical_stations() {
        let grids = synthetic_dataset(1, 9);
        let model: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), 3).unwrap();
        let path = interpolate(&model, &grids[0], &grids[0], 10).unwrap();
        for station in &path[1..] {
            assert_eq!(*station, path[0]);
        }
    }
}
