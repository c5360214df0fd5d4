//! Quantitative evaluation: reconstruction error, per-class report tables,
//! embedding interpolation, linear probing, rendering, and inference timing.

mod interpolate;
mod probe;
mod render;

pub use interpolate::interpolate;
pub use probe::{extract_embeddings, linear_probe, EmbeddingSet, ProbeConfig};
pub use render::{export_obj, render_grid_slices, render_slices};

use crate::corruption::{noise_floor, CorruptionError, NoiseSpec};
use crate::mesh::VoxelGrid;
use crate::model::{fine_tune_head, HeadTrainConfig, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::{ShapeError, Tensor};
use std::time::{Instant, SystemTime};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error(transparent)]
    Head(#[from] crate::model::HeadError),
    #[error("evaluation set is empty")]
    EmptySet,
}

/// Reconstruction error in percent: binarize the probability volume at
/// `threshold`, count cells that differ from the original over the whole
/// padded cube, and normalize by the active cell count (13824 for the
/// standard 24^3 region).
pub fn reconstruction_error<F: Scalar>(
    prob: &Tensor<F>,
    original: &VoxelGrid,
    threshold: f64,
) -> f64 {
    let binarized = VoxelGrid::from_prob(
        prob,
        threshold,
        original.resolution(),
        original.padding(),
    );
    100.0 * binarized.diff_count(original) as f64 / original.active_volume() as f64
}

/// One class row of an evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub class: String,
    pub mean_error: f64,
    pub mean_noise_floor: f64,
    pub instances: usize,
}

/// Per-class reconstruction-error table with its provenance metadata.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<ClassRow>,
    pub noise: NoiseSpec,
    pub threshold: f64,
    pub checkpoint_hash: u64,
    /// Mean wall-clock per instance; display-only, not persisted.
    pub ms_per_instance: f64,
    /// Capture time (unix seconds); display-only, not persisted.
    pub timestamp: u64,
}

impl EvalReport {
    /// Unweighted mean of the class rows (the "Mean Error" row).
    pub fn mean_error(&self) -> f64 {
        let n = self.rows.len().max(1) as f64;
        self.rows.iter().map(|r| r.mean_error).sum::<f64>() / n
    }

    pub fn mean_noise_floor(&self) -> f64 {
        let n = self.rows.len().max(1) as f64;
        self.rows.iter().map(|r| r.mean_noise_floor).sum::<f64>() / n
    }

    /// Deterministic CSV: identical runs produce identical bytes, so the
    /// wall-clock fields stay out.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,error_percent,noise_floor_percent,instances\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{}\n",
                row.class, row.mean_error, row.mean_noise_floor, row.instances
            ));
        }
        out.push_str(&format!(
            "mean,{:.6},{:.6},{}\n",
            self.mean_error(),
            self.mean_noise_floor(),
            self.rows.iter().map(|r| r.instances).sum::<usize>()
        ));
        out.push_str(&format!(
            "# noise = {} | threshold = {} | checkpoint = {:016x}\n",
            self.noise, self.threshold, self.checkpoint_hash
        ));
        out
    }

    /// Human-readable table in the two-column style of the evaluation
    /// protocol: per-class error next to the do-nothing baseline.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "noise {} | threshold {} | checkpoint {:016x} | {:.2} ms/instance | t={}\n",
            self.noise, self.threshold, self.checkpoint_hash, self.ms_per_instance, self.timestamp
        ));
        out.push_str(&format!(
            "{:<14} {:>10} {:>12} {:>10}\n",
            "Class", "Error %", "NoiseFloor %", "Instances"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<14} {:>10.2} {:>12.2} {:>10}\n",
                row.class, row.mean_error, row.mean_noise_floor, row.instances
            ));
        }
        out.push_str(&format!(
            "{:<14} {:>10.2} {:>12.2} {:>10}\n",
            "Mean Error",
            self.mean_error(),
            self.mean_noise_floor(),
            self.rows.iter().map(|r| r.instances).sum::<usize>()
        ));
        out
    }
}

/// Evaluates denoising (or completion, with slicing noise) over a labeled
/// test set: each instance is corrupted instance-deterministically,
/// reconstructed in eval mode, and scored against its clean original.
/// `class_names[label]` names the rows; unknown labels fall back to
/// `class<label>`.
pub fn denoise_table<F: Scalar>(
    params: &ModelParams<F>,
    testset: &[VoxelGrid],
    class_names: &[String],
    noise: &NoiseSpec,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    if testset.is_empty() {
        return Err(EvalError::EmptySet);
    }
    // label -> (sum error, sum floor, count), keyed in ascending label order.
    let mut by_label: std::collections::BTreeMap<u16, (f64, f64, usize)> =
        std::collections::BTreeMap::new();
    let started = Instant::now();
    for (i, grid) in testset.iter().enumerate() {
        let corrupted = noise.apply(grid, i as u64)?;
        let prob = params.forward_eval(&corrupted)?;
        let err = reconstruction_error(&prob, grid, threshold);
        let floor = noise_floor(grid, &corrupted);
        let entry = by_label
            .entry(grid.label.unwrap_or(u16::MAX))
            .or_insert((0.0, 0.0, 0));
        entry.0 += err;
        entry.1 += floor;
        entry.2 += 1;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let rows = by_label
        .into_iter()
        .map(|(label, (err, floor, n))| ClassRow {
            class: if label == u16::MAX {
                "unlabeled".to_string()
            } else {
                class_names
                    .get(label as usize)
                    .cloned()
                    .unwrap_or_else(|| format!("class{label}"))
            },
            mean_error: err / n as f64,
            mean_noise_floor: floor / n as f64,
            instances: n,
        })
        .collect();
    Ok(EvalReport {
        rows,
        noise: *noise,
        threshold,
        checkpoint_hash: params.content_hash(),
        ms_per_instance: elapsed * 1e3 / testset.len() as f64,
        timestamp: SystemTime::now()
            .duration_since(SystemTime::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

/// Trains the 6912-512-K classification head on `train_set` and reports
/// accuracy on `test_set`.
pub fn fine_tune_eval<F: Scalar>(
    params: &ModelParams<F>,
    train_set: &[VoxelGrid],
    test_set: &[VoxelGrid],
    num_classes: usize,
    config: &HeadTrainConfig,
) -> Result<f64, EvalError> {
    if train_set.is_empty() || test_set.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let mut classifier = fine_tune_head(params.clone(), num_classes, config.seed);
    classifier.train(train_set, config)?;
    Ok(classifier.accuracy(test_set)?)
}

/// Mean wall-clock milliseconds of an eval-mode forward pass over `n` runs.
/// Reported, never asserted against anything: it is hardware-bound.
pub fn bench_inference<F: Scalar>(
    params: &ModelParams<F>,
    grid: &VoxelGrid,
    n: usize,
) -> Result<f64, ShapeError> {
    // One warmup to populate allocator pools and caches.
    params.forward_eval(grid)?;
    let started = Instant::now();
    for _ in 0..n.max(1) {
        params.forward_eval(grid)?;
    }
    Ok(started.elapsed().as_secs_f64() * 1e3 / n.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::NoiseKind;
    use crate::mesh::synthetic_dataset;
    use crate::model::{init_model, ModelSpec};

    #[test]
    fn exact_reconstruction_scores_zero() {
        let grids = synthetic_dataset(1, 1);
        let prob: Tensor<f64> = grids[0].to_tensor();
        assert_eq!(reconstruction_error(&prob, &grids[0], 0.5), 0.0);
    }

    #[test]
    fn empty_reconstruction_scores_occupancy_over_13824() {
        let grids = synthetic_dataset(1, 2);
        let k = grids[0].occupied_count();
        let empty: Tensor<f64> = Tensor::zeros(&[1, 30, 30, 30]);
        let err = reconstruction_error(&empty, &grids[0], 0.5);
        assert!((err - 100.0 * k as f64 / 13824.0).abs() < 1e-12);
    }

    #[test]
    fn error_is_symmetric_in_binary_arguments() {
        let grids = synthetic_dataset(2, 3);
        let (a, b) = (&grids[0], &grids[4]);
        let pa: Tensor<f64> = a.to_tensor();
        let pb: Tensor<f64> = b.to_tensor();
        assert_eq!(
            reconstruction_error(&pa, b, 0.5),
            reconstruction_error(&pb, a, 0.5)
        );
    }

    #[test]
    fn identity_reconstructor_error_equals_noise_floor() {
        let grids = synthetic_dataset(1, 4);
        let noise = NoiseSpec::random(0.5, 13);
        let corrupted = noise.apply(&grids[0], 0).unwrap();
        let identity: Tensor<f64> = corrupted.to_tensor();
        let err = reconstruction_error(&identity, &grids[0], 0.5);
        assert_eq!(err, noise_floor(&grids[0], &corrupted));
    }

    #[test]
    fn report_mean_row_is_the_mean_of_class_rows() {
        let mut grids = synthetic_dataset(3, 5);
        // Keep the test fast: a fresh (untrained) model works for table
        // plumbing.
        let model: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), 1).unwrap();
        for g in &mut grids {
            g.provenance = None;
        }
        let names: Vec<String> = ["box", "cylinder", "cross", "l-shape"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let noise = NoiseSpec::random(0.3, 21);
        let report = denoise_table(&model, &grids, &names, &noise, 0.5).unwrap();
        assert_eq!(report.rows.len(), 4);
        let manual: f64 =
            report.rows.iter().map(|r| r.mean_error).sum::<f64>() / report.rows.len() as f64;
        assert!((report.mean_error() - manual).abs() < 1e-9);
        assert!(matches!(report.noise.kind, NoiseKind::Random { .. }));
        let csv = report.to_csv();
        assert!(csv.starts_with("class,error_percent"));
        assert!(csv.contains("\nmean,"));
        assert!(report.to_table().contains("Mean Error"));
    }
}
