//! Embedding extraction and the linear separability probe.
//!
//! The probe is a one-vs-rest linear classifier with hinge loss and L2
//! weight decay, trained by SGD on standardized embeddings. It stands in
//! for an external SVM solver: what it measures is the same thing, how
//! linearly separable the frozen features are.

use crate::mesh::VoxelGrid;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::tensor::ShapeError;
use rand::seq::SliceRandom;

/// A matrix of bottleneck codes with aligned labels and provenance.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    features: Vec<f64>,
    dim: usize,
    pub labels: Vec<u16>,
    pub provenance: Vec<String>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        EmbeddingSet {
            features: Vec::new(),
            dim,
            labels: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], label: u16, provenance: String) {
        assert_eq!(row.len(), self.dim, "embedding width");
        self.features.extend_from_slice(row);
        self.labels.push(label);
        self.provenance.push(provenance);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// Embeds every grid of the dataset through the frozen encoder.
pub fn extract_embeddings<F: Scalar>(
    params: &ModelParams<F>,
    dataset: &[VoxelGrid],
) -> Result<EmbeddingSet, ShapeError> {
    let mut set = EmbeddingSet::new(crate::model::BOTTLENECK_DIM);
    for (i, grid) in dataset.iter().enumerate() {
        let code = params.encode(grid)?;
        let row: Vec<f64> = code.data().iter().map(|&v| v.to_f64()).collect();
        set.push(
            &row,
            grid.label.unwrap_or(u16::MAX),
            grid.provenance.clone().unwrap_or_else(|| format!("index {i}")),
        );
    }
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 40,
            lr: 0.01,
            l2: 1e-4,
            seed: 0,
        }
    }
}

struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(train: &EmbeddingSet) -> Self {
        let d = train.dim();
        let n = train.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for i in 0..train.len() {
            for (m, &x) in mean.iter_mut().zip(train.row(i)) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for i in 0..train.len() {
            for ((v, &x), &m) in var.iter_mut().zip(train.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        // Dimensions that are constant across the training set (dead ReLU
        // units) carry no signal; dropping them beats dividing by ~zero.
        let inv_std = var
            .iter()
            .map(|&v| {
                let std = (v / n).sqrt();
                if std > 1e-6 {
                    1.0 / std
                } else {
                    0.0
                }
            })
            .collect();
        Standardizer { mean, inv_std }
    }

    fn apply(&self, row: &[f64], out: &mut [f64]) {
        for i in 0..row.len() {
            out[i] = (row[i] - self.mean[i]) * self.inv_std[i];
        }
    }
}

/// Trains the one-vs-rest probe on `train` and returns its accuracy on
/// `test`. Deterministic for a given config.
pub fn linear_probe(train: &EmbeddingSet, test: &EmbeddingSet, config: &ProbeConfig) -> f64 {
    assert!(!train.is_empty() && !test.is_empty(), "empty embedding set");
    assert_eq!(train.dim(), test.dim());
    let d = train.dim();
    let num_classes = train
        .labels
        .iter()
        .chain(&test.labels)
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(1);

    let standardizer = Standardizer::fit(train);
    let mut x = vec![0.0; d];

    // One (weights, bias) pair per class.
    let mut w = vec![0.0f64; num_classes * d];
    let mut b = vec![0.0f64; num_classes];
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = crate::rng::stream_indexed(config.seed, "probe-shuffle", &[epoch as u64]);
        order.shuffle(&mut rng);
        for &i in &order {
            standardizer.apply(train.row(i), &mut x);
            let label = train.labels[i] as usize;
            for k in 0..num_classes {
                let wk = &mut w[k * d..(k + 1) * d];
                let y = if k == label { 1.0 } else { -1.0 };
                let margin = y * (dot(wk, &x) + b[k]);
                if margin < 1.0 {
                    for (wj, &xj) in wk.iter_mut().zip(&x) {
                        *wj += config.lr * (y * xj - config.l2 * *wj);
                    }
                    b[k] += config.lr * y;
                } else {
                    for wj in wk.iter_mut() {
                        *wj -= config.lr * config.l2 * *wj;
                    }
                }
            }
        }
    }

    let mut correct = 0usize;
    for i in 0..test.len() {
        standardizer.apply(test.row(i), &mut x);
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..num_classes {
            let score = dot(&w[k * d..(k + 1) * d], &x) + b[k];
            if score > best_score {
                best_score = score;
                best = k;
            }
        }
        if best == test.labels[i] as usize {
            correct += 1;
        }
    }
    correct as f64 / test.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
