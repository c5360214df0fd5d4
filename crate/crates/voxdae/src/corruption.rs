//! Corruption processes for training and evaluation.
//!
//! Two noise models: independent random voxel dropout (the training noise)
//! and structured slicing noise that zeroes whole axis-aligned planes,
//! simulating occlusion holes. Both only ever remove occupancy, and both are
//! deterministic for a given generator state.

use crate::mesh::VoxelGrid;
use rand::Rng;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorruptionError {
    #[error("slicing percent {0} outside [0, 1]")]
    PercentRange(f64),
    #[error("dropout rate {0} outside [0, 1]")]
    RateRange(f64),
}

/// Which corruption to apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    /// Each voxel dropped independently with probability `p`.
    Random { p: f64 },
    /// `round(percent * edge)` whole planes zeroed.
    Slicing { percent: f64 },
}

/// A corruption description plus the seed its per-instance streams derive
/// from. Serializes as `none`, `random:P` or `slice:PCT` in config files and
/// report metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            seed: 0,
        }
    }

    pub fn random(p: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Random { p },
            seed,
        }
    }

    pub fn slicing(percent: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Slicing { percent },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorruptionError> {
        match self.kind {
            NoiseKind::None => Ok(()),
            NoiseKind::Random { p } if !(0.0..=1.0).contains(&p) => {
                Err(CorruptionError::RateRange(p))
            }
            NoiseKind::Slicing { percent } if !(0.0..=1.0).contains(&percent) => {
                Err(CorruptionError::PercentRange(percent))
            }
            _ => Ok(()),
        }
    }

    /// Corrupts one instance; `index` selects the per-instance stream so a
    /// whole evaluation run is reproducible from one seed.
    pub fn apply(&self, grid: &VoxelGrid, index: u64) -> Result<VoxelGrid, CorruptionError> {
        self.validate()?;
        let mut rng = crate::rng::stream_indexed(self.seed, "noise", &[index]);
        match self.kind {
            NoiseKind::None => Ok(grid.clone()),
            NoiseKind::Random { p } => Ok(apply_random_noise(grid, p, &mut rng)),
            NoiseKind::Slicing { percent } => apply_slicing_noise(grid, percent, &mut rng),
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NoiseKind::None => write!(f, "none"),
            NoiseKind::Random { p } => write!(f, "random:{p}"),
            NoiseKind::Slicing { percent } => write!(f, "slice:{percent}"),
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = String;

    /// Parses `none`, `random:P`, or `slice:PCT` (seed defaults to 0; the
    /// caller usually overrides it from the experiment seed).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            return Ok(NoiseSpec::none());
        }
        if let Some(p) = s.strip_prefix("random:") {
            let p: f64 = p
                .parse()
                .map_err(|_| format!("bad dropout rate in `{s}`"))?;
            return Ok(NoiseSpec::random(p, 0));
        }
        if let Some(pct) = s.strip_prefix("slice:") {
            let percent: f64 = pct
                .parse()
                .map_err(|_| format!("bad slicing percent in `{s}`"))?;
            return Ok(NoiseSpec::slicing(percent, 0));
        }
        Err(format!(
            "unknown noise `{s}` (expected none, random:P or slice:PCT)"
        ))
    }
}

/// Multiplies every voxel by an independent Bernoulli(1-p) mask. Empty
/// voxels stay empty either way, so only occupancy can be lost.
pub fn apply_random_noise(grid: &VoxelGrid, p: f64, rng: &mut impl Rng) -> VoxelGrid {
    assert!((0.0..=1.0).contains(&p), "dropout rate must be in [0, 1]");
    let mut out = grid.clone();
    for v in out.data_mut() {
        // One draw per cell keeps the mask independent of the occupancy
        // pattern.
        let drop = rng.random::<f64>() < p;
        if drop {
            *v = 0;
        }
    }
    out
}

/// Number of slices removed at a given percent of an edge:
/// 10% / 20% / 30% of a 30-cell cube map to 3 / 6 / 9 planes.
pub fn slice_count(percent: f64, edge: usize) -> usize {
    (percent * edge as f64).round() as usize
}

/// Zeroes `slice_count(percent, edge)` distinct axis-aligned planes. The
/// axis is sampled per slice, the plane index uniformly over the edge, and
/// duplicate (axis, index) pairs are rejected and redrawn.
pub fn apply_slicing_noise(
    grid: &VoxelGrid,
    percent: f64,
    rng: &mut impl Rng,
) -> Result<VoxelGrid, CorruptionError> {
    apply_slicing_noise_with_base(grid, percent, grid.edge(), rng)
}

/// [`apply_slicing_noise`] with the slice count computed from an explicit
/// base edge (e.g. the 24-cell active region instead of the padded cube).
pub fn apply_slicing_noise_with_base(
    grid: &VoxelGrid,
    percent: f64,
    base_edge: usize,
    rng: &mut impl Rng,
) -> Result<VoxelGrid, CorruptionError> {
    if !(0.0..=1.0).contains(&percent) {
        return Err(CorruptionError::PercentRange(percent));
    }
    let edge = grid.edge();
    let n = slice_count(percent, base_edge);
    let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(n);
    while chosen.len() < n {
        let axis = rng.random_range(0..3usize);
        let index = rng.random_range(0..edge);
        if chosen.contains(&(axis, index)) {
            continue;
        }
        chosen.push((axis, index));
    }
    let mut out = grid.clone();
    for (axis, index) in chosen {
        for a in 0..edge {
            for b in 0..edge {
                let (x, y, z) = match axis {
                    0 => (index, a, b),
                    1 => (a, index, b),
                    _ => (a, b, index),
                };
                out.set(x, y, z, false);
            }
        }
    }
    Ok(out)
}

/// Reconstruction error (%) of the "do nothing" reconstructor: the fraction
/// of cells the corruption changed, normalized by the active cell count.
/// The baseline any denoiser has to beat.
pub fn noise_floor(grid: &VoxelGrid, corrupted: &VoxelGrid) -> f64 {
    100.0 * grid.diff_count(corrupted) as f64 / grid.active_volume() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_grid(occupied: usize) -> VoxelGrid {
        // Fills cells of the active region in index order.
        let mut g = VoxelGrid::standard();
        let mut left = occupied;
        'outer: for z in 3..27 {
            for y in 3..27 {
                for x in 3..27 {
                    if left == 0 {
                        break 'outer;
                    }
                    g.set(x, y, z, true);
                    left -= 1;
                }
            }
        }
        g
    }

    #[test]
    fn zero_rate_and_empty_grids_pass_through() {
        let g = block_grid(500);
        let mut rng = crate::rng::stream(1, "noise-zero");
        assert_eq!(apply_random_noise(&g, 0.0, &mut rng), g);
        let empty = VoxelGrid::standard();
        let noisy = apply_random_noise(&empty, 0.9, &mut rng);
        assert_eq!(noisy.occupied_count(), 0);
    }

    #[test]
    fn half_rate_survivor_count_concentrates() {
        let g = block_grid(4000);
        let mut rng = crate::rng::stream(2, "noise-half");
        let noisy = apply_random_noise(&g, 0.5, &mut rng);
        let survivors = noisy.occupied_count();
        assert!(
            (1850..=2150).contains(&survivors),
            "survivors {survivors} outside 2000 +/- 150"
        );
    }

    #[test]
    fn slicing_percent_maps_to_plane_counts() {
        assert_eq!(slice_count(0.10, 30), 3);
        assert_eq!(slice_count(0.20, 30), 6);
        assert_eq!(slice_count(0.30, 30), 9);
        assert_eq!(slice_count(0.0, 30), 0);
    }

    #[test]
    fn thirty_percent_zeroes_exactly_nine_distinct_planes() {
        // Start from a fully occupied cube (padding included, as a raw
        // tensor) so zeroed planes are unambiguous.
        let mut g = VoxelGrid::standard();
        for v in g.data_mut() {
            *v = 1;
        }
        let mut rng = crate::rng::stream(3, "noise-slices");
        let sliced = apply_slicing_noise(&g, 0.30, &mut rng).unwrap();
        let e = g.edge();
        let mut zero_planes = 0;
        for axis in 0..3 {
            for index in 0..e {
                let mut all_zero = true;
                for a in 0..e {
                    for b in 0..e {
                        let (x, y, z) = match axis {
                            0 => (index, a, b),
                            1 => (a, index, b),
                            _ => (a, b, index),
                        };
                        if sliced.get(x, y, z) {
                            all_zero = false;
                        }
                    }
                }
                if all_zero {
                    zero_planes += 1;
                }
            }
        }
        assert_eq!(zero_planes, 9);
    }

    #[test]
    fn zero_percent_is_identity_and_removal_is_monotone() {
        let g = block_grid(2000);
        let mut rng = crate::rng::stream(4, "noise-mono");
        assert_eq!(apply_slicing_noise(&g, 0.0, &mut rng).unwrap(), g);
        for seed in 0..5u64 {
            let mut rng = crate::rng::stream(seed, "noise-mono-seeded");
            let sliced = apply_slicing_noise(&g, 0.2, &mut rng).unwrap();
            assert!(sliced.occupied_count() <= g.occupied_count());
            // Contraction: corrupted <= original elementwise.
            for (a, b) in sliced.data().iter().zip(g.data()) {
                assert!(a <= b);
            }
        }
    }

    #[test]
    fn out_of_range_percent_is_an_error() {
        let g = VoxelGrid::standard();
        let mut rng = crate::rng::stream(5, "noise-range");
        assert_eq!(
            apply_slicing_noise(&g, 1.5, &mut rng),
            Err(CorruptionError::PercentRange(1.5))
        );
    }

    #[test]
    fn spec_application_is_deterministic_per_seed_and_index() {
        let g = block_grid(3000);
        let spec = NoiseSpec::random(0.5, 77);
        let a = spec.apply(&g, 4).unwrap();
        let b = spec.apply(&g, 4).unwrap();
        assert_eq!(a, b);
        let c = spec.apply(&g, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_floor_counts_changed_cells() {
        let g = block_grid(1000);
        let spec = NoiseSpec::slicing(0.3, 9);
        let corrupted = spec.apply(&g, 0).unwrap();
        let floor = noise_floor(&g, &corrupted);
        let expected = 100.0 * g.diff_count(&corrupted) as f64 / 13824.0;
        assert_eq!(floor, expected);
        assert_eq!(noise_floor(&g, &g), 0.0);
    }

    #[test]
    fn noise_spec_round_trips_through_strings() {
        for s in ["none", "random:0.5", "slice:0.3"] {
            let spec: NoiseSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("garbage".parse::<NoiseSpec>().is_err());
        assert!("random:x".parse::<NoiseSpec>().is_err());
    }
}
