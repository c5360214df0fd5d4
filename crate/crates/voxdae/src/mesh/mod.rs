//! Triangle meshes, voxel occupancy grids, and the paths between them.
//!
//! The working representation of a shape is a [`VoxelGrid`]: a binary
//! occupancy cube whose active region (default 24^3) is surrounded by empty
//! padding (default 3 cells per side), giving the 30^3 input the network
//! consumes. Meshes come in through the OFF parser, get rotated about the
//! gravity axis for augmentation, and are solidly voxelized into grids.

mod dataset;
mod off;
mod synthetic;
mod voxelize;
mod voxg;

pub use dataset::{
    build_manifest, load_dataset, DatasetError, DatasetManifest, DatasetStream, ManifestClass,
    Phase, Subset, MODELNET10_CLASSES,
};
pub use off::{mesh_to_off, parse_off, OffError, OffErrorKind};
pub use synthetic::{synthetic_dataset, synthetic_shapes, SyntheticClass, SYNTHETIC_CLASSES};
pub use voxelize::{box_mesh, sphere_mesh, voxelize, voxelize_standard, VoxelizeError};
pub use voxg::{load_voxg, read_voxg, save_voxg, write_voxg, GridIoError};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default edge of the active (occupiable) region.
pub const DEFAULT_RESOLUTION: usize = 24;
/// Default empty-cell padding on each side of the active region.
pub const DEFAULT_PADDING: usize = 3;

/// Label value meaning "unlabeled" in the binary grid format.
pub const UNLABELED: u16 = 0xFFFF;

/// An axis of the grid; `Z` is the gravity axis by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Triangle mesh in model units. Faces index into `vertices`; polygons with
/// more than three vertices are fan-triangulated at parse time.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for a in 0..3 {
                c[a] += v[a];
            }
        }
        let n = self.vertices.len().max(1) as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for an empty mesh.
    pub fn bounding_box(&self) -> Option<([f64; 3], [f64; 3])> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        let mut min = first;
        let mut max = first;
        for v in it {
            for a in 0..3 {
                min[a] = min[a].min(v[a]);
                max[a] = max[a].max(v[a]);
            }
        }
        Some((min, max))
    }
}

/// Rigid rotation by `k * 30` degrees about the given axis through the mesh
/// centroid. `k = 0` is the identity.
pub fn rotate_mesh(mesh: &Mesh, k: usize, axis: Axis) -> Mesh {
    let theta = (k as f64) * 30.0f64.to_radians();
    let (s, c) = theta.sin_cos();
    let centroid = mesh.centroid();
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| {
            let p = [v[0] - centroid[0], v[1] - centroid[1], v[2] - centroid[2]];
            let q = match axis {
                Axis::X => [p[0], c * p[1] - s * p[2], s * p[1] + c * p[2]],
                Axis::Y => [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]],
                Axis::Z => [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]],
            };
            [q[0] + centroid[0], q[1] + centroid[1], q[2] + centroid[2]]
        })
        .collect();
    Mesh {
        vertices,
        faces: mesh.faces.clone(),
    }
}

/// Voxelizes the mesh at all 12 gravity-axis rotations (`k = 0..11`).
pub fn augment(mesh: &Mesh) -> Result<Vec<VoxelGrid>, VoxelizeError> {
    (0..12)
        .map(|k| voxelize_standard(&rotate_mesh(mesh, k, Axis::Z)))
        .collect()
}

/// Binary occupancy cube: an active `resolution^3` region centered inside
/// `padding` empty cells per side. Values are strictly 0 or 1; the file
/// layout (and [`Self::index`]) is x-fastest row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    data: Vec<u8>,
    resolution: usize,
    padding: usize,
    pub label: Option<u16>,
    pub provenance: Option<String>,
}

impl VoxelGrid {
    pub fn empty(resolution: usize, padding: usize) -> Self {
        let edge = resolution + 2 * padding;
        VoxelGrid {
            data: vec![0; edge * edge * edge],
            resolution,
            padding,
            label: None,
            provenance: None,
        }
    }

    /// The 24^3-in-30^3 grid the network consumes.
    pub fn standard() -> Self {
        Self::empty(DEFAULT_RESOLUTION, DEFAULT_PADDING)
    }

    pub(crate) fn from_raw(
        data: Vec<u8>,
        resolution: usize,
        padding: usize,
        label: Option<u16>,
    ) -> Self {
        let edge = resolution + 2 * padding;
        assert_eq!(data.len(), edge * edge * edge);
        debug_assert!(data.iter().all(|&v| v <= 1));
        VoxelGrid {
            data,
            resolution,
            padding,
            label,
            provenance: None,
        }
    }

    pub fn edge(&self) -> usize {
        self.resolution + 2 * self.padding
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    /// Number of cells in the active region (`24^3 = 13824` by default):
    /// the denominator of the reconstruction-error metric.
    pub fn active_volume(&self) -> usize {
        self.resolution.pow(3)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let e = self.edge();
        (z * e + y) * e + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.index(x, y, z)] == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, occupied: bool) {
        let i = self.index(x, y, z);
        self.data[i] = occupied as u8;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn occupied_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Whether `(x, y, z)` lies inside the active region.
    pub fn in_active_region(&self, x: usize, y: usize, z: usize) -> bool {
        let lo = self.padding;
        let hi = self.padding + self.resolution;
        (lo..hi).contains(&x) && (lo..hi).contains(&y) && (lo..hi).contains(&z)
    }

    /// Verifies the padding-emptiness invariant.
    pub fn padding_is_empty(&self) -> bool {
        let e = self.edge();
        for z in 0..e {
            for y in 0..e {
                for x in 0..e {
                    if !self.in_active_region(x, y, z) && self.get(x, y, z) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Number of cells whose occupancy differs from `other`.
    pub fn diff_count(&self, other: &VoxelGrid) -> usize {
        assert_eq!(self.edge(), other.edge(), "grid edges differ");
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a != b)
            .count()
    }

    /// The grid as a `[1, e, e, e]` tensor of 0.0 / 1.0 values.
    pub fn to_tensor<F: Scalar>(&self) -> Tensor<F> {
        let e = self.edge();
        Tensor::new(
            &[1, e, e, e],
            self.data
                .iter()
                .map(|&v| if v == 1 { F::ONE } else { F::ZERO })
                .collect(),
        )
        .expect("grid length matches its edge")
    }

    /// Binarizes a probability volume at `threshold` (occupied when
    /// `p >= threshold`) into a grid with this resolution/padding layout.
    pub fn from_prob<F: Scalar>(
        prob: &Tensor<F>,
        threshold: f64,
        resolution: usize,
        padding: usize,
    ) -> Self {
        let edge = resolution + 2 * padding;
        let expected = edge * edge * edge;
        assert_eq!(
            prob.len(),
            expected,
            "probability volume does not match a {edge}^3 grid"
        );
        let t = F::from_f64(threshold);
        let data = prob.data().iter().map(|&p| (p >= t) as u8).collect();
        VoxelGrid::from_raw(data, resolution, padding, None)
    }

    pub fn with_label(mut self, label: u16) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = Some(provenance.into());
        self
    }
}
