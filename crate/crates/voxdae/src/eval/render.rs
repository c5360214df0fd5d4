//! Image and geometry exports for eyeballing reconstructions.
//!
//! Probability volumes render as 8-bit PGM images: one mid-slice per axis
//! and a montage of all depth slices. Binarized occupancy exports as a
//! cube-per-voxel OBJ mesh for external viewers.

use crate::mesh::VoxelGrid;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

fn volume_view<F: Scalar>(volume: &Tensor<F>) -> (usize, Vec<f64>) {
    let shape = volume.shape();
    let edge = match shape.len() {
        3 => shape[0],
        4 => shape[1],
        r => panic!("expected a rank-3 or single-channel rank-4 volume, got rank {r}"),
    };
    assert_eq!(volume.len(), edge * edge * edge, "volume must be cubic");
    (edge, volume.data().iter().map(|&v| v.to_f64()).collect())
}

fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    w.flush()
}

fn to_byte(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Renders mid-slices (one per axis) and a depth-slice montage of a
/// probability volume. Files land at `<prefix>_mid_{x,y,z}.pgm` and
/// `<prefix>_montage.pgm`; the returned paths list what was written.
pub fn render_slices<F: Scalar>(volume: &Tensor<F>, prefix: &Path) -> io::Result<Vec<PathBuf>> {
    let (edge, data) = volume_view(volume);
    let at = |x: usize, y: usize, z: usize| data[(z * edge + y) * edge + x];
    let mid = edge / 2;
    let mut written = Vec::new();

    let mut emit = |suffix: &str, pixels: Vec<u8>, w: usize, h: usize| -> io::Result<()> {
        let path = PathBuf::from(format!("{}_{suffix}.pgm", prefix.display()));
        write_pgm(&path, w, h, &pixels)?;
        written.push(path);
        Ok(())
    };

    let mut slice = Vec::with_capacity(edge * edge);
    // x = mid: (y, z) plane
    slice.clear();
    for z in 0..edge {
        for y in 0..edge {
            slice.push(to_byte(at(mid, y, z)));
        }
    }
    emit("mid_x", slice.clone(), edge, edge)?;
    // y = mid
    slice.clear();
    for z in 0..edge {
        for x in 0..edge {
            slice.push(to_byte(at(x, mid, z)));
        }
    }
    emit("mid_y", slice.clone(), edge, edge)?;
    // z = mid
    slice.clear();
    for y in 0..edge {
        for x in 0..edge {
            slice.push(to_byte(at(x, y, mid)));
        }
    }
    emit("mid_z", slice.clone(), edge, edge)?;

    // Montage: all z-slices tiled into a near-square grid.
    let cols = (edge as f64).sqrt().ceil() as usize;
    let rows = edge.div_ceil(cols);
    let (mw, mh) = (cols * edge, rows * edge);
    let mut montage = vec![0u8; mw * mh];
    for z in 0..edge {
        let (tile_x, tile_y) = (z % cols, z / cols);
        for y in 0..edge {
            for x in 0..edge {
                montage[(tile_y * edge + y) * mw + tile_x * edge + x] = to_byte(at(x, y, z));
            }
        }
    }
    emit("montage", montage, mw, mh)?;
    Ok(written)
}

/// [`render_slices`] for a binary grid.
pub fn render_grid_slices(grid: &VoxelGrid, prefix: &Path) -> io::Result<Vec<PathBuf>> {
    render_slices(&grid.to_tensor::<f32>(), prefix)
}

/// Writes one unit cube per occupied voxel as a Wavefront OBJ mesh.
pub fn export_obj(grid: &VoxelGrid, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# voxel occupancy export, {} cells", grid.occupied_count())?;
    let e = grid.edge();
    let mut base = 1usize; // OBJ indices are 1-based
    for z in 0..e {
        for y in 0..e {
            for x in 0..e {
                if !grid.get(x, y, z) {
                    continue;
                }
                let (fx, fy, fz) = (x as f64, y as f64, z as f64);
                for dz in 0..2 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            writeln!(
                                w,
                                "v {} {} {}",
                                fx + dx as f64,
                                fy + dy as f64,
                                fz + dz as f64
                            )?;
                        }
                    }
                }
                // Vertex order above: bit pattern (dz, dy, dx).
                const QUADS: [[usize; 4]; 6] = [
                    [0, 1, 3, 2], // z = 0
                    [4, 6, 7, 5], // z = 1
                    [0, 4, 5, 1], // y = 0
                    [2, 3, 7, 6], // y = 1
                    [0, 2, 6, 4], // x = 0
                    [1, 5, 7, 3], // x = 1
                ];
                for q in QUADS {
                    writeln!(
                        w,
                        "f {} {} {} {}",
                        base + q[0],
                        base + q[1],
                        base + q[2],
                        base + q[3]
                    )?;
                }
                base += 8;
            }
        }
    }
    w.flush()
}
