//! Binary voxel grid files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "VOXG"
//! version u8       1
//! extents u32 x 3  x, y, z cell counts
//! voxels  1 byte each (0 or 1), x-fastest row-major
//! label   u16, optional; 0xFFFF means unlabeled
//! ```

use super::{VoxelGrid, DEFAULT_PADDING, DEFAULT_RESOLUTION, UNLABELED};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: [u8; 4] = *b"VOXG";
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum GridIoError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"VOXG\"")]
    BadMagic([u8; 4]),
    #[error("unsupported grid format version {0}")]
    UnsupportedVersion(u8),
    #[error("grid extents {0:?} are not cubic")]
    NonCubic([u32; 3]),
    #[error("voxel byte {value} at offset {offset} is neither 0 nor 1")]
    BadVoxel { value: u8, offset: usize },
    #[error("file ends before the voxel payload is complete")]
    Truncated,
}

pub fn write_voxg(grid: &VoxelGrid, w: &mut impl Write) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION])?;
    let e = grid.edge() as u32;
    for extent in [e, e, e] {
        w.write_all(&extent.to_le_bytes())?;
    }
    w.write_all(grid.data())?;
    w.write_all(&grid.label.unwrap_or(UNLABELED).to_le_bytes())?;
    Ok(())
}

pub fn read_voxg(r: &mut impl Read) -> Result<VoxelGrid, GridIoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof_as_truncated)?;
    if magic != MAGIC {
        return Err(GridIoError::BadMagic(magic));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version).map_err(eof_as_truncated)?;
    if version[0] != VERSION {
        return Err(GridIoError::UnsupportedVersion(version[0]));
    }
    let mut extents = [0u32; 3];
    for e in &mut extents {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(eof_as_truncated)?;
        *e = u32::from_le_bytes(buf);
    }
    if extents[0] != extents[1] || extents[1] != extents[2] {
        return Err(GridIoError::NonCubic(extents));
    }
    let edge = extents[0] as usize;
    let mut data = vec![0u8; edge * edge * edge];
    r.read_exact(&mut data).map_err(eof_as_truncated)?;
    for (offset, &value) in data.iter().enumerate() {
        if value > 1 {
            return Err(GridIoError::BadVoxel { value, offset });
        }
    }
    // The trailing label is optional.
    let mut label_buf = [0u8; 2];
    let label = match r.read_exact(&mut label_buf) {
        Ok(()) => {
            let raw = u16::from_le_bytes(label_buf);
            if raw == UNLABELED {
                None
            } else {
                Some(raw)
            }
        }
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => None,
        Err(e) => return Err(GridIoError::Io(e)),
    };
    // The file carries no padding metadata. Standard-edge files whose
    // padding shell is actually empty get the standard 24+2*3 layout; any
    // other cube is treated as all-active, which keeps the
    // padding-is-empty invariant true for every grid this reader builds.
    let standard = DEFAULT_RESOLUTION + 2 * DEFAULT_PADDING;
    let (resolution, padding) = if edge == standard && padding_shell_empty(&data, edge) {
        (DEFAULT_RESOLUTION, DEFAULT_PADDING)
    } else {
        (edge, 0)
    };
    Ok(VoxelGrid::from_raw(data, resolution, padding, label))
}

pub fn save_voxg(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<(), GridIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_voxg(grid, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_voxg(path: impl AsRef<Path>) -> Result<VoxelGrid, GridIoError> {
    read_voxg(&mut BufReader::new(File::open(path)?))
}

fn padding_shell_empty(data: &[u8], edge: usize) -> bool {
    let lo = DEFAULT_PADDING;
    let hi = edge - DEFAULT_PADDING;
    for z in 0..edge {
        for y in 0..edge {
            for x in 0..edge {
                let active =
                    (lo..hi).contains(&x) && (lo..hi).contains(&y) && (lo..hi).contains(&z);
                if !active && data[(z * edge + y) * edge + x] == 1 {
                    return false;
                }
            }
        }
    }
    true
}

fn eof_as_truncated(e: io::Error) -> GridIoError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        GridIoError::Truncated
    } else {
        GridIoError::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_voxels_and_label() {
        let mut grid = VoxelGrid::standard().with_label(7);
        grid.set(5, 6, 7, true);
        grid.set(20, 21, 22, true);
        let mut bytes = Vec::new();
        write_voxg(&grid, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"VOXG");
        assert_eq!(bytes.len(), 4 + 1 + 12 + 27000 + 2);
        let back = read_voxg(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.data(), grid.data());
        assert_eq!(back.label, Some(7));
        assert_eq!(back.resolution(), 24);
        assert_eq!(back.padding(), 3);
    }

    #[test]
    fn unlabeled_round_trip_and_missing_label() {
        let grid = VoxelGrid::standard();
        let mut bytes = Vec::new();
        write_voxg(&grid, &mut bytes).unwrap();
        assert_eq!(read_voxg(&mut bytes.as_slice()).unwrap().label, None);
        // Readers accept files without the trailing label.
        bytes.truncate(bytes.len() - 2);
        assert_eq!(read_voxg(&mut bytes.as_slice()).unwrap().label, None);
    }

    #[test]
    fn malformed_files_error() {
        assert!(matches!(
            read_voxg(&mut &b"NOPE"[..]),
            Err(GridIoError::BadMagic(_))
        ));
        let mut bytes = Vec::new();
        write_voxg(&VoxelGrid::standard(), &mut bytes).unwrap();
        let truncated = &bytes[..100];
        assert!(matches!(
            read_voxg(&mut &truncated[..]),
            Err(GridIoError::Truncated)
        ));
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(
            read_voxg(&mut wrong_version.as_slice()),
            Err(GridIoError::UnsupportedVersion(9))
        ));
        let mut bad_voxel = bytes;
        bad_voxel[17] = 3;
        assert!(matches!(
            read_voxg(&mut bad_voxel.as_slice()),
            Err(GridIoError::BadVoxel { value: 3, offset: 0 })
        ));
    }
}
