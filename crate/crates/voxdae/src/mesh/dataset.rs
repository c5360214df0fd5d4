//! Dataset manifests and deterministic grid streams.
//!
//! A dataset root holds one directory per class. Each class directory either
//! contains `train/` and `test/` subdirectories or a flat list of model
//! files (`.off` meshes or `.voxg` grids). The split rule follows the
//! standard protocol: the first 80 models (by filename order) train, the
//! first 20 of the test listing (or the next 20 of a flat listing) test.
//! Streams yield in class order, then filename order, then rotation index.

use super::{
    augment, load_voxg, parse_off, voxelize_standard, Mesh, VoxelGrid,
};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MODELNET10_CLASSES: [&str; 10] = [
    "bathtub",
    "bed",
    "chair",
    "desk",
    "dresser",
    "monitor",
    "night_stand",
    "sofa",
    "table",
    "toilet",
];

const TRAIN_PER_CLASS: usize = 80;
const TEST_PER_CLASS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Ten,
    Forty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error under {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing class directories {missing:?}; found {found:?}")]
    MissingClasses {
        missing: Vec<String>,
        found: Vec<String>,
    },
    #[error("dataset root {0} contains no class directories")]
    EmptyRoot(PathBuf),
    #[error("{path}: {source}")]
    BadOff {
        path: PathBuf,
        source: super::OffError,
    },
    #[error("{path}: {source}")]
    BadGrid {
        path: PathBuf,
        source: super::GridIoError,
    },
    #[error("{path}: {source}")]
    Voxelize {
        path: PathBuf,
        source: super::VoxelizeError,
    },
}

#[derive(Debug, Clone)]
pub struct ManifestClass {
    pub name: String,
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

/// Ordered class list with per-class train/test file paths.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub classes: Vec<ManifestClass>,
}

impl DatasetManifest {
    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }
}

fn list_sorted(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, DatasetError> {
    let mut files = Vec::new();
    let entries = fs::read_dir(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() {
            if let Some(ext) = path.extension().and_then(|e| e.to_str()) {
                if exts.contains(&ext) {
                    files.push(path);
                }
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Scans `root` and builds the manifest for the requested subset.
pub fn build_manifest(root: &Path, subset: Subset) -> Result<DatasetManifest, DatasetError> {
    let mut found = Vec::new();
    let entries = fs::read_dir(root).map_err(|source| DatasetError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        if entry.path().is_dir() {
            found.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(DatasetError::EmptyRoot(root.to_path_buf()));
    }

    let wanted: Vec<String> = match subset {
        Subset::Ten => {
            let missing: Vec<String> = MODELNET10_CLASSES
                .iter()
                .filter(|c| !found.iter().any(|f| f == *c))
                .map(|c| c.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(DatasetError::MissingClasses { missing, found });
            }
            MODELNET10_CLASSES.iter().map(|c| c.to_string()).collect()
        }
        Subset::Forty => found.clone(),
    };

    let exts = ["off", "voxg"];
    let mut classes = Vec::with_capacity(wanted.len());
    for name in wanted {
        let dir = root.join(&name);
        let train_dir = dir.join("train");
        let test_dir = dir.join("test");
        let (train, test) = if train_dir.is_dir() && test_dir.is_dir() {
            let mut train = list_sorted(&train_dir, &exts)?;
            train.truncate(TRAIN_PER_CLASS);
            let mut test = list_sorted(&test_dir, &exts)?;
            test.truncate(TEST_PER_CLASS);
            (train, test)
        } else {
            let files = list_sorted(&dir, &exts)?;
            let split = files.len().min(TRAIN_PER_CLASS);
            let end = files.len().min(TRAIN_PER_CLASS + TEST_PER_CLASS);
            (files[..split].to_vec(), files[split..end].to_vec())
        };
        classes.push(ManifestClass { name, train, test });
    }
    Ok(DatasetManifest { classes })
}

/// Lazy, deterministic stream of voxel grids for one phase of a manifest.
pub struct DatasetStream {
    entries: Vec<(usize, PathBuf)>, // (class index, path)
    with_rotations: bool,
    pos: usize,
    pending: std::vec::IntoIter<VoxelGrid>,
}

impl DatasetStream {
    fn load_next(&mut self) -> Option<Result<Vec<VoxelGrid>, DatasetError>> {
        let (class, path) = self.entries.get(self.pos)?.clone();
        self.pos += 1;
        Some(load_entry(&path, class as u16, self.with_rotations))
    }
}

fn load_entry(
    path: &Path,
    label: u16,
    with_rotations: bool,
) -> Result<Vec<VoxelGrid>, DatasetError> {
    let is_off = path.extension().and_then(|e| e.to_str()) == Some("off");
    if is_off {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mesh: Mesh = parse_off(&text).map_err(|source| DatasetError::BadOff {
            path: path.to_path_buf(),
            source,
        })?;
        let grids = if with_rotations {
            augment(&mesh)
        } else {
            voxelize_standard(&mesh).map(|g| vec![g])
        }
        .map_err(|source| DatasetError::Voxelize {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(grids
            .into_iter()
            .enumerate()
            .map(|(k, g)| {
                g.with_label(label)
                    .with_provenance(format!("{}#rot{}", path.display(), k))
            })
            .collect())
    } else {
        // Pre-voxelized grids cannot be re-rotated; they stream as-is.
        let grid = load_voxg(path).map_err(|source| DatasetError::BadGrid {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(vec![grid
            .with_label(label)
            .with_provenance(path.display().to_string())])
    }
}

impl Iterator for DatasetStream {
    type Item = Result<VoxelGrid, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(grid) = self.pending.next() {
                return Some(Ok(grid));
            }
            match self.load_next()? {
                Ok(grids) => self.pending = grids.into_iter(),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Opens a deterministic stream over one phase of the dataset under `root`.
pub fn load_dataset(
    root: &Path,
    subset: Subset,
    phase: Phase,
    with_rotations: bool,
) -> Result<DatasetStream, DatasetError> {
    let manifest = build_manifest(root, subset)?;
    let mut entries = Vec::new();
    for (class, entry) in manifest.classes.iter().enumerate() {
        let paths = match phase {
            Phase::Train => &entry.train,
            Phase::Test => &entry.test,
        };
        for p in paths {
            entries.push((class, p.clone()));
        }
    }
    Ok(DatasetStream {
        entries,
        with_rotations,
        pos: 0,
        pending: Vec::new().into_iter(),
    })
}
