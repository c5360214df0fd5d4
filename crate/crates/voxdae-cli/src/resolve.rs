//! Config-file / flag resolution and dataset loading.
//!
//! Values resolve in three layers: built-in defaults, then the `--config`
//! file, then explicit command-line flags. The resolved map is also what
//! gets hashed into checkpoints and reports for audit.

use crate::{Cli, CliError};
use std::path::Path;
use voxdae::config::{parse_config, ConfigMap};
use voxdae::mesh::{
    load_dataset, synthetic_dataset, Phase, Subset, VoxelGrid, SYNTHETIC_CLASSES,
};
use voxdae::scalar::Precision;

pub struct Resolved {
    cfg: ConfigMap,
}

impl Resolved {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let mut cfg = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::data(format!("cannot read config {}: {e}", path.display()))
                })?;
                parse_config(&text).map_err(|e| CliError::data(e.to_string()))?
            }
            None => ConfigMap::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.set("seed", seed.to_string());
        }
        if let Some(p) = cli.precision {
            cfg.set("precision", p.to_string());
        }
        if let Some(t) = cli.threads {
            if t == 0 {
                return Err(CliError::usage("--threads must be at least 1"));
            }
            cfg.set("threads", t.to_string());
        }
        Ok(Resolved { cfg })
    }

    /// Applies a command-line override when the flag was given.
    pub fn set_flag<T: ToString>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.cfg.set(key, v.to_string());
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.cfg.set(key, value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.cfg.get(key)
    }

    pub fn hash(&self) -> u64 {
        self.cfg.hash()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.cfg.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| CliError::usage(format!("invalid value `{raw}` for `{key}`"))),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        self.parse(key, default)
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, CliError> {
        self.parse(key, default)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.parse("seed", 0u64)
    }

    pub fn precision(&self) -> Result<Precision, CliError> {
        match self.cfg.get("precision") {
            None => Ok(Precision::F32),
            Some("32") => Ok(Precision::F32),
            Some("64") => Ok(Precision::F64),
            Some(other) => Err(CliError::usage(format!(
                "invalid precision `{other}` (expected 32 or 64)"
            ))),
        }
    }
}

/// A loaded evaluation/training set with the names behind its labels.
pub struct LoadedSet {
    pub grids: Vec<VoxelGrid>,
    pub class_names: Vec<String>,
}

/// Loads grids for one phase from a selector: `synthetic` for the built-in
/// generator, otherwise a dataset root directory. Falls back to the
/// `VOXDAE_DATA` environment variable when no selector is configured.
pub fn load_grids(
    selector: Option<&str>,
    phase: Phase,
    resolved: &Resolved,
) -> Result<LoadedSet, CliError> {
    let fallback;
    let selector = match selector.or_else(|| resolved.get("dataset")) {
        Some(s) => s,
        None => match std::env::var("VOXDAE_DATA") {
            Ok(v) => {
                fallback = v;
                &fallback
            }
            Err(_) => {
                return Err(CliError::usage(
                    "no dataset: pass --dataset DIR|synthetic or set VOXDAE_DATA",
                ))
            }
        },
    };

    if selector == "synthetic" {
        let seed = resolved.seed()?;
        let (per_class, purpose) = match phase {
            Phase::Train => (resolved.usize("synth_train_per_class", 50)?, "synth-train"),
            Phase::Test => (resolved.usize("synth_test_per_class", 20)?, "synth-test"),
        };
        let grids = synthetic_dataset(per_class, voxdae::rng::derive_seed(seed, purpose));
        return Ok(LoadedSet {
            grids,
            class_names: SYNTHETIC_CLASSES.iter().map(|c| c.name().to_string()).collect(),
        });
    }

    let subset = match resolved.usize("subset", 40)? {
        10 => Subset::Ten,
        40 => Subset::Forty,
        other => {
            return Err(CliError::usage(format!(
                "invalid subset `{other}` (expected 10 or 40)"
            )))
        }
    };
    let with_rotations = resolved.parse("rotations", false)?;
    let root = Path::new(selector);
    let manifest = voxdae::mesh::build_manifest(root, subset)
        .map_err(|e| CliError::data(e.to_string()))?;
    let class_names = manifest.class_names();
    let grids = load_dataset(root, subset, phase, with_rotations)
        .map_err(|e| CliError::data(e.to_string()))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::data(e.to_string()))?;
    Ok(LoadedSet { grids, class_names })
}
