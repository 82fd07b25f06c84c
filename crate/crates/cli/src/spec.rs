use std::path::{Path, PathBuf};

use bplight_core::arch::NetworkConfig;
use bplight_core::dataset::{load_idx, subset, synthesize, Dataset};
use bplight_core::device::{DeviceParams, Levels, Resolution, Snr};
use bplight_core::oracle::{InitScheme, TrainingParams};
use bplight_core::train::Mode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

const IMAGE_FILES: [&str; 2] = ["images-idx3-ubyte", "train-images-idx3-ubyte"];
const LABEL_FILES: [&str; 2] = ["labels-idx1-ubyte", "train-labels-idx1-ubyte"];

/// Where samples come from. Both variants split one pool into disjoint,
/// class-stratified train and test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Idx {
        dir: PathBuf,
        train: usize,
        test: usize,
        subset_seed: u64,
    },
    /// Separable blobs shaped like the network input, for runs that must
    /// not depend on files.
    Synthetic { train: usize, test: usize, seed: u64 },
}

impl DataSource {
    pub fn sizes(&self) -> (usize, usize) {
        match *self {
            DataSource::Idx { train, test, .. } | DataSource::Synthetic { train, test, .. } => (train, test),
        }
    }

    pub fn load(&self, net: &NetworkConfig) -> Result<(Dataset, Dataset)> {
        match self {
            DataSource::Idx {
                dir,
                train,
                test,
                subset_seed,
            } => {
                let images = find_file(dir, &IMAGE_FILES)?;
                let labels = find_file(dir, &LABEL_FILES)?;
                let pool = load_idx(images, labels)?;
                Ok(subset(&pool, *train, *test, *subset_seed)?)
            }
            DataSource::Synthetic { train, test, seed } => {
                let pool = synthesize(net.input, train + test, net.class_count(), *seed);
                Ok(subset(&pool, *train, *test, *seed)?)
            }
        }
    }
}

/// First of `names`, plain or gzipped, that exists in `dir`.
fn find_file(dir: &Path, names: &[&str]) -> Result<PathBuf> {
    names
        .iter()
        .flat_map(|n| [dir.join(n), dir.join(format!("{n}.gz"))])
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::DatasetMissing {
            dir: dir.to_path_buf(),
            wanted: names.join(" or "),
        })
}

/// Everything that determines a run's numbers. Two runs with equal specs
/// produce identical records apart from wall-clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Preset name or config path as given.
    pub net: String,
    pub network: NetworkConfig,
    pub mode: Mode,
    pub device: DeviceParams,
    pub training: TrainingParams,
    pub init: InitScheme,
    pub data: DataSource,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.training.validate()?;
        self.device.validate()?;
        let (train, test) = self.data.sizes();
        if train == 0 || test == 0 {
            return Err(CliError::invalid("train and test sizes must be positive"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the spec's canonical JSON.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spec serialises");
        hex(&Sha256::digest(canonical))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Human-readable setting of each noise source on `dev`.
pub fn noise_summary(dev: &DeviceParams) -> std::collections::BTreeMap<String, String> {
    let snr = |s: Snr| match s {
        Snr::Infinite => "off".to_string(),
        Snr::Db(db) => format!("{db} dB"),
    };
    let bits = |r: Resolution| match r {
        Resolution::Ideal => "ideal".to_string(),
        Resolution::Bits(b) => format!("{b} bits"),
    };
    [
        (
            "quantization",
            match dev.memristor_states {
                Levels::Continuous => "off".to_string(),
                Levels::Finite(n) => format!("{n} states"),
            },
        ),
        ("soa", snr(dev.soa_snr_db)),
        ("comparator", snr(dev.comparator_snr_db)),
        ("interface", snr(dev.interface_snr_db)),
        ("dac", bits(dev.dac_bits)),
        ("adc", bits(dev.adc_bits)),
        ("prop_loss_db_per_cm", dev.budget.prop_loss_db_per_cm.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}
