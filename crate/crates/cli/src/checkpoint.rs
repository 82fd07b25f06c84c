//! Versioned binary checkpoints.
//!
//! Layout: the 8-byte magic, a little-endian `u32` version, a `u64` header
//! length, the JSON header, then every layer's weights followed by its
//! biases as little-endian `f64`, in layer order. Analog checkpoints store
//! the dequantized weights and each array's full-scale clip, so reloading
//! reprograms the same conductances.

use std::io::{Read, Write};
use std::path::Path;

use bplight_core::analog::AnalogModel;
use bplight_core::device::DeviceParams;
use bplight_core::oracle::Model;
use bplight_core::train::Trained;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::spec::ExperimentSpec;

pub const MAGIC: &[u8; 8] = b"BPLCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub spec: ExperimentSpec,
    pub spec_hash: String,
    /// Per-array full-scale weights of an analog model.
    pub clips: Option<Vec<f64>>,
    pub parameter_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(spec: &ExperimentSpec, trained: &Trained) -> Self {
        let model = trained.model();
        let clips = match trained {
            Trained::Ideal(_) => None,
            Trained::Analog(a) => Some(a.clips()),
        };
        Self {
            header: Header {
                spec: spec.clone(),
                spec_hash: spec.hash(),
                clips,
                parameter_count: model.parameter_count(),
            },
            model,
        }
    }

    /// The analog model under `dev`, reusing the stored clips when present.
    pub fn program(&self, dev: &DeviceParams) -> Result<AnalogModel> {
        Ok(match &self.header.clips {
            Some(clips) => AnalogModel::program_with_clips(&self.model, dev, clips)?,
            None => AnalogModel::program(&self.model, dev)?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serialises");
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.header.parameter_count);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (w, b) in self.model.layers() {
            for v in w.iter().chain(b) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| CliError::checkpoint(path, reason);
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("file too short".into()))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(|_| bad("truncated version".into()))?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}, expected {VERSION}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| bad("truncated header length".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if r.len() < len {
            return Err(bad("truncated header".into()));
        }
        let (head, rest) = r.split_at(len);
        let header: Header = serde_json::from_slice(head).map_err(|e| bad(format!("header: {e}")))?;
        let mut model = Model::zeros(&header.spec.network)?;
        if model.parameter_count() != header.parameter_count || rest.len() != 8 * header.parameter_count {
            return Err(bad(format!(
                "expected {} parameters for {}, found {} bytes",
                model.parameter_count(),
                header.spec.network.name,
                rest.len()
            )));
        }
        let mut values = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for (w, b) in model.layers_mut() {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = values.next().expect("length checked");
            }
        }
        Ok(Self { header, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::checkpoint(path, e.to_string()))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::DataSource;
    use bplight_core::arch::parse_config;
    use bplight_core::oracle::{InitScheme, TrainingParams};
    use bplight_core::train::Mode;

    fn spec() -> ExperimentSpec {
        let network = parse_config("input = 1x6x6\nfe = 3x3, 2, 1\nfc = 3, 1\n").unwrap();
        ExperimentSpec {
            net: "tiny".into(),
            network,
            mode: Mode::Analog,
            device: DeviceParams::default(),
            training: TrainingParams::default(),
            init: InitScheme::default(),
            data: DataSource::Synthetic { train: 4, test: 2, seed: 0 },
        }
    }

    fn analog() -> (ExperimentSpec, Checkpoint, AnalogModel) {
        let s = spec();
        let model = Model::init(&s.network, 3, &s.init).unwrap();
        let am = AnalogModel::program(&model, &s.device).unwrap();
        let ck = Checkpoint::new(&s, &Trained::Analog(am.clone()));
        (s, ck, am)
    }

    #[test]
    fn round_trip_reprograms_identically() {
        let (s, ck, am) = analog();
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.program(&s.device).unwrap(), am);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (_, ck, _) = analog();
        let bytes = ck.to_bytes();
        let p = Path::new("mem");
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        for bad in [&bytes[..4], &bytes[..bytes.len() - 1], &wrong_magic, &wrong_version] {
            assert!(matches!(Checkpoint::from_bytes(bad, p), Err(CliError::Checkpoint { .. })));
        }
        assert!(matches!(Checkpoint::load(Path::new("/nonexistent.ckpt")), Err(CliError::Checkpoint { .. })));
    }
}
