use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::Path;

use bplight_core::device::Resolution;
use bplight_core::perf::PerfReport;
use bplight_core::train::EpochMetrics;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::spec::ExperimentSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Field excluded from determinism comparisons.
pub const WALL_CLOCK_FIELD: &str = "wall_clock_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Train,
    Infer,
    Sweep,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Train => "train",
            RunKind::Infer => "infer",
            RunKind::Sweep => "sweep",
        }
    }
}

/// Axis value a sweep run was taken at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub kind: RunKind,
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub seed: u64,
    pub noise: BTreeMap<String, String>,
    pub sweep_point: Option<SweepPoint>,
    pub metrics: Vec<EpochMetrics>,
    pub test_accuracy: f64,
    pub saturations: u64,
    pub perf: PerfReport,
    pub wall_clock_s: f64,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serialises");
        s.push('\n');
        s
    }

    pub fn write_json(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join(format!("{}.json", self.run_id));
        std::fs::write(&path, self.to_json()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    fn csv_row(&self) -> Vec<String> {
        let dev = &self.spec.device;
        let bits = match dev.dac_bits {
            Resolution::Bits(b) => b.to_string(),
            Resolution::Ideal => "ideal".into(),
        };
        let (train, test) = self.spec.data.sizes();
        let (axis, value) = self
            .sweep_point
            .as_ref()
            .map_or((String::new(), String::new()), |p| (p.axis.clone(), p.value.clone()));
        vec![
            self.run_id.clone(),
            self.kind.as_str().into(),
            self.spec.network.name.clone(),
            serde_json::to_value(self.spec.mode).expect("mode").as_str().unwrap_or_default().into(),
            self.seed.to_string(),
            self.spec.training.epochs.to_string(),
            train.to_string(),
            test.to_string(),
            bits,
            dev.budget.prop_loss_db_per_cm.to_string(),
            axis,
            value,
            self.metrics.last().map_or(String::new(), |m| m.cost.to_string()),
            self.test_accuracy.to_string(),
            self.saturations.to_string(),
            self.perf.forward_latency_ns.to_string(),
            self.perf.throughput_gops.to_string(),
            self.spec_hash.clone(),
        ]
    }
}

/// Column order of the aggregate run table. Append-only across versions.
pub const RUNS_CSV_HEADER: [&str; 18] = [
    "run_id",
    "kind",
    "net",
    "mode",
    "seed",
    "epochs",
    "train_size",
    "test_size",
    "bits",
    "prop_loss_db_per_cm",
    "sweep_axis",
    "sweep_value",
    "final_cost",
    "test_accuracy",
    "saturations",
    "forward_latency_ns",
    "throughput_gops",
    "spec_hash",
];

/// Append records to the aggregate CSV, writing the header if the file is new.
pub fn append_runs_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let fresh = file.metadata().map_err(|e| CliError::io(path, e))?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(RUNS_CSV_HEADER)?;
    }
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// The record's JSON text with the wall-clock line removed, for byte-level
/// determinism checks.
pub fn strip_wall_clock(json: &str) -> String {
    let key = format!("\"{WALL_CLOCK_FIELD}\":");
    json.lines()
        .filter(|l| !l.trim_start().starts_with(&key))
        .map(|l| format!("{l}\n"))
        .collect()
}
