use std::time::Instant;

use bplight_core::analog::AnalogModel;
use bplight_core::arch::NetworkConfig;
use bplight_core::dataset::Dataset;
use bplight_core::device::{DeviceParams, Resolution};
use bplight_core::perf::{
    efficiency_report, resolution_delta, ComponentBudget, Phase, PerfReport, ResolutionCalibration, TimingParams,
};
use bplight_core::train::{evaluate, evaluate_analog, train, Mode, TrainOutcome, Trained};

use crate::checkpoint::Checkpoint;
use crate::error::Result;
use crate::record::{RunKind, RunRecord, SweepPoint, SCHEMA_VERSION};
use crate::spec::{noise_summary, DataSource, ExperimentSpec};

/// Efficiency report for `net` on `dev`'s component budget, rescaled to
/// the device's converter resolution when it has one.
pub fn perf_for(net: &NetworkConfig, dev: &DeviceParams, phase: Phase) -> Result<PerfReport> {
    let report = efficiency_report(net, &ComponentBudget::for_device(dev), &TimingParams::default(), phase)?;
    Ok(match dev.dac_bits {
        Resolution::Bits(bits) if (2..=32).contains(&bits) => {
            resolution_delta(&report, bits, &ResolutionCalibration::for_phase(phase))?
        }
        _ => report,
    })
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' })
        .collect()
}

pub(crate) fn run_id(kind: RunKind, spec: &ExperimentSpec, point: Option<&SweepPoint>) -> String {
    let mode = match spec.mode {
        Mode::Ideal => "ideal",
        Mode::Analog => "analog",
    };
    let at = point.map_or(String::new(), |p| format!("-{}{}", slug(&p.axis), slug(&p.value)));
    format!(
        "{}-{}-{mode}{at}-s{}-{}",
        kind.as_str(),
        slug(&spec.network.name),
        spec.training.seed,
        &spec.hash()[..12]
    )
}

fn record(
    kind: RunKind,
    spec: &ExperimentSpec,
    point: Option<SweepPoint>,
    outcome_fields: (Vec<bplight_core::train::EpochMetrics>, f64, u64),
    phase: Phase,
    started: Instant,
) -> Result<RunRecord> {
    let (metrics, test_accuracy, saturations) = outcome_fields;
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        run_id: run_id(kind, spec, point.as_ref()),
        kind,
        spec_hash: spec.hash(),
        spec: spec.clone(),
        seed: spec.training.seed,
        noise: noise_summary(&spec.device),
        sweep_point: point,
        metrics,
        test_accuracy,
        saturations,
        perf: perf_for(&spec.network, &spec.device, phase)?,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub record: RunRecord,
    pub outcome: TrainOutcome,
}

impl TrainRun {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.record.spec, &self.outcome.trained)
    }
}

/// Train on already-loaded splits of `spec.data`.
pub fn train_on(spec: &ExperimentSpec, train_set: &Dataset, test_set: &Dataset) -> Result<TrainRun> {
    spec.validate()?;
    let started = Instant::now();
    let outcome = train(
        &spec.network,
        &spec.training,
        &spec.init,
        spec.mode,
        &spec.device,
        train_set,
        test_set,
    )?;
    for m in &outcome.metrics {
        log::info!(
            "seed {} epoch {}: cost {:.5}, train {:.4}, test {:.4}",
            spec.training.seed,
            m.epoch,
            m.cost,
            m.train_accuracy,
            m.test_accuracy
        );
    }
    let fields = (outcome.metrics.clone(), outcome.test_accuracy, outcome.saturations);
    let record = record(RunKind::Train, spec, None, fields, Phase::Training, started)?;
    Ok(TrainRun { record, outcome })
}

pub fn run_train(spec: &ExperimentSpec) -> Result<TrainRun> {
    spec.validate()?;
    let (train_set, test_set) = spec.data.load(&spec.network)?;
    train_on(spec, &train_set, &test_set)
}

/// Test accuracy of `model` under `dev`, with evaluation noise keyed by `seed`.
pub fn accuracy(trained: &Trained, test: &Dataset, dev: &DeviceParams, seed: u64) -> Result<f64> {
    Ok(match trained {
        Trained::Ideal(m) => evaluate(m, test)?,
        Trained::Analog(a) => evaluate_analog(a, test, dev, seed)?,
    })
}

/// Inference from a checkpoint on `data`'s test split, under `dev`.
pub fn run_infer(ck: &Checkpoint, dev: &DeviceParams, data: &DataSource, seed: u64) -> Result<RunRecord> {
    let started = Instant::now();
    let mut spec = ck.header.spec.clone();
    spec.device = dev.clone();
    spec.data = data.clone();
    spec.training.seed = seed;
    spec.validate()?;
    let (_, test) = data.load(&spec.network)?;
    let trained = match spec.mode {
        Mode::Ideal => Trained::Ideal(ck.model.clone()),
        Mode::Analog => Trained::Analog(ck.program(dev)?),
    };
    let acc = accuracy(&trained, &test, dev, seed)?;
    record(RunKind::Infer, &spec, None, (Vec::new(), acc, 0), Phase::Inference, started)
}

/// Program a fresh analog copy of `model` under `dev` with its own ranging.
pub fn reprogram(model: &bplight_core::oracle::Model, dev: &DeviceParams) -> Result<AnalogModel> {
    Ok(AnalogModel::program(model, dev)?)
}

pub(crate) fn sweep_record(
    spec: &ExperimentSpec,
    point: SweepPoint,
    fields: (Vec<bplight_core::train::EpochMetrics>, f64, u64),
    phase: Phase,
    started: Instant,
) -> Result<RunRecord> {
    record(RunKind::Sweep, spec, Some(point), fields, phase, started)
}
