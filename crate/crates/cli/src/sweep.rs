use std::path::Path;
use std::time::Instant;

use bplight_core::dataset::Dataset;
use bplight_core::device::{DeviceParams, Levels, LossBudget, NoiseSource, Resolution, Snr};
use bplight_core::perf::Phase;
use bplight_core::train::{evaluate, evaluate_analog, train, Trained};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{CliError, Result};
use crate::record::{RunRecord, SweepPoint};
use crate::runner::{reprogram, sweep_record, TrainRun};
use crate::spec::ExperimentSpec;

/// Which noise sources a device keeps. Everything not kept is ideal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSetting {
    Off,
    Only(NoiseSource),
    All,
}

impl NoiseSetting {
    /// Off, each source alone, then all together.
    pub const AUDIT: [NoiseSetting; 6] = [
        NoiseSetting::Off,
        NoiseSetting::Only(NoiseSource::Quantization),
        NoiseSetting::Only(NoiseSource::Soa),
        NoiseSetting::Only(NoiseSource::Comparator),
        NoiseSetting::Only(NoiseSource::Interface),
        NoiseSetting::All,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NoiseSetting::Off => "off",
            NoiseSetting::Only(s) => s.name(),
            NoiseSetting::All => "all",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::AUDIT
            .into_iter()
            .find(|n| n.label() == s)
            .ok_or_else(|| CliError::invalid(format!("unknown noise setting `{s}`")))
    }

    /// `base` with every non-ideality this setting does not keep switched off.
    pub fn device(self, base: &DeviceParams) -> DeviceParams {
        if self == NoiseSetting::All {
            return base.clone();
        }
        let mut dev = DeviceParams {
            memristor_states: Levels::Continuous,
            dac_bits: Resolution::Ideal,
            adc_bits: Resolution::Ideal,
            soa_snr_db: Snr::Infinite,
            comparator_snr_db: Snr::Infinite,
            interface_snr_db: Snr::Infinite,
            budget: LossBudget::lossless(),
            ..base.clone()
        };
        if let NoiseSetting::Only(source) = self {
            match source {
                NoiseSource::Quantization => dev.memristor_states = base.memristor_states,
                NoiseSource::Soa => dev.soa_snr_db = base.soa_snr_db,
                NoiseSource::Comparator => dev.comparator_snr_db = base.comparator_snr_db,
                NoiseSource::Interface => dev.interface_snr_db = base.interface_snr_db,
            }
        }
        dev
    }
}

/// Direction a sweep's mean accuracy is expected to move in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    NonDecreasing,
    NonIncreasing,
    /// No value beats the first one.
    AtMostFirst,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::NonDecreasing => "non_decreasing",
            Trend::NonIncreasing => "non_increasing",
            Trend::AtMostFirst => "at_most_first",
        }
    }

    fn holds(self, first: f64, prev: f64, cur: f64) -> bool {
        match self {
            Trend::NonDecreasing => cur >= prev,
            Trend::NonIncreasing => cur <= prev,
            Trend::AtMostFirst => cur <= first,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    /// DAC and ADC resolution.
    Bits(Vec<u32>),
    /// Waveguide propagation loss in dB/cm.
    PropLoss(Vec<f64>),
    Noise(Vec<NoiseSetting>),
}

impl SweepAxis {
    pub fn parse(axis: &str, values: &str) -> Result<Self> {
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if items.is_empty() {
            return Err(CliError::invalid("sweep needs at least one value"));
        }
        let num = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x >= 0.0)
                .ok_or_else(|| CliError::invalid(format!("`{v}` is not a non-negative number")))
        };
        Ok(match axis {
            "bits" => SweepAxis::Bits(
                items
                    .iter()
                    .map(|v| {
                        v.parse::<u32>()
                            .ok()
                            .filter(|b| (1..=52).contains(b))
                            .ok_or_else(|| CliError::invalid(format!("`{v}` is not a resolution in 1..=52 bits")))
                    })
                    .collect::<Result<_>>()?,
            ),
            "prop-loss" | "prop_loss" => SweepAxis::PropLoss(items.iter().map(|v| num(v)).collect::<Result<_>>()?),
            "noise" => SweepAxis::Noise(items.iter().map(|v| NoiseSetting::parse(v)).collect::<Result<_>>()?),
            other => return Err(CliError::invalid(format!("unknown sweep axis `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Bits(_) => "bits",
            SweepAxis::PropLoss(_) => "prop_loss",
            SweepAxis::Noise(_) => "noise",
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            SweepAxis::Bits(v) => v.iter().map(u32::to_string).collect(),
            SweepAxis::PropLoss(v) => v.iter().map(f64::to_string).collect(),
            SweepAxis::Noise(v) => v.iter().map(|n| n.label().to_string()).collect(),
        }
    }

    pub fn trend(&self) -> Trend {
        match self {
            SweepAxis::Bits(_) => Trend::NonDecreasing,
            SweepAxis::PropLoss(_) => Trend::NonIncreasing,
            SweepAxis::Noise(_) => Trend::AtMostFirst,
        }
    }

    /// Device for the `i`-th axis value.
    pub fn device(&self, i: usize, base: &DeviceParams) -> Result<DeviceParams> {
        let mut dev = base.clone();
        match self {
            SweepAxis::Bits(v) => dev.set_resolution(v[i]),
            SweepAxis::PropLoss(v) => dev.budget.prop_loss_db_per_cm = v[i],
            SweepAxis::Noise(v) => dev = v[i].device(base),
        }
        dev.validate()?;
        Ok(dev)
    }

    fn point(&self, i: usize) -> SweepPoint {
        SweepPoint {
            axis: self.name().into(),
            value: self.labels()[i].clone(),
        }
    }
}

/// Whether a sweep retrains per value or evaluates one trained model per
/// seed under each value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPhase {
    Infer,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub value: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub value: String,
    pub runs: usize,
    pub failed: usize,
    pub mean_accuracy: Option<f64>,
    pub min_accuracy: Option<f64>,
    pub max_accuracy: Option<f64>,
    /// `baseline` for the first value, then `ok`, `violation` or `failed`.
    pub step_verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: String,
    pub phase: SweepPhase,
    pub trend: Trend,
    pub seeds: Vec<u64>,
    pub rows: Vec<SummaryRow>,
    /// True when every value ran and every step follows the trend.
    pub trend_holds: bool,
}

pub const SWEEP_CSV_HEADER: [&str; 10] = [
    "axis",
    "phase",
    "value",
    "runs",
    "failed",
    "mean_accuracy",
    "min_accuracy",
    "max_accuracy",
    "expected_trend",
    "step_verdict",
];

impl SweepSummary {
    /// Summarise per-value accuracies, keeping the axis order.
    pub fn new(axis: &SweepAxis, phase: SweepPhase, seeds: &[u64], results: &[Vec<Option<f64>>]) -> Self {
        let trend = axis.trend();
        let (mut first, mut prev) = (None, None);
        let mut holds = true;
        let rows = axis
            .labels()
            .into_iter()
            .zip(results)
            .map(|(value, accs)| {
                let ok: Vec<f64> = accs.iter().flatten().copied().collect();
                let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
                let verdict = match (mean, first, prev) {
                    (None, _, _) => "failed",
                    (Some(_), None, _) => "baseline",
                    (Some(m), Some(f), Some(p)) if trend.holds(f, p, m) => "ok",
                    _ => "violation",
                };
                holds &= verdict == "ok" || verdict == "baseline";
                holds &= ok.len() == accs.len();
                if let Some(m) = mean {
                    first = first.or(Some(m));
                    prev = Some(m);
                }
                SummaryRow {
                    value,
                    runs: accs.len(),
                    failed: accs.len() - ok.len(),
                    mean_accuracy: mean,
                    min_accuracy: ok.iter().copied().reduce(f64::min),
                    max_accuracy: ok.iter().copied().reduce(f64::max),
                    step_verdict: verdict.into(),
                }
            })
            .collect();
        Self {
            axis: axis.name().into(),
            phase,
            trend,
            seeds: seeds.to_vec(),
            rows,
            trend_holds: holds,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(SWEEP_CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let phase = match self.phase {
            SweepPhase::Infer => "infer",
            SweepPhase::Train => "train",
        };
        for r in &self.rows {
            w.write_record([
                self.axis.clone(),
                phase.into(),
                r.value.clone(),
                r.runs.to_string(),
                r.failed.to_string(),
                opt(r.mean_accuracy),
                opt(r.min_accuracy),
                opt(r.max_accuracy),
                self.trend.as_str().into(),
                r.step_verdict.clone(),
            ])?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<SweepFailure>,
    pub summary: SweepSummary,
}

fn seeded(spec: &ExperimentSpec, seed: u64) -> ExperimentSpec {
    let mut s = spec.clone();
    s.training.seed = seed;
    s
}

/// Accuracy of one trained network under the `i`-th axis value. Noise
/// settings change how weights are programmed, so those reprogram the
/// dequantized weights; other axes keep the trained conductances.
fn point_accuracy(trained: &Trained, axis: &SweepAxis, i: usize, base: &DeviceParams, test: &Dataset, seed: u64) -> Result<f64> {
    let dev = axis.device(i, base)?;
    Ok(match (trained, axis) {
        (Trained::Analog(am), SweepAxis::Bits(_) | SweepAxis::PropLoss(_)) => evaluate_analog(am, test, &dev, seed)?,
        _ => evaluate_analog(&reprogram(&trained.model(), &dev)?, test, &dev, seed)?,
    })
}

/// Evaluate already-trained runs (one per seed) at every axis value.
pub fn infer_sweep(axis: &SweepAxis, runs: &[TrainRun], test: &Dataset) -> SweepOutcome {
    let seeded: Vec<_> = runs.iter().map(|r| (r.record.seed, Ok(r))).collect();
    infer_points(axis, &seeded, test)
}

/// Per-seed training results, where a failed seed fails every axis value.
type SeedRuns<'a> = [(u64, std::result::Result<&'a TrainRun, String>)];

fn infer_points(axis: &SweepAxis, runs: &SeedRuns, test: &Dataset) -> SweepOutcome {
    let labels = axis.labels();
    let mut results = vec![Vec::new(); labels.len()];
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, run) in runs {
        for (i, label) in labels.iter().enumerate() {
            let started = Instant::now();
            let point = run.clone().map_err(CliError::Invalid).and_then(|run| {
                let base = &run.record.spec;
                let acc = point_accuracy(&run.outcome.trained, axis, i, &base.device, test, *seed)?;
                let mut spec = base.clone();
                spec.device = axis.device(i, &base.device)?;
                let fields = (run.outcome.metrics.clone(), acc, run.outcome.saturations);
                sweep_record(&spec, axis.point(i), fields, Phase::Inference, started)
            });
            match point {
                Ok(rec) => {
                    log::info!("{} = {label}, seed {seed}: accuracy {:.4}", axis.name(), rec.test_accuracy);
                    results[i].push(Some(rec.test_accuracy));
                    records.push(rec);
                }
                Err(e) => {
                    log::warn!("{} = {label}, seed {seed} failed: {e}", axis.name());
                    results[i].push(None);
                    failures.push(SweepFailure {
                        value: label.clone(),
                        seed: *seed,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    let seeds: Vec<u64> = runs.iter().map(|r| r.0).collect();
    SweepOutcome {
        records,
        failures,
        summary: SweepSummary::new(axis, SweepPhase::Infer, &seeds, &results),
    }
}

/// Run a sweep over `seeds`, loading `spec.data` once. Failed runs are
/// recorded and the sweep carries on.
pub fn run_sweep(spec: &ExperimentSpec, axis: &SweepAxis, seeds: &[u64], phase: SweepPhase) -> Result<SweepOutcome> {
    if seeds.is_empty() {
        return Err(CliError::invalid("sweep needs at least one seed"));
    }
    spec.validate()?;
    let (train_set, test_set) = spec.data.load(&spec.network)?;
    match phase {
        SweepPhase::Infer => {
            let trained: Vec<(u64, Result<TrainRun>)> = seeds
                .iter()
                .map(|&seed| (seed, crate::runner::train_on(&seeded(spec, seed), &train_set, &test_set)))
                .collect();
            let runs: Vec<_> = trained
                .iter()
                .map(|(seed, r)| (*seed, r.as_ref().map_err(|e| format!("training failed: {e}"))))
                .collect();
            Ok(infer_points(axis, &runs, &test_set))
        }
        SweepPhase::Train => {
            let labels = axis.labels();
            let mut results = vec![Vec::new(); labels.len()];
            let mut records = Vec::new();
            let mut failures = Vec::new();
            for (i, label) in labels.iter().enumerate() {
                for &seed in seeds {
                    let started = Instant::now();
                    let run = axis.device(i, &spec.device).and_then(|dev| {
                        let mut s = seeded(spec, seed);
                        s.device = dev;
                        let out = train(&s.network, &s.training, &s.init, s.mode, &s.device, &train_set, &test_set)?;
                        let fields = (out.metrics, out.test_accuracy, out.saturations);
                        sweep_record(&s, axis.point(i), fields, Phase::Training, started)
                    });
                    match run {
                        Ok(rec) => {
                            log::info!("{} = {label}, seed {seed}: accuracy {:.4}", axis.name(), rec.test_accuracy);
                            results[i].push(Some(rec.test_accuracy));
                            records.push(rec);
                        }
                        Err(e) => {
                            log::warn!("{} = {label}, seed {seed} failed: {e}", axis.name());
                            results[i].push(None);
                            failures.push(SweepFailure {
                                value: label.clone(),
                                seed,
                                error: e.to_string(),
                            });
                        }
                    }
                }
            }
            Ok(SweepOutcome {
                records,
                failures,
                summary: SweepSummary::new(axis, SweepPhase::Train, seeds, &results),
            })
        }
    }
}

/// Published per-source contributions to prediction error, in percentage
/// points, for side-by-side comparison.
pub const PUBLISHED_ERROR_PP: [(NoiseSource, f64); 4] = [
    (NoiseSource::Quantization, 1.2),
    (NoiseSource::Soa, 2.35),
    (NoiseSource::Comparator, 1.0),
    (NoiseSource::Interface, 1.45),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub setting: String,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Mean accuracy lost against the all-off row, in percentage points.
    pub delta_pp: f64,
    pub published_pp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseAudit {
    pub net: String,
    pub seeds: Vec<u64>,
    /// Accuracy of the digital reference on the same weights.
    pub ideal_accuracy: f64,
    pub rows: Vec<AuditRow>,
}

pub const AUDIT_CSV_HEADER: [&str; 5] = ["setting", "mean_accuracy", "delta_pp", "published_pp", "accuracies"];

impl NoiseAudit {
    pub fn row(&self, setting: NoiseSetting) -> Option<&AuditRow> {
        self.rows.iter().find(|r| r.setting == setting.label())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(AUDIT_CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.setting.clone(),
                r.mean_accuracy.to_string(),
                r.delta_pp.to_string(),
                r.published_pp.map_or(String::new(), |p| p.to_string()),
                r.accuracies.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            ])?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

/// Inference on `test` with each noise source alone, all off and all on.
/// Each setting programs the checkpoint's dequantized weights with its own
/// ranging, and evaluation noise is keyed by each seed in turn.
pub fn noise_audit(ck: &Checkpoint, base: &DeviceParams, test: &Dataset, seeds: &[u64]) -> Result<NoiseAudit> {
    if seeds.is_empty() {
        return Err(CliError::invalid("noise audit needs at least one seed"));
    }
    let mut rows: Vec<AuditRow> = Vec::new();
    for setting in NoiseSetting::AUDIT {
        let dev = setting.device(base);
        dev.validate()?;
        let am = reprogram(&ck.model, &dev)?;
        let accuracies = seeds
            .iter()
            .map(|&s| evaluate_analog(&am, test, &dev, s))
            .collect::<bplight_core::Result<Vec<_>>>()?;
        let mean_accuracy = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        let off = rows.first().map_or(mean_accuracy, |r| r.mean_accuracy);
        let published_pp = match setting {
            NoiseSetting::Only(src) => PUBLISHED_ERROR_PP.iter().find(|(s, _)| *s == src).map(|p| p.1),
            _ => None,
        };
        log::info!("noise {}: accuracy {mean_accuracy:.4}", setting.label());
        rows.push(AuditRow {
            setting: setting.label().into(),
            accuracies,
            mean_accuracy,
            delta_pp: 100.0 * (off - mean_accuracy),
            published_pp,
        });
    }
    Ok(NoiseAudit {
        net: ck.header.spec.network.name.clone(),
        seeds: seeds.to_vec(),
        ideal_accuracy: evaluate(&ck.model, test)?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_match_single_source_devices() {
        let base = DeviceParams::default();
        for s in NoiseSource::ALL {
            assert_eq!(NoiseSetting::Only(s).device(&base), DeviceParams::only(s));
        }
        assert_eq!(NoiseSetting::Off.device(&base), DeviceParams::ideal());
        assert_eq!(NoiseSetting::All.device(&base), base);
    }

    #[test]
    fn axis_parsing() {
        assert_eq!(SweepAxis::parse("bits", "2, 4,8").unwrap(), SweepAxis::Bits(vec![2, 4, 8]));
        assert_eq!(SweepAxis::parse("prop-loss", "1,2.5").unwrap(), SweepAxis::PropLoss(vec![1.0, 2.5]));
        assert_eq!(
            SweepAxis::parse("noise", "off,soa").unwrap(),
            SweepAxis::Noise(vec![NoiseSetting::Off, NoiseSetting::Only(NoiseSource::Soa)])
        );
        for (axis, values) in [("bits", ""), ("bits", "0"), ("prop-loss", "-1"), ("noise", "loud"), ("mass", "1")] {
            assert!(matches!(SweepAxis::parse(axis, values), Err(CliError::Invalid(_))), "{axis}={values}");
        }
    }

    #[test]
    fn summary_keeps_order_and_flags_violations() {
        let axis = SweepAxis::Bits(vec![16, 2, 8]);
        let res = vec![vec![Some(0.9), Some(0.8)], vec![Some(0.5), None], vec![Some(0.95), Some(0.95)]];
        let s = SweepSummary::new(&axis, SweepPhase::Infer, &[1, 2], &res);
        let values: Vec<&str> = s.rows.iter().map(|r| r.value.as_str()).collect();
        assert_eq!(values, ["16", "2", "8"]);
        let verdicts: Vec<&str> = s.rows.iter().map(|r| r.step_verdict.as_str()).collect();
        assert_eq!(verdicts, ["baseline", "violation", "ok"]);
        assert_eq!(s.rows[1].failed, 1);
        assert!((s.rows[0].mean_accuracy.unwrap() - 0.85).abs() < 1e-12);
        assert!(!s.trend_holds);
    }

    #[test]
    fn at_most_first_compares_with_baseline() {
        let axis = SweepAxis::Noise(vec![NoiseSetting::Off, NoiseSetting::All, NoiseSetting::Off]);
        let res = vec![vec![Some(0.9)], vec![Some(0.7)], vec![Some(0.9)]];
        let s = SweepSummary::new(&axis, SweepPhase::Infer, &[1], &res);
        assert!(s.trend_holds);
    }
}
