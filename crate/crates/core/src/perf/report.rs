use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::budget::ComponentBudget;
use super::ops::{count_ops, OP_COUNT_METHOD};
use super::timing::{backward_latency_ps, forward_latency, TimingParams};
use crate::arch::{plan_tiling, NetworkConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Inference,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Training, Phase::Inference];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Training => "training",
            Phase::Inference => "inference",
        }
    }
}

/// Published averages for the comparison accelerators, plus the averages
/// and ratios claimed for this design. Stored, never recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub pipelayer_gops: f64,
    pub gpu_gops: f64,
    pub pipelayer_gops_per_mm2: f64,
    pub gpu_gops_per_mm2: f64,
    pub pipelayer_gops_per_w: Option<f64>,
    pub claimed_gops: f64,
    pub claimed_gops_per_w: Option<f64>,
    pub claimed_vs_pipelayer: f64,
    pub claimed_vs_gpu: f64,
    pub claimed_energy_vs_pipelayer: f64,
}

pub fn baseline(phase: Phase) -> Baseline {
    match phase {
        Phase::Training => Baseline {
            pipelayer_gops: 2923.0,
            gpu_gops: 305.0,
            pipelayer_gops_per_mm2: 2923.0,
            gpu_gops_per_mm2: 305.67,
            pipelayer_gops_per_w: Some(242.3),
            claimed_gops: 99534.0,
            claimed_gops_per_w: Some(9327.5),
            claimed_vs_pipelayer: 34.0,
            claimed_vs_gpu: 326.0,
            claimed_energy_vs_pipelayer: 38.5,
        },
        Phase::Inference => Baseline {
            pipelayer_gops: 3102.0,
            gpu_gops: 347.0,
            pipelayer_gops_per_mm2: 1425.0,
            gpu_gops_per_mm2: 130.0,
            pipelayer_gops_per_w: None,
            claimed_gops: 90985.0,
            claimed_gops_per_w: None,
            claimed_vs_pipelayer: 29.0,
            claimed_vs_gpu: 263.0,
            claimed_energy_vs_pipelayer: 38.7,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub throughput_vs_pipelayer: f64,
    pub throughput_vs_gpu: f64,
    pub comp_eff_vs_pipelayer: f64,
    pub energy_eff_vs_pipelayer: Option<f64>,
    pub baseline: Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub net: String,
    pub phase: Phase,
    pub image: [usize; 2],
    pub resolution_bits: u32,
    pub tile_clocks: usize,
    pub cycles: usize,
    pub forward_latency_ns: f64,
    pub backward_latency_ps: f64,
    /// Time between successive samples entering the pipeline.
    pub interval_ns: f64,
    pub op_count: u64,
    pub throughput_gops: f64,
    pub power_w: f64,
    pub area_mm2: f64,
    pub energy_eff_gops_per_w: f64,
    pub comp_eff_gops_per_mm2: f64,
    pub comparison: Comparison,
    pub methodology: BTreeMap<String, String>,
}

/// `q` with `q * d == t` in binary floating point, if one sits next to `t / d`.
fn exact_quotient(t: f64, d: f64) -> Option<f64> {
    let q = t / d;
    [q, q.next_up(), q.next_down()].into_iter().find(|&c| c * d == t)
}

/// Move `throughput` by the fewest ulps needed so that both efficiencies
/// multiply back to it exactly.
fn exact_ratios(throughput: f64, power: f64, area: f64) -> (f64, f64, f64) {
    let (mut up, mut down) = (throughput, throughput);
    for step in 0..1 << 16 {
        let t = if step % 2 == 0 { up } else { down };
        if let (Some(e), Some(c)) = (exact_quotient(t, power), exact_quotient(t, area)) {
            return (t, e, c);
        }
        if step % 2 == 0 {
            up = up.next_up();
        } else {
            down = down.next_down();
        }
    }
    (throughput, throughput / power, throughput / area)
}

fn methodology(phase: Phase) -> BTreeMap<String, String> {
    let interval = match phase {
        Phase::Training => "forward latency + backward latency (weight update overlaps the next sample)",
        Phase::Inference => "forward latency",
    };
    [
        ("op_count", OP_COUNT_METHOD.to_string()),
        (
            "forward_latency",
            "cycles x tile clocks x clock period, plus one clock and one feed-forward hop per FC stage".into(),
        ),
        ("backward_latency", "(FE stages + 1) x backward hop time".into()),
        ("interval", interval.into()),
        ("throughput", "op_count / interval, in GOPS/s".into()),
        (
            "power",
            "sum of component table totals (TIA at energy-per-bit x line rate x count) plus laser link budget, in W"
                .into(),
        ),
        ("area", "sum of component table area totals, in mm2".into()),
        ("energy_eff", "throughput / power".into()),
        ("comp_eff", "throughput / area".into()),
        (
            "exactness",
            "throughput is nudged by at most a few ulps so that both efficiency products reproduce it exactly".into(),
        ),
        ("baselines", "stored published averages; ratios are this report over the baseline".into()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn finalize(report: &mut PerfReport, raw_throughput: f64) {
    let (t, e, c) = exact_ratios(raw_throughput, report.power_w, report.area_mm2);
    report.throughput_gops = t;
    report.energy_eff_gops_per_w = e;
    report.comp_eff_gops_per_mm2 = c;
    let b = report.comparison.baseline;
    report.comparison.throughput_vs_pipelayer = t / b.pipelayer_gops;
    report.comparison.throughput_vs_gpu = t / b.gpu_gops;
    report.comparison.comp_eff_vs_pipelayer = c / b.pipelayer_gops_per_mm2;
    report.comparison.energy_eff_vs_pipelayer = b.pipelayer_gops_per_w.map(|p| e / p);
}

pub fn efficiency_report(
    net: &NetworkConfig,
    budget: &ComponentBudget,
    t: &TimingParams,
    phase: Phase,
) -> Result<PerfReport> {
    net.validate()?;
    budget.validate()?;
    let power_w = budget.power_mw() / 1e3;
    let area_mm2 = budget.area_mm2();
    if !(power_w > 0.0 && area_mm2 > 0.0) {
        return Err(Error::config("component budget needs positive total power and area"));
    }
    let plan = plan_tiling(net);
    let fwd = forward_latency(net, &plan, t);
    let bwd_ps = backward_latency_ps(net, t);
    let ops = count_ops(net)?;
    let (op_count, interval_ns) = match phase {
        Phase::Training => (ops.training(), fwd.total_ns + bwd_ps / 1e3),
        Phase::Inference => (ops.forward(), fwd.total_ns),
    };
    let mut report = PerfReport {
        net: net.name.clone(),
        phase,
        image: [net.input[1], net.input[2]],
        resolution_bits: REFERENCE_BITS,
        tile_clocks: fwd.tile_clocks,
        cycles: fwd.cycles,
        forward_latency_ns: fwd.total_ns,
        backward_latency_ps: bwd_ps,
        interval_ns,
        op_count,
        throughput_gops: 0.0,
        power_w,
        area_mm2,
        energy_eff_gops_per_w: 0.0,
        comp_eff_gops_per_mm2: 0.0,
        comparison: Comparison {
            throughput_vs_pipelayer: 0.0,
            throughput_vs_gpu: 0.0,
            comp_eff_vs_pipelayer: 0.0,
            energy_eff_vs_pipelayer: None,
            baseline: baseline(phase),
        },
        methodology: methodology(phase),
    };
    // One op per ns is one GOPS/s.
    finalize(&mut report, op_count as f64 / interval_ns);
    Ok(report)
}

pub const REFERENCE_BITS: u32 = 16;

/// Drops at 32 bits relative to 16 bits that fix the linear resolution
/// overhead on latency and power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionCalibration {
    pub speedup_drop_at_32: f64,
    pub energy_eff_drop_at_32: f64,
}

impl ResolutionCalibration {
    pub fn for_phase(phase: Phase) -> Self {
        match phase {
            Phase::Training => Self {
                speedup_drop_at_32: 0.015,
                energy_eff_drop_at_32: 0.045,
            },
            Phase::Inference => Self {
                speedup_drop_at_32: 0.035,
                energy_eff_drop_at_32: 0.042,
            },
        }
    }

    /// Relative latency added per bit above the reference.
    pub fn latency_per_bit(&self) -> f64 {
        (1.0 / (1.0 - self.speedup_drop_at_32) - 1.0) / (32 - REFERENCE_BITS) as f64
    }

    /// Relative power added per bit above the reference.
    pub fn power_per_bit(&self) -> f64 {
        let latency = 1.0 + self.latency_per_bit() * (32 - REFERENCE_BITS) as f64;
        (1.0 / ((1.0 - self.energy_eff_drop_at_32) * latency) - 1.0) / (32 - REFERENCE_BITS) as f64
    }
}

/// Re-derive `report` at a different weight resolution.
pub fn resolution_delta(report: &PerfReport, bits: u32, cal: &ResolutionCalibration) -> Result<PerfReport> {
    if !(2..=32).contains(&bits) {
        return Err(Error::config(format!("resolution must be 2..=32 bits, got {bits}")));
    }
    let scale = |per_bit: f64, from: u32| {
        (1.0 + per_bit * (bits as f64 - REFERENCE_BITS as f64)) / (1.0 + per_bit * (from as f64 - REFERENCE_BITS as f64))
    };
    let from = report.resolution_bits;
    let latency = scale(cal.latency_per_bit(), from);
    let power = scale(cal.power_per_bit(), from);
    if !(latency > 0.0 && power > 0.0) {
        return Err(Error::config("resolution calibration makes latency or power non-positive"));
    }
    let mut out = report.clone();
    if bits == from {
        return Ok(out);
    }
    out.resolution_bits = bits;
    out.forward_latency_ns *= latency;
    out.interval_ns *= latency;
    out.power_w *= power;
    out.methodology.insert(
        "resolution".into(),
        format!(
            "latency x (1 + {:.6e} (bits - {REFERENCE_BITS})), power x (1 + {:.6e} (bits - {REFERENCE_BITS}))",
            cal.latency_per_bit(),
            cal.power_per_bit()
        ),
    );
    let raw = out.op_count as f64 / out.interval_ns;
    finalize(&mut out, raw);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::preset;
    use crate::device::DeviceParams;

    fn report(phase: Phase) -> PerfReport {
        let net = preset("VGG-A").unwrap();
        efficiency_report(&net, &ComponentBudget::for_device(&DeviceParams::default()), &TimingParams::default(), phase)
            .unwrap()
    }

    #[test]
    fn ratios_are_exact() {
        for phase in Phase::ALL {
            let r = report(phase);
            assert_eq!(r.energy_eff_gops_per_w * r.power_w, r.throughput_gops);
            assert_eq!(r.comp_eff_gops_per_mm2 * r.area_mm2, r.throughput_gops);
        }
    }

    #[test]
    fn same_bits_is_identity() {
        let r = report(Phase::Training);
        let cal = ResolutionCalibration::for_phase(Phase::Training);
        assert_eq!(resolution_delta(&r, 16, &cal).unwrap(), r);
    }

    #[test]
    fn calibration_hits_targets() {
        for phase in Phase::ALL {
            let r = report(phase);
            let cal = ResolutionCalibration::for_phase(phase);
            let hi = resolution_delta(&r, 32, &cal).unwrap();
            let speed = 1.0 - hi.throughput_gops / r.throughput_gops;
            let energy = 1.0 - hi.energy_eff_gops_per_w / r.energy_eff_gops_per_w;
            assert!((speed - cal.speedup_drop_at_32).abs() < 1e-9);
            assert!((energy - cal.energy_eff_drop_at_32).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_range_bits_rejected() {
        let r = report(Phase::Inference);
        let cal = ResolutionCalibration::for_phase(Phase::Inference);
        assert!(resolution_delta(&r, 1, &cal).is_err());
        assert!(resolution_delta(&r, 33, &cal).is_err());
    }
}
