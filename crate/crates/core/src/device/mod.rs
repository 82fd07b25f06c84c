//! Analog non-idealities: weight quantisation, converters, Gaussian noise,
//! the SOA activation, optical comparators and ring-modulator optics.

mod converter;
mod noise;
mod optics;
mod quant;
mod soa;

pub use converter::*;
pub use noise::*;
pub use optics::*;
pub use quant::*;
pub use soa::*;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signal-to-noise ratio in dB, or noiseless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Snr {
    Db(f64),
    Infinite,
}

impl Snr {
    /// Noise variance for a signal of the given mean power.
    pub fn noise_variance(self, signal_power: f64) -> f64 {
        match self {
            Snr::Db(db) => signal_power / 10f64.powf(db / 10.0),
            Snr::Infinite => 0.0,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Snr::Infinite)
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "off" => Some(Snr::Infinite),
            v => v.parse().ok().map(Snr::Db),
        }
    }
}

/// Number of programmable conductance levels, or unquantised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Levels {
    Finite(u32),
    Continuous,
}

/// Converter resolution in bits, or a pass-through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Bits(u32),
    Ideal,
}

/// The four noise contributors that can be toggled one at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    Quantization,
    Soa,
    Comparator,
    Interface,
}

impl NoiseSource {
    pub const ALL: [NoiseSource; 4] = [
        NoiseSource::Quantization,
        NoiseSource::Soa,
        NoiseSource::Comparator,
        NoiseSource::Interface,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseSource::Quantization => "quantization",
            NoiseSource::Soa => "soa",
            NoiseSource::Comparator => "comparator",
            NoiseSource::Interface => "interface",
        }
    }
}

/// How an array's weights map onto its conductance range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightRange {
    /// Every array uses `weight_clip` as full scale.
    Fixed,
    /// Each array's full scale is `headroom` times the peak magnitude it
    /// holds when programmed.
    PeakRelative { headroom: f64 },
}

impl Default for WeightRange {
    fn default() -> Self {
        WeightRange::PeakRelative { headroom: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub memristor_states: Levels,
    pub dac_bits: Resolution,
    pub adc_bits: Resolution,
    pub soa_snr_db: Snr,
    pub comparator_snr_db: Snr,
    pub interface_snr_db: Snr,
    /// Weight magnitude mapped to the largest conductance.
    pub weight_clip: f64,
    pub weight_range: WeightRange,
    pub soa: SoaParams,
    pub mrm: MrmModel,
    pub budget: LossBudget,
    pub wavelengths: WavelengthPlan,
    /// Amplitude fraction left after the backward-path splitters.
    pub split_factor: f64,
    pub seed: u64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            memristor_states: Levels::Finite(1000),
            dac_bits: Resolution::Bits(16),
            adc_bits: Resolution::Bits(16),
            soa_snr_db: Snr::Db(50.0),
            comparator_snr_db: Snr::Db(40.0),
            interface_snr_db: Snr::Db(25.0),
            weight_clip: 1.0,
            weight_range: WeightRange::default(),
            soa: SoaParams::default(),
            mrm: mrm_derive(10.0, &MrmModel::default()).expect("default diameter is positive"),
            budget: LossBudget::default(),
            wavelengths: WavelengthPlan::default(),
            split_factor: 1.0 / 32.0,
            seed: 0,
        }
    }
}

impl DeviceParams {
    /// Every non-ideality off: exact weights, pass-through converters,
    /// noiseless, lossless.
    pub fn ideal() -> Self {
        Self {
            memristor_states: Levels::Continuous,
            dac_bits: Resolution::Ideal,
            adc_bits: Resolution::Ideal,
            soa_snr_db: Snr::Infinite,
            comparator_snr_db: Snr::Infinite,
            interface_snr_db: Snr::Infinite,
            budget: LossBudget::lossless(),
            ..Self::default()
        }
    }

    /// Ideal device with exactly one noise source at its default strength.
    pub fn only(source: NoiseSource) -> Self {
        let d = Self::default();
        let mut p = Self::ideal();
        match source {
            NoiseSource::Quantization => p.memristor_states = d.memristor_states,
            NoiseSource::Soa => p.soa_snr_db = d.soa_snr_db,
            NoiseSource::Comparator => p.comparator_snr_db = d.comparator_snr_db,
            NoiseSource::Interface => p.interface_snr_db = d.interface_snr_db,
        }
        p
    }

    /// Full-scale weight of an array holding `weights` and `bias`.
    pub fn array_clip(&self, weights: &[f64], bias: &[f64]) -> f64 {
        match self.weight_range {
            WeightRange::Fixed => self.weight_clip,
            WeightRange::PeakRelative { headroom } => {
                let peak = weights.iter().chain(bias).fold(0.0f64, |m, v| m.max(v.abs()));
                if peak > 0.0 {
                    headroom * peak
                } else {
                    self.weight_clip
                }
            }
        }
    }

    pub fn set_resolution(&mut self, bits: u32) {
        self.dac_bits = Resolution::Bits(bits);
        self.adc_bits = Resolution::Bits(bits);
    }

    pub fn validate(&self) -> Result<()> {
        if let Levels::Finite(n) = self.memristor_states {
            if n < 2 {
                return Err(Error::config("memristor_states must be >= 2"));
            }
        }
        for (name, r) in [("dac_bits", self.dac_bits), ("adc_bits", self.adc_bits)] {
            if let Resolution::Bits(b) = r {
                if !(2..=32).contains(&b) {
                    return Err(Error::config(format!("{name} must be in [2, 32], got {b}")));
                }
            }
        }
        for (name, s) in [
            ("soa_snr_db", self.soa_snr_db),
            ("comparator_snr_db", self.comparator_snr_db),
            ("interface_snr_db", self.interface_snr_db),
        ] {
            if let Snr::Db(db) = s {
                if !(db > 0.0) {
                    return Err(Error::config(format!("{name} must be > 0 dB or infinite")));
                }
            }
        }
        if !(self.weight_clip > 0.0) {
            return Err(Error::config("weight_clip must be positive"));
        }
        if let WeightRange::PeakRelative { headroom } = self.weight_range {
            if !(headroom >= 1.0 && headroom.is_finite()) {
                return Err(Error::config("weight_range headroom must be >= 1"));
            }
        }
        if !(self.split_factor > 0.0) {
            return Err(Error::config("split_factor must be positive"));
        }
        self.budget.validate()?;
        self.wavelengths.validate(&self.mrm)
    }

    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::config(format!("invalid value `{value}` for `{key}`"));
        let num = || value.trim().parse::<f64>().map_err(|_| bad());
        let int = || value.trim().parse::<u32>().map_err(|_| bad());
        let res = || match value.trim() {
            "ideal" | "off" => Ok(Resolution::Ideal),
            _ => int().map(Resolution::Bits),
        };
        match key {
            "memristor_states" => {
                self.memristor_states = match value.trim() {
                    "continuous" | "off" | "inf" => Levels::Continuous,
                    _ => Levels::Finite(int()?),
                }
            }
            "bits" => {
                let r = res()?;
                self.dac_bits = r;
                self.adc_bits = r;
            }
            "dac_bits" => self.dac_bits = res()?,
            "adc_bits" => self.adc_bits = res()?,
            "soa_snr_db" => self.soa_snr_db = Snr::parse(value).ok_or_else(bad)?,
            "comparator_snr_db" => self.comparator_snr_db = Snr::parse(value).ok_or_else(bad)?,
            "interface_snr_db" => self.interface_snr_db = Snr::parse(value).ok_or_else(bad)?,
            "weight_clip" => self.weight_clip = num()?,
            "weight_range" => {
                self.weight_range = match value.trim() {
                    "fixed" => WeightRange::Fixed,
                    _ => WeightRange::PeakRelative { headroom: num()? },
                }
            }
            "split_factor" => self.split_factor = num()?,
            "seed" => self.seed = value.trim().parse().map_err(|_| bad())?,
            "prop_loss_db_per_cm" => self.budget.prop_loss_db_per_cm = num()?,
            "splitter_coupler_loss_db" => self.budget.splitter_coupler_loss_db = num()?,
            "soa_sensitivity_dbm" => self.budget.soa_sensitivity_dbm = num()?,
            "wall_plug_efficiency" => self.budget.wall_plug_efficiency = num()?,
            "path_length_cm" => self.budget.path_length_cm = num()?,
            "mrm_passes" => self.budget.mrm_passes = int()?,
            "soa_margin_db" => self.soa.margin_db = num()?,
            "soa_knee" => self.soa.knee = num()?,
            "design_prop_loss_db_per_cm" => self.soa.design_prop_loss_db_per_cm = num()?,
            "mrm_diameter_um" => self.mrm = mrm_derive(num()?, &self.mrm)?,
            "mrm_k_q" => {
                self.mrm.k_q = num()?;
                self.mrm = mrm_derive(self.mrm.diameter_um, &self.mrm)?;
            }
            "mrm_k_f" => {
                self.mrm.k_f = num()?;
                self.mrm = mrm_derive(self.mrm.diameter_um, &self.mrm)?;
            }
            "mrm_through_loss_db" => self.mrm.through_loss_db = num()?,
            "wavelength_count" => self.wavelengths.count = int()?,
            "wavelength_spacing_nm" => self.wavelengths.spacing_nm = num()?,
            other => return Err(Error::config(format!("unknown device key `{other}`"))),
        }
        Ok(())
    }

    /// Read the `[device]` section of a config file, if present.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        let mut in_device = false;
        for (i, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if body.starts_with('[') {
                in_device = body == "[device]";
                continue;
            }
            if !in_device {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, body, "expected `key = value`"))?;
            self.set(k.trim(), v).map_err(|e| Error::parse(i + 1, k.trim(), e.to_string()))?;
        }
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        DeviceParams::default().validate().unwrap();
        DeviceParams::ideal().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_bits() {
        let mut p = DeviceParams::default();
        p.dac_bits = Resolution::Bits(40);
        assert!(p.validate().is_err());
        p.dac_bits = Resolution::Bits(1);
        assert!(p.validate().is_err());
    }

    #[test]
    fn device_section_overrides() {
        let mut p = DeviceParams::default();
        p.apply_config("fe = 3x3, 1, 1\n[device]\nsoa_snr_db = inf\nbits = 8\nprop_loss_db_per_cm = 5\n")
            .unwrap();
        assert_eq!(p.soa_snr_db, Snr::Infinite);
        assert_eq!(p.adc_bits, Resolution::Bits(8));
        assert_eq!(p.budget.prop_loss_db_per_cm, 5.0);
    }

    #[test]
    fn unknown_device_key_reports_line() {
        let err = DeviceParams::default().apply_config("[device]\n\nfoo = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }
}
