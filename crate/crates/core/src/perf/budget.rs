use serde::{Deserialize, Serialize};

use crate::device::{laser_power_budget, DeviceParams};
use crate::error::{Error, Result};

/// Converter and TIA line rate.
pub const LINE_RATE_BPS: f64 = 1.2e9;
const LASERS: usize = 6;
const LASER_WAVELENGTHS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerSpec {
    /// Total draw of all units of the row.
    TotalMilliwatts { mw: f64 },
    /// Energy per bit for each unit, at a line rate.
    PerBit { pj_per_bit: f64, bit_rate_hz: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub name: String,
    pub count: usize,
    pub power: PowerSpec,
    pub area_mm2_total: f64,
    pub latency_ps: Option<f64>,
}

impl ComponentRow {
    pub fn power_mw(&self) -> f64 {
        match self.power {
            PowerSpec::TotalMilliwatts { mw } => mw,
            PowerSpec::PerBit { pj_per_bit, bit_rate_hz } => pj_per_bit * 1e-12 * bit_rate_hz * self.count as f64 * 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentBudget {
    pub rows: Vec<ComponentRow>,
}

fn row(name: &str, count: usize, mw: f64, area: f64, latency_ps: Option<f64>) -> ComponentRow {
    ComponentRow {
        name: name.into(),
        count,
        power: PowerSpec::TotalMilliwatts { mw },
        area_mm2_total: area,
        latency_ps,
    }
}

impl ComponentBudget {
    /// Published component table. Powers and areas are totals over `count`.
    pub fn table() -> Self {
        Self {
            rows: vec![
                row("sram_register", 16, 10.0, 0.2, None),
                row("dac", 208, 4.374, 0.000208, None),
                row("adc", 245, 490.0, 0.294, None),
                row("wra", 48, 24.5, 0.000514, None),
                row("memristor_bank", 49, 0.45, 0.000003, None),
                row("modulator", 62720, 1080.8, 39.38, Some(20.0)),
                row("demodulator", 62720, 1080.8, 39.38, Some(20.0)),
                ComponentRow {
                    name: "tia".into(),
                    count: 62720,
                    power: PowerSpec::PerBit {
                        pj_per_bit: 0.18,
                        bit_rate_hz: LINE_RATE_BPS,
                    },
                    area_mm2_total: 0.28,
                    latency_ps: Some(10.0),
                },
                row("electrical_comparator", 784, 0.02, 0.00049, Some(180.0)),
                row("wdm_coupler", 16, 0.0, 0.00028, None),
                row("wdm_decoupler", 16, 0.0, 0.00028, None),
                row("optical_comparator", 980, 0.0, 0.0045, Some(60.0)),
                row("mode_locked_laser", LASERS, 32000.0, 0.384, None),
                row("waveguide", 520, 0.0, 80.0, None),
            ],
        }
    }

    /// The table plus the wall-plug power that closes the optical link
    /// budget for every laser carrier under `dev`.
    pub fn for_device(dev: &DeviceParams) -> Self {
        let mut b = Self::table();
        let per_carrier = laser_power_budget(&dev.budget, &dev.mrm).electrical_mw;
        let carriers = LASERS * LASER_WAVELENGTHS;
        b.rows.push(row("laser_link_budget", carriers, per_carrier * carriers as f64, 0.0, None));
        b
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            let ok = r.count >= 1 && r.power_mw() >= 0.0 && r.area_mm2_total >= 0.0;
            if !ok {
                return Err(Error::config(format!("component `{}` needs count >= 1 and non-negative power and area", r.name)));
            }
        }
        Ok(())
    }

    pub fn power_mw(&self) -> f64 {
        self.rows.iter().map(ComponentRow::power_mw).sum()
    }

    pub fn area_mm2(&self) -> f64 {
        self.rows.iter().map(|r| r.area_mm2_total).sum()
    }

    /// Every row's power multiplied by `factor`.
    pub fn scale_power(&self, factor: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let power = match r.power {
                    PowerSpec::TotalMilliwatts { mw } => PowerSpec::TotalMilliwatts { mw: mw * factor },
                    PowerSpec::PerBit { pj_per_bit, bit_rate_hz } => PowerSpec::PerBit {
                        pj_per_bit: pj_per_bit * factor,
                        bit_rate_hz,
                    },
                };
                ComponentRow { power, ..r.clone() }
            })
            .collect();
        Self { rows }
    }
}
