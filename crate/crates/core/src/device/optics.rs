use serde::{Deserialize, Serialize};

use super::SoaParams;
use crate::error::{Error, Result};

const REFERENCE_DIAMETER_UM: f64 = 10.0;
const REFERENCE_FSR_NM: f64 = 20.0;
const DEFAULT_WAVELENGTH_NM: f64 = 1550.0;

/// Group index that puts the FSR of a 10 um ring at 20 nm.
pub fn calibrated_group_index(wavelength_nm: f64) -> f64 {
    wavelength_nm * wavelength_nm / (REFERENCE_FSR_NM * std::f64::consts::PI * REFERENCE_DIAMETER_UM * 1e3)
}

/// Microring modulator. Derived fields are filled by [`mrm_derive`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrmModel {
    pub diameter_um: f64,
    pub center_wavelength_nm: f64,
    pub group_index: f64,
    /// Resonance linewidth, held fixed across diameters.
    pub fwhm_nm: f64,
    pub reference_diameter_um: f64,
    /// Insertion-loss weight on `1/Q`.
    pub k_q: f64,
    /// Insertion-loss weight on `1/finesse`.
    pub k_f: f64,
    pub through_loss_db: f64,
    pub fsr_nm: f64,
    pub finesse: f64,
    pub q_factor: f64,
    pub insertion_loss_db: f64,
}

impl Default for MrmModel {
    fn default() -> Self {
        let fwhm = 0.155;
        let q_ref = DEFAULT_WAVELENGTH_NM / fwhm;
        let finesse_ref = REFERENCE_FSR_NM / fwhm;
        Self {
            diameter_um: REFERENCE_DIAMETER_UM,
            center_wavelength_nm: DEFAULT_WAVELENGTH_NM,
            group_index: calibrated_group_index(DEFAULT_WAVELENGTH_NM),
            fwhm_nm: fwhm,
            reference_diameter_um: REFERENCE_DIAMETER_UM,
            // Equal 0.25 dB terms at the reference diameter.
            k_q: 0.25 * q_ref,
            k_f: 0.25 * finesse_ref,
            through_loss_db: 0.02,
            fsr_nm: 0.0,
            finesse: 0.0,
            q_factor: 0.0,
            insertion_loss_db: 0.0,
        }
    }
}

pub fn mrm_derive(diameter_um: f64, model: &MrmModel) -> Result<MrmModel> {
    if !(diameter_um > 0.0) {
        return Err(Error::config(format!("MRM diameter must be positive, got {diameter_um}")));
    }
    let lambda = model.center_wavelength_nm;
    let fsr = lambda * lambda / (model.group_index * std::f64::consts::PI * diameter_um * 1e3);
    let finesse = fsr / model.fwhm_nm;
    let q = lambda / model.fwhm_nm * diameter_um / model.reference_diameter_um;
    Ok(MrmModel {
        diameter_um,
        fsr_nm: fsr,
        finesse,
        q_factor: q,
        insertion_loss_db: model.k_q / q + model.k_f / finesse,
        ..*model
    })
}

/// Worst-case optical path from the coupler to the SOA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub prop_loss_db_per_cm: f64,
    pub splitter_coupler_loss_db: f64,
    pub soa_sensitivity_dbm: f64,
    pub wall_plug_efficiency: f64,
    pub path_length_cm: f64,
    pub mrm_passes: u32,
    /// Include the modulator insertion loss in the path.
    pub insertion: bool,
}

impl Default for LossBudget {
    fn default() -> Self {
        Self {
            prop_loss_db_per_cm: 2.5,
            splitter_coupler_loss_db: 0.5,
            soa_sensitivity_dbm: -20.0,
            wall_plug_efficiency: 0.03,
            path_length_cm: 1.0,
            mrm_passes: 16,
            insertion: true,
        }
    }
}

impl LossBudget {
    pub fn lossless() -> Self {
        Self {
            prop_loss_db_per_cm: 0.0,
            splitter_coupler_loss_db: 0.0,
            path_length_cm: 0.0,
            mrm_passes: 0,
            insertion: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.prop_loss_db_per_cm, self.splitter_coupler_loss_db, self.path_length_cm]
            .iter()
            .any(|&v| !(v >= 0.0))
        {
            return Err(Error::config("losses and path length must be >= 0"));
        }
        if !(self.wall_plug_efficiency > 0.0 && self.wall_plug_efficiency <= 1.0) {
            return Err(Error::config("wall_plug_efficiency must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn total_loss_db(&self, mrm: &MrmModel) -> f64 {
        self.splitter_coupler_loss_db
            + self.mrm_passes as f64 * mrm.through_loss_db
            + self.prop_loss_db_per_cm * self.path_length_cm
            + if self.insertion { mrm.insertion_loss_db } else { 0.0 }
    }

    /// Amplitude factor `10^(-loss/20)`.
    pub fn loss_scale(&self, mrm: &MrmModel) -> f64 {
        10f64.powf(-self.total_loss_db(mrm) / 20.0)
    }

    /// Optical power above SOA sensitivity when the laser is sized for the
    /// design propagation loss plus the SOA margin.
    pub fn soa_headroom_db(&self, mrm: &MrmModel, soa: &SoaParams) -> f64 {
        let design = LossBudget {
            prop_loss_db_per_cm: soa.design_prop_loss_db_per_cm,
            ..*self
        };
        design.total_loss_db(mrm) + soa.margin_db - self.total_loss_db(mrm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserPower {
    pub total_loss_db: f64,
    pub optical_dbm: f64,
    pub optical_mw: f64,
    pub electrical_mw: f64,
}

pub fn laser_power_budget(budget: &LossBudget, mrm: &MrmModel) -> LaserPower {
    let total = budget.total_loss_db(mrm);
    let optical_dbm = budget.soa_sensitivity_dbm + total;
    let optical_mw = 10f64.powf(optical_dbm / 10.0);
    LaserPower {
        total_loss_db: total,
        optical_dbm,
        optical_mw,
        electrical_mw: optical_mw / budget.wall_plug_efficiency,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthPlan {
    pub count: u32,
    pub spacing_nm: f64,
    pub start_nm: f64,
}

impl Default for WavelengthPlan {
    fn default() -> Self {
        Self {
            count: 16,
            spacing_nm: 1.25,
            start_nm: 1550.0,
        }
    }
}

impl WavelengthPlan {
    pub fn validate(&self, mrm: &MrmModel) -> Result<()> {
        let span = self.count as f64 * self.spacing_nm;
        if self.count == 0 || span > mrm.fsr_nm * (1.0 + 1e-9) {
            return Err(Error::config(format!(
                "{} channels at {} nm need {span} nm but the ring FSR is {:.3} nm",
                self.count, self.spacing_nm, mrm.fsr_nm
            )));
        }
        Ok(())
    }

    pub fn wavelength_nm(&self, k: u32) -> f64 {
        self.start_nm + k as f64 * self.spacing_nm
    }

    /// Multiplex groups needed to carry `signals` channels.
    pub fn groups(&self, signals: usize) -> usize {
        signals.div_ceil(self.count as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mrm(d: f64) -> MrmModel {
        mrm_derive(d, &MrmModel::default()).unwrap()
    }

    #[test]
    fn reference_ring_has_twenty_nm_fsr() {
        assert!((mrm(10.0).fsr_nm - 20.0).abs() < 1e-12);
    }

    #[test]
    fn group_index_calibration() {
        let ng = calibrated_group_index(1550.0);
        assert!((ng - 1550.0f64.powi(2) / (20.0 * std::f64::consts::PI * 1e4)).abs() < 1e-12);
    }

    #[test]
    fn non_positive_diameter_rejected() {
        assert!(mrm_derive(0.0, &MrmModel::default()).is_err());
        assert!(mrm_derive(-1.0, &MrmModel::default()).is_err());
    }

    #[test]
    fn bare_path_is_sensitivity_plus_splitter() {
        let b = LossBudget {
            path_length_cm: 0.0,
            mrm_passes: 0,
            insertion: false,
            ..LossBudget::default()
        };
        let p = laser_power_budget(&b, &mrm(10.0));
        assert!((p.optical_dbm + 19.5).abs() < 1e-12);
        assert!((p.electrical_mw - p.optical_mw / 0.03).abs() < 1e-15);
    }

    #[test]
    fn default_plan_fits_reference_ring() {
        WavelengthPlan::default().validate(&mrm(10.0)).unwrap();
        assert!(WavelengthPlan::default().validate(&mrm(12.0)).is_err());
    }

    #[test]
    fn headroom_is_margin_at_design_loss() {
        let m = mrm(10.0);
        let soa = SoaParams::default();
        let b = LossBudget::default();
        assert!((b.soa_headroom_db(&m, &soa) - 3.0).abs() < 1e-12);
        let lossy = LossBudget { prop_loss_db_per_cm: 10.0, ..b };
        assert!((lossy.soa_headroom_db(&m, &soa) + 4.5).abs() < 1e-12);
    }
}
