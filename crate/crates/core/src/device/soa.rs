use serde::{Deserialize, Serialize};

/// SOA operating parameters. The laser is provisioned for the design
/// propagation loss plus `margin_db`; higher actual loss eats into that
/// headroom and pushes the amplifier into compression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoaParams {
    pub margin_db: f64,
    /// Saturation amplitude as a fraction of the signal peak at 0 dB deficit.
    pub knee: f64,
    pub design_prop_loss_db_per_cm: f64,
}

impl Default for SoaParams {
    fn default() -> Self {
        Self {
            margin_db: 3.0,
            knee: 1.0,
            design_prop_loss_db_per_cm: 2.5,
        }
    }
}

/// Linear below the knee, `x_sat * tanh(x / x_sat)` once compressed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SoaRegion {
    Linear,
    Compressed { saturation: f64 },
}

/// Region for a signal whose peak amplitude is `peak`, given how many dB
/// of optical power sit above the SOA sensitivity.
pub fn soa_region(headroom_db: f64, params: &SoaParams, peak: f64) -> SoaRegion {
    if headroom_db >= params.margin_db || peak <= 0.0 {
        return SoaRegion::Linear;
    }
    let deficit = params.margin_db - headroom_db;
    SoaRegion::Compressed {
        saturation: params.knee * peak * 10f64.powf(-deficit / 20.0),
    }
}

/// Unit-gain SOA gated by the sign of the pre-loss conv output.
pub fn soa_transfer(amplitude: f64, gate: f64, region: SoaRegion) -> f64 {
    if gate <= 0.0 {
        return 0.0;
    }
    match region {
        SoaRegion::Linear => amplitude,
        SoaRegion::Compressed { saturation } => saturation * (amplitude / saturation).tanh(),
    }
}
