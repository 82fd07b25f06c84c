use serde::{Deserialize, Serialize};

use super::Levels;

/// Which accumulation terminal a memristor's current is switched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    /// Positive path.
    P,
    /// Negative path.
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizedEntry {
    pub sign: Sign,
    /// `None` for unquantised (continuous) storage.
    pub level: Option<u32>,
    pub conductance: f64,
    pub saturated: bool,
}

impl QuantizedEntry {
    pub fn value(&self) -> f64 {
        match self.sign {
            Sign::P => self.conductance,
            Sign::Q => -self.conductance,
        }
    }
}

/// Map a signed weight onto a conductance level and a sign switch.
///
/// Magnitudes above `w_max` clip to the top level and set `saturated`.
/// Continuous storage keeps the magnitude exactly and never clips.
pub fn quantize_weight(w: f64, states: Levels, w_max: f64) -> QuantizedEntry {
    let sign = if w >= 0.0 { Sign::P } else { Sign::Q };
    match states {
        Levels::Continuous => QuantizedEntry {
            sign,
            level: None,
            conductance: w.abs(),
            saturated: false,
        },
        Levels::Finite(n) => {
            let top = (n - 1) as f64;
            let saturated = w.abs() > w_max;
            let level = (w.abs().min(w_max) * top / w_max).round_ties_even() as u32;
            QuantizedEntry {
                sign,
                level: Some(level),
                conductance: level as f64 * w_max / top,
                saturated,
            }
        }
    }
}

pub fn dequantize(w: f64, states: Levels, w_max: f64) -> f64 {
    quantize_weight(w, states, w_max).value()
}

/// A layer's weights as conductances with sign switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedWeights {
    pub states: Levels,
    pub w_max: f64,
    pub conductance: Vec<f64>,
    pub signs: Vec<Sign>,
    /// Level index per entry; empty for continuous storage.
    pub levels: Vec<u32>,
    pub saturations: u64,
}

impl QuantizedWeights {
    pub fn program(weights: &[f64], states: Levels, w_max: f64) -> Self {
        let mut q = Self {
            states,
            w_max,
            conductance: Vec::with_capacity(weights.len()),
            signs: Vec::with_capacity(weights.len()),
            levels: Vec::new(),
            saturations: 0,
        };
        for &w in weights {
            q.push(quantize_weight(w, states, w_max));
        }
        q
    }

    fn push(&mut self, e: QuantizedEntry) {
        self.conductance.push(e.conductance);
        self.signs.push(e.sign);
        if let Some(l) = e.level {
            self.levels.push(l);
        }
        self.saturations += e.saturated as u64;
    }

    /// Re-program entry `i` with a new signed weight.
    pub fn write(&mut self, i: usize, w: f64) {
        let e = quantize_weight(w, self.states, self.w_max);
        self.conductance[i] = e.conductance;
        self.signs[i] = e.sign;
        if let Some(l) = e.level {
            self.levels[i] = l;
        }
        self.saturations += e.saturated as u64;
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        match self.signs[i] {
            Sign::P => self.conductance[i],
            Sign::Q => -self.conductance[i],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.conductance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conductance.is_empty()
    }
}

/// Quantise a whole signal onto `states` levels spanning its own peak
/// magnitude, as the peripheral store does when writing values into
/// memristors.
pub fn store_quantize(values: &mut [f64], states: Levels) {
    let Levels::Finite(_) = states else { return };
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return;
    }
    for v in values {
        *v = dequantize(*v, states, peak);
    }
}
