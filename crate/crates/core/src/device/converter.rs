use super::Resolution;

/// Mid-rise uniform quantiser: `2^bits` levels from `-full_scale` to
/// `+full_scale` inclusive. Returns the level and whether `x` clipped.
pub fn converter_quantize(x: f64, bits: u32, full_scale: f64) -> (f64, bool) {
    if full_scale <= 0.0 {
        return (0.0, x != 0.0);
    }
    let top = ((1u64 << bits) - 1) as f64;
    let step = 2.0 * full_scale / top;
    let clipped = x.abs() > full_scale;
    let k = ((x.clamp(-full_scale, full_scale) + full_scale) / step)
        .round_ties_even()
        .clamp(0.0, top);
    (-full_scale + k * step, clipped)
}

pub fn dac_quantize(x: f64, bits: u32, full_scale: f64) -> f64 {
    converter_quantize(x, bits, full_scale).0
}

pub fn adc_quantize(x: f64, bits: u32, full_scale: f64) -> f64 {
    converter_quantize(x, bits, full_scale).0
}

/// Convert a whole signal with the full scale auto-ranged to its peak
/// magnitude, so nothing clips.
pub fn convert_signal(values: &mut [f64], resolution: Resolution) {
    let Resolution::Bits(bits) = resolution else { return };
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return;
    }
    for v in values {
        *v = converter_quantize(*v, bits, peak).0;
    }
}
