use serde::{Deserialize, Serialize};

use crate::device::{
    awgn, convert_signal, optical_compare, soa_region, soa_transfer, store_quantize, DeviceParams,
    QuantizedWeights, Sign, Snr,
};
use crate::error::{Error, Result};
use crate::oracle::{pool_window, pooled_hw, ConvLayer, DenseLayer, Model, Pooled};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Signals one DWDM waveguide group carries per data movement.
pub const SIGNALS_PER_MOVEMENT: usize = 196 * 16;
/// Pooling units available per movement.
pub const POOL_UNITS_PER_MOVEMENT: usize = 196;
/// SOAs in one ReLU layer.
pub const SOAS_PER_LAYER: usize = 784;

const GROUND: u32 = u32::MAX;

/// A conv layer held in memristor banks: one bank per output position,
/// wired to its input window at programming time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogConv {
    /// Signed view of the programmed conductances.
    pub layer: ConvLayer,
    pub weights: QuantizedWeights,
    pub bias: QuantizedWeights,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    /// `taps[t * banks + bank]` is the input pixel for kernel tap `t`, or
    /// `GROUND` for zero padding.
    taps: Vec<u32>,
}

impl AnalogConv {
    pub fn program(layer: &ConvLayer, in_hw: (usize, usize), dev: &DeviceParams) -> Result<Self> {
        Self::program_with_clip(layer, in_hw, dev, dev.array_clip(&layer.weights, &layer.bias))
    }

    /// Program with an explicit full-scale weight.
    pub fn program_with_clip(layer: &ConvLayer, in_hw: (usize, usize), dev: &DeviceParams, clip: f64) -> Result<Self> {
        let (h, w) = in_hw;
        let out_hw = layer.output_hw(h, w)?;
        let banks = out_hw.0 * out_hw.1;
        let (f1, f2) = layer.filter;
        let mut taps = vec![GROUND; f1 * f2 * banks];
        for i in 0..f1 {
            for j in 0..f2 {
                let t = i * f2 + j;
                for y in 0..out_hw.0 {
                    for x in 0..out_hw.1 {
                        if let (Some(r), Some(c)) = (layer.source_row(y, i, h), layer.source_col(x, j, w)) {
                            taps[t * banks + y * out_hw.1 + x] = (r * w + c) as u32;
                        }
                    }
                }
            }
        }
        let mut conv = Self {
            layer: layer.clone(),
            weights: QuantizedWeights::program(&layer.weights, dev.memristor_states, clip),
            bias: QuantizedWeights::program(&layer.bias, dev.memristor_states, clip),
            in_hw,
            out_hw,
            taps,
        };
        conv.refresh_view();
        Ok(conv)
    }

    pub fn bank_count(&self) -> usize {
        self.out_hw.0 * self.out_hw.1
    }

    /// Input pixels wired to `bank`, `None` where the bank input is grounded.
    pub fn bank_inputs(&self, bank: usize) -> Vec<Option<usize>> {
        let banks = self.bank_count();
        (0..self.layer.filter.0 * self.layer.filter.1)
            .map(|t| {
                let v = self.taps[t * banks + bank];
                (v != GROUND).then_some(v as usize)
            })
            .collect()
    }

    pub(crate) fn refresh_view(&mut self) {
        self.layer.weights = self.weights.values();
        self.layer.bias = self.bias.values();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogDense {
    pub layer: DenseLayer,
    pub weights: QuantizedWeights,
    pub bias: QuantizedWeights,
}

impl AnalogDense {
    pub fn program(layer: &DenseLayer, dev: &DeviceParams) -> Self {
        Self::program_with_clip(layer, dev, dev.array_clip(&layer.weights, &layer.bias))
    }

    pub fn program_with_clip(layer: &DenseLayer, dev: &DeviceParams, clip: f64) -> Self {
        let mut d = Self {
            layer: layer.clone(),
            weights: QuantizedWeights::program(&layer.weights, dev.memristor_states, clip),
            bias: QuantizedWeights::program(&layer.bias, dev.memristor_states, clip),
        };
        d.refresh_view();
        d
    }

    pub(crate) fn refresh_view(&mut self) {
        self.layer.weights = self.weights.values();
        self.layer.bias = self.bias.values();
    }
}

/// A [`Model`] programmed into memristor arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogModel {
    pub input: [usize; 3],
    pub stages: Vec<Vec<AnalogConv>>,
    pub dense: Vec<AnalogDense>,
}

impl AnalogModel {
    pub fn program(model: &Model, dev: &DeviceParams) -> Result<Self> {
        Self::program_arrays(model, dev, None)
    }

    /// Program with the full-scale weight of every array given, in layer
    /// order, as returned by [`AnalogModel::clips`].
    pub fn program_with_clips(model: &Model, dev: &DeviceParams, clips: &[f64]) -> Result<Self> {
        let arrays = model.stages.iter().map(Vec::len).sum::<usize>() + model.dense.len();
        if clips.len() != arrays {
            return Err(Error::shape("array full-scale list", arrays, clips.len()));
        }
        Self::program_arrays(model, dev, Some(clips))
    }

    fn program_arrays(model: &Model, dev: &DeviceParams, clips: Option<&[f64]>) -> Result<Self> {
        let mut next = 0;
        let mut clip_for = |w: &[f64], b: &[f64]| {
            let c = clips.map_or_else(|| dev.array_clip(w, b), |c| c[next]);
            next += 1;
            c
        };
        let mut hw = (model.input[1], model.input[2]);
        let mut stages = Vec::with_capacity(model.stages.len());
        for stage in &model.stages {
            let mut convs = Vec::with_capacity(stage.len());
            for layer in stage {
                let clip = clip_for(&layer.weights, &layer.bias);
                let conv = AnalogConv::program_with_clip(layer, hw, dev, clip)?;
                hw = conv.out_hw;
                convs.push(conv);
            }
            hw = pooled_hw(hw.0, hw.1);
            stages.push(convs);
        }
        Ok(Self {
            input: model.input,
            stages,
            dense: model
                .dense
                .iter()
                .map(|d| AnalogDense::program_with_clip(d, dev, clip_for(&d.weights, &d.bias)))
                .collect(),
        })
    }

    /// Full-scale weight of every array, convs first, in layer order.
    pub fn clips(&self) -> Vec<f64> {
        let convs = self.stages.iter().flatten().map(|c| c.weights.w_max);
        convs.chain(self.dense.iter().map(|d| d.weights.w_max)).collect()
    }

    /// Signed weights currently held in the arrays.
    pub fn to_model(&self) -> Model {
        Model {
            input: self.input,
            stages: self
                .stages
                .iter()
                .map(|s| s.iter().map(|c| c.layer.clone()).collect())
                .collect(),
            dense: self.dense.iter().map(|d| d.layer.clone()).collect(),
        }
    }

    pub fn saturations(&self) -> u64 {
        let convs = self.stages.iter().flatten().map(|c| c.weights.saturations + c.bias.saturations);
        let dense = self.dense.iter().map(|d| d.weights.saturations + d.bias.saturations);
        convs.chain(dense).sum()
    }
}

/// Signed accumulation of one conv layer: `I_p - I_q` per bank with unit
/// transimpedance. The bias is a memristor driven at unit voltage.
pub fn memristive_convolve(input: &Tensor, conv: &AnalogConv) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    if c != conv.layer.in_channels {
        return Err(Error::shape("bank input channels", conv.layer.in_channels, c));
    }
    if (h, w) != conv.in_hw {
        return Err(Error::shape("bank input pixels", conv.in_hw.0 * conv.in_hw.1, h * w));
    }
    let banks = conv.bank_count();
    let taps_per_bank = conv.layer.filter.0 * conv.layer.filter.1;
    let x = input.data();
    let mut out = Vec::with_capacity(conv.layer.out_channels * banks);
    let mut ip = vec![0.0; banks];
    let mut iq = vec![0.0; banks];
    for n in 0..conv.layer.out_channels {
        ip.fill(0.0);
        iq.fill(0.0);
        let gb = conv.bias.conductance[n];
        match conv.bias.signs[n] {
            Sign::P => ip.fill(gb),
            Sign::Q => iq.fill(gb),
        }
        for m in 0..c {
            let src = &x[m * h * w..(m + 1) * h * w];
            for t in 0..taps_per_bank {
                let idx = (n * c + m) * taps_per_bank + t;
                let g = conv.weights.conductance[idx];
                if g == 0.0 {
                    continue;
                }
                let acc = match conv.weights.signs[idx] {
                    Sign::P => &mut ip,
                    Sign::Q => &mut iq,
                };
                let wiring = &conv.taps[t * banks..(t + 1) * banks];
                for (a, &v) in acc.iter_mut().zip(wiring) {
                    if v != GROUND {
                        *a += src[v as usize] * g;
                    }
                }
            }
        }
        out.extend(ip.iter().zip(&iq).map(|(p, q)| p - q));
    }
    Tensor::new(vec![conv.layer.out_channels, conv.out_hw.0, conv.out_hw.1], out)
}

/// Signed memristive matrix-vector product.
pub fn memristive_mvm(input: &Tensor, dense: &AnalogDense) -> Result<Tensor> {
    let n_in = dense.layer.inputs;
    if input.len() != n_in {
        return Err(Error::shape("dense input length", n_in, input.len()));
    }
    let x = input.data();
    let out = (0..dense.layer.outputs)
        .map(|o| {
            let (mut ip, mut iq) = match dense.bias.signs[o] {
                Sign::P => (dense.bias.conductance[o], 0.0),
                Sign::Q => (0.0, dense.bias.conductance[o]),
            };
            let row = o * n_in;
            for j in 0..n_in {
                let g = dense.weights.conductance[row + j];
                match dense.weights.signs[row + j] {
                    Sign::P => ip += x[j] * g,
                    Sign::Q => iq += x[j] * g,
                }
            }
            ip - iq
        })
        .collect();
    Ok(Tensor::vector(out))
}

/// Conv outputs riding on DWDM carriers for one data movement.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedSignals {
    pub amplitudes: Vec<f64>,
    pub loss_scale: f64,
    pub wavelengths_per_waveguide: usize,
}

impl ModulatedSignals {
    pub fn wavelength_index(&self, i: usize) -> usize {
        i % self.wavelengths_per_waveguide
    }
}

/// Modulate one movement of conv outputs: attenuate by the path loss,
/// then add interface noise.
pub fn modulate(conv_out: &[f64], dev: &DeviceParams, rng: &mut Stream) -> Result<ModulatedSignals> {
    if conv_out.len() > SIGNALS_PER_MOVEMENT {
        return Err(Error::Contract(format!(
            "{} signals exceed one waveguide group ({SIGNALS_PER_MOVEMENT})",
            conv_out.len()
        )));
    }
    let loss_scale = dev.budget.loss_scale(&dev.mrm);
    let mut amplitudes: Vec<f64> = conv_out.iter().map(|c| c * loss_scale).collect();
    awgn(&mut amplitudes, dev.interface_snr_db, rng);
    Ok(ModulatedSignals {
        amplitudes,
        loss_scale,
        wavelengths_per_waveguide: dev.wavelengths.count as usize,
    })
}

/// SOA ReLU over modulated signals gated by the original conv outputs.
pub fn relu_layer(signals: &ModulatedSignals, gates: &[f64], dev: &DeviceParams, rng: &mut Stream) -> Vec<f64> {
    let headroom = dev.budget.soa_headroom_db(&dev.mrm, &dev.soa);
    let peak = signals.amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let region = soa_region(headroom, &dev.soa, peak);
    let mut out: Vec<f64> = signals
        .amplitudes
        .iter()
        .zip(gates)
        .map(|(&a, &g)| soa_transfer(a, g, region))
        .collect();
    awgn(&mut out, dev.soa_snr_db, rng);
    // A closed gate passes no carrier, so no amplified noise either.
    for (o, &g) in out.iter_mut().zip(gates) {
        if g <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

/// Reduce up to four inputs with cascaded two-input comparators:
/// `(x1 vs x2)` and `(x3 vs x4)`, then the two winners. Returns the value
/// and the winning position within `xs`.
pub fn comparator_tree(xs: &[f64], snr: Snr, rng: &mut Stream) -> (f64, usize) {
    let pair = |a: usize, b: usize, rng: &mut Stream, xs: &[f64]| -> (f64, usize) {
        if b >= xs.len() {
            return (xs[a], a);
        }
        let (v, b_won) = optical_compare(xs[a], xs[b], snr, rng);
        (v, if b_won { b } else { a })
    };
    let (v1, i1) = pair(0, 1, rng, xs);
    if xs.len() <= 2 {
        return (v1, i1);
    }
    let (v2, i2) = pair(2, 3, rng, xs);
    let (v, second) = optical_compare(v1, v2, snr, rng);
    if second {
        (v, i2)
    } else {
        (v, i1)
    }
}

/// Pool a flat ReLU stream whose consecutive groups of four form windows.
pub fn pool_flat(relu_out: &[f64], snr: Snr, rng: &mut Stream) -> Vec<f64> {
    relu_out.chunks(4).map(|w| comparator_tree(w, snr, rng).0).collect()
}

/// 2x2 / stride-2 pooling of a `(c, h, w)` map through comparator trees.
pub fn pool_layer(relu_out: &Tensor, dev: &DeviceParams, rng: &mut Stream) -> Result<Pooled> {
    let (c, h, w) = relu_out.chw()?;
    let (oh, ow) = pooled_hw(h, w);
    let x = relu_out.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    let mut window = Vec::with_capacity(4);
    let mut vals = Vec::with_capacity(4);
    for ch in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                window.clear();
                window.extend(pool_window(ch, y, xo, h, w));
                vals.clear();
                vals.extend(window.iter().map(|&i| x[i]));
                let (v, k) = comparator_tree(&vals, dev.comparator_snr_db, rng);
                out.push(v);
                argmax.push(window[k]);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![c, oh, ow], out)?,
        argmax,
    })
}

/// Identifies the random streams of one sample pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseKey {
    pub seed: u64,
    /// Epoch, or a marker for evaluation passes.
    pub phase: u64,
    pub sample: u64,
}

impl NoiseKey {
    pub fn stream(&self, tag: &str, layer: usize, site: u64) -> Stream {
        let index = self.phase.rotate_left(40) ^ self.sample;
        rng::stream(self.seed, tag, index, ((layer as u64) << 8) | site)
    }
}

const SITE_INTERFACE: u64 = 1;
const SITE_SOA: u64 = 2;
const SITE_COMPARATOR: u64 = 3;

/// What one stage wrote to its peripheral memristors.
#[derive(Debug, Clone, PartialEq)]
pub struct StageStore {
    /// Values each conv read (`O^{l-1}`).
    pub conv_inputs: Vec<Tensor>,
    /// Stored output of the last conv.
    pub conv_output: Tensor,
    /// 1 where the SOA gate was open.
    pub gate: Tensor,
    pub argmax: Vec<usize>,
    /// Stored pooled outputs.
    pub pooled: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseStore {
    pub input: Tensor,
    pub gate: Tensor,
}

/// Per-sample peripheral store: everything the backward pass reads.
#[derive(Debug, Clone, PartialEq)]
pub struct PeripheralStore {
    pub stages: Vec<StageStore>,
    pub dense: Vec<DenseStore>,
    pub scores: Tensor,
}

/// One feature-extraction stage: DAC, back-to-back memristive convs,
/// modulation, SOA ReLU, comparator pooling, O/E and storage.
pub fn fe_stage(
    input: &Tensor,
    convs: &[AnalogConv],
    dev: &DeviceParams,
    key: &NoiseKey,
    stage: usize,
) -> Result<StageStore> {
    let mut x = input.clone();
    convert_signal(x.data_mut(), dev.dac_bits);
    let mut conv_inputs = Vec::with_capacity(convs.len());
    for conv in convs {
        let mut c = memristive_convolve(&x, conv)?;
        store_quantize(c.data_mut(), dev.memristor_states);
        conv_inputs.push(std::mem::replace(&mut x, c));
    }
    let conv_output = x;
    let gates = conv_output.data();
    let mut iface = key.stream(rng::tag::FORWARD, stage, SITE_INTERFACE);
    let mut soa = key.stream(rng::tag::FORWARD, stage, SITE_SOA);
    let mut relu = Vec::with_capacity(gates.len());
    let mut loss_scale = 1.0;
    for (movement, g) in gates.chunks(SIGNALS_PER_MOVEMENT).enumerate() {
        let signals = modulate(g, dev, &mut iface)?;
        loss_scale = signals.loss_scale;
        relu.extend(relu_layer(&signals, g, dev, &mut soa));
        log::trace!("stage {stage} movement {movement}: {} signals", g.len());
    }
    let relu = Tensor::new(conv_output.shape().to_vec(), relu)?;
    let gate = conv_output.map(|c| if c > 0.0 { 1.0 } else { 0.0 });
    let pool = pool_layer(&relu, dev, &mut key.stream(rng::tag::FORWARD, stage, SITE_COMPARATOR))?;
    // Detector rings recover the value; the store keeps it in memristors.
    let mut pooled = pool.output.map(|v| v / loss_scale);
    store_quantize(pooled.data_mut(), dev.memristor_states);
    Ok(StageStore {
        conv_inputs,
        conv_output,
        gate,
        argmax: pool.argmax,
        pooled,
    })
}

/// Memristive classifier: DAC, signed MVM, electrical ReLU, ADC, storage.
pub fn fc_layers(features: &Tensor, dense: &[AnalogDense], dev: &DeviceParams) -> Result<(Tensor, Vec<DenseStore>)> {
    let mut x = features.clone().flatten();
    convert_signal(x.data_mut(), dev.dac_bits);
    let mut stores = Vec::with_capacity(dense.len());
    for layer in dense {
        let z = memristive_mvm(&x, layer)?;
        let gate = z.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let mut a = z.map(|v| v.max(0.0));
        convert_signal(a.data_mut(), dev.adc_bits);
        store_quantize(a.data_mut(), dev.memristor_states);
        stores.push(DenseStore { input: x, gate });
        x = a;
    }
    Ok((x, stores))
}

pub fn analog_forward(model: &AnalogModel, sample: &Tensor, dev: &DeviceParams, key: &NoiseKey) -> Result<PeripheralStore> {
    let (c, h, w) = sample.chw()?;
    if [c, h, w] != model.input {
        return Err(Error::shape("sample length", model.input.iter().product(), sample.len()));
    }
    let mut x = sample.clone();
    let mut stages = Vec::with_capacity(model.stages.len());
    for (s, convs) in model.stages.iter().enumerate() {
        let store = fe_stage(&x, convs, dev, key, s)?;
        x = store.pooled.clone();
        stages.push(store);
    }
    let (scores, dense) = fc_layers(&x, &model.dense, dev)?;
    if !scores.all_finite() {
        return Err(Error::Contract("non-finite score in analog forward pass".into()));
    }
    Ok(PeripheralStore { stages, dense, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{Levels, LossBudget};

    fn ideal() -> DeviceParams {
        DeviceParams::ideal()
    }

    fn key() -> NoiseKey {
        NoiseKey { seed: 1, phase: 0, sample: 0 }
    }

    #[test]
    fn two_entry_signed_accumulation() {
        let mut layer = ConvLayer::zeros(2, 1, (1, 1), (1, 1), 0).unwrap();
        layer.weights = vec![1.0, -1.0];
        let conv = AnalogConv::program(&layer, (1, 1), &ideal()).unwrap();
        let x = Tensor::new(vec![2, 1, 1], vec![2.0, 3.0]).unwrap();
        assert_eq!(memristive_convolve(&x, &conv).unwrap().data(), &[-1.0]);
    }

    #[test]
    fn padding_inputs_are_grounded() {
        let layer = ConvLayer::same(1, 1, 3).unwrap();
        let conv = AnalogConv::program(&layer, (4, 4), &ideal()).unwrap();
        let corner = conv.bank_inputs(0);
        assert_eq!(corner.iter().filter(|t| t.is_none()).count(), 5);
        assert_eq!(corner[4], Some(0));
    }

    #[test]
    fn wiring_mismatch_is_rejected() {
        let layer = ConvLayer::same(1, 1, 3).unwrap();
        let conv = AnalogConv::program(&layer, (4, 4), &ideal()).unwrap();
        assert!(memristive_convolve(&Tensor::zeros(&[1, 5, 5]), &conv).is_err());
    }

    #[test]
    fn lossless_noiseless_modulation_is_identity() {
        let s = modulate(&[0.5, -1.0], &ideal(), &mut key().stream("t", 0, 0)).unwrap();
        assert_eq!(s.amplitudes, [0.5, -1.0]);
        assert_eq!(s.loss_scale, 1.0);
    }

    #[test]
    fn path_loss_scales_amplitude() {
        let mut dev = ideal();
        dev.budget = LossBudget {
            prop_loss_db_per_cm: 2.5,
            path_length_cm: 1.0,
            ..LossBudget::lossless()
        };
        let s = modulate(&[1.0], &dev, &mut key().stream("t", 0, 0)).unwrap();
        assert!((s.amplitudes[0] - 10f64.powf(-2.5 / 20.0)).abs() < 1e-15);
        assert!((s.amplitudes[0] - 0.7499).abs() < 1e-4);
        assert!((20.0 * s.loss_scale.log10() + 2.5).abs() < 1e-12);
    }

    #[test]
    fn oversized_movement_is_a_contract_violation() {
        let big = vec![0.0; SIGNALS_PER_MOVEMENT + 1];
        assert!(matches!(modulate(&big, &ideal(), &mut key().stream("t", 0, 0)), Err(Error::Contract(_))));
    }

    #[test]
    fn relu_gate_examples() {
        let dev = ideal();
        let s = modulate(&[-0.5, 0.5], &dev, &mut key().stream("t", 0, 0)).unwrap();
        assert_eq!(relu_layer(&s, &[-0.5, 0.5], &dev, &mut key().stream("t", 0, 1)), [0.0, 0.5]);
    }

    #[test]
    fn pool_flat_groups_by_four() {
        let mut r = key().stream("t", 0, 0);
        assert_eq!(pool_flat(&[1.0, 4.0, 2.0, 3.0, 5.0, 0.0, 0.0, 0.0], Snr::Infinite, &mut r), [4.0, 5.0]);
        assert_eq!(pool_flat(&[7.0; 4], Snr::Infinite, &mut r), [7.0]);
    }

    #[test]
    fn tree_records_winner() {
        let mut r = key().stream("t", 0, 0);
        assert_eq!(comparator_tree(&[1.0, 4.0, 2.0, 3.0], Snr::Infinite, &mut r), (4.0, 1));
        assert_eq!(comparator_tree(&[1.0, 2.0, 6.0], Snr::Infinite, &mut r), (6.0, 2));
        assert_eq!(comparator_tree(&[9.0], Snr::Infinite, &mut r), (9.0, 0));
    }

    #[test]
    fn quantized_conv_matches_substituted_oracle() {
        use rand::Rng;
        let mut r = rng::stream(9, "t", 0, 0);
        let mut layer = ConvLayer::same(2, 3, 3).unwrap();
        layer.weights.iter_mut().for_each(|w| *w = r.random_range(-0.9..0.9));
        layer.bias.iter_mut().for_each(|b| *b = r.random_range(-0.9..0.9));
        let x = Tensor::new(vec![2, 5, 5], (0..50).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let mut dev = ideal();
        dev.memristor_states = Levels::Finite(1000);
        let conv = AnalogConv::program(&layer, (5, 5), &dev).unwrap();
        let mut substituted = layer.clone();
        for w in substituted.weights.iter_mut().chain(substituted.bias.iter_mut()) {
            *w = crate::device::dequantize(*w, dev.memristor_states, conv.weights.w_max);
        }
        let want = crate::oracle::conv2d(&x, &substituted).unwrap();
        let got = memristive_convolve(&x, &conv).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}
