use serde::{Deserialize, Serialize};

use super::forward::{AnalogModel, NoiseKey, PeripheralStore};
use crate::device::{awgn, DeviceParams, QuantizedWeights};
use crate::error::{Error, Result};
use crate::oracle::{
    conv2d_backward, fc_backward, maxpool2x2_backward, output_delta, Deltas, Gradients, ParamGrad, TrainingParams,
};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Optical error signal with its splitter attenuation tracked separately,
/// so the conditioning gain can remove it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSignal {
    pub values: Vec<f64>,
    pub scale: f64,
}

impl ScaledSignal {
    fn split(mut self, factor: f64) -> Self {
        self.scale *= factor;
        self
    }

    fn condition(mut self, factor: f64) -> Self {
        self.scale /= factor;
        self
    }

    fn into_values(self) -> Vec<f64> {
        if self.scale == 1.0 {
            self.values
        } else {
            self.values.into_iter().map(|v| v * self.scale).collect()
        }
    }
}

/// Bookkeeping from one backward hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HopStats {
    /// Sequential wavelength groups needed to multiplex the error vector.
    pub wavelength_groups: usize,
}

/// Put the error on carriers (with interface noise), split, multiplex and
/// fan out. Returns the signal as it reaches the weight modulators.
fn launch_error(delta: &Tensor, dev: &DeviceParams, rng: &mut Stream) -> (ScaledSignal, HopStats) {
    let mut values = delta.data().to_vec();
    awgn(&mut values, dev.interface_snr_db, rng);
    let stats = HopStats {
        wavelength_groups: dev.wavelengths.groups(values.len()),
    };
    (ScaledSignal { values, scale: 1.0 }.split(dev.split_factor), stats)
}

fn land_error(signal: ScaledSignal, dev: &DeviceParams) -> Vec<f64> {
    signal.condition(dev.split_factor).into_values()
}

/// `(W^T delta) * relu'(z)` through the photonic path.
pub fn backward_mvm(
    delta_next: &Tensor,
    weights: &crate::oracle::DenseLayer,
    relu_deriv: &Tensor,
    dev: &DeviceParams,
    rng: &mut Stream,
) -> Result<(Tensor, HopStats)> {
    if delta_next.len() != weights.outputs {
        return Err(Error::shape("backward error length", weights.outputs, delta_next.len()));
    }
    if relu_deriv.len() != weights.inputs {
        return Err(Error::shape("relu derivative length", weights.inputs, relu_deriv.len()));
    }
    let (signal, stats) = launch_error(delta_next, dev, rng);
    let m = weights.inputs;
    let mut acc = vec![0.0; m];
    for (n, &d) in signal.values.iter().enumerate() {
        let row = &weights.weights[n * m..(n + 1) * m];
        for (a, &w) in acc.iter_mut().zip(row) {
            *a += w * d;
        }
    }
    for (a, &g) in acc.iter_mut().zip(relu_deriv.data()) {
        *a *= g;
    }
    let out = land_error(ScaledSignal { values: acc, scale: signal.scale }, dev);
    Ok((Tensor::vector(out), stats))
}

/// Noisy per-sample gradients and the error terms that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogBackprop {
    pub gradients: Gradients,
    pub deltas: Deltas,
    /// Layer hops the timing model charges for this pass.
    pub hops: usize,
    pub wavelength_groups: usize,
}

/// `delta (x) O` products through the modulator/photodiode path.
fn update_products(mut g: ParamGrad, dev: &DeviceParams, key: &NoiseKey, layer: usize) -> ParamGrad {
    let mut r = key.stream(rng::tag::UPDATE, layer, 0);
    awgn(&mut g.weights, dev.interface_snr_db, &mut r);
    awgn(&mut g.bias, dev.interface_snr_db, &mut r);
    g
}

pub fn sample_gradients(
    model: &AnalogModel,
    store: &PeripheralStore,
    target: &Tensor,
    dev: &DeviceParams,
    key: &NoiseKey,
) -> Result<AnalogBackprop> {
    if store.stages.len() != model.stages.len() || store.dense.len() != model.dense.len() {
        return Err(Error::Contract("peripheral store does not belong to this model".into()));
    }
    let conv_layers: usize = model.stages.iter().map(Vec::len).sum();
    let last = store
        .dense
        .last()
        .ok_or_else(|| Error::Contract("empty peripheral store".into()))?;
    let mut delta = output_delta(&store.scores, target, &last.gate)?;
    let mut groups = 0;

    let mut dense_grads = Vec::with_capacity(model.dense.len());
    let mut dense_deltas = Vec::with_capacity(model.dense.len());
    for (l, layer) in model.dense.iter().enumerate().rev() {
        let id = conv_layers + l;
        let input = &store.dense[l].input;
        let mut r = key.stream(rng::tag::BACKWARD, id, 0);
        let (signal, stats) = launch_error(&delta, dev, &mut r);
        groups += stats.wavelength_groups;
        let g = fc_backward(input, &layer.layer, &Tensor::vector(signal.values.clone()))?;
        dense_grads.push(update_products(ParamGrad { weights: g.weights, bias: g.bias }, dev, key, id));
        let mut back = g.input.into_data();
        if l > 0 {
            for (b, &d) in back.iter_mut().zip(store.dense[l - 1].gate.data()) {
                *b *= d;
            }
        }
        dense_deltas.push(delta);
        delta = Tensor::vector(land_error(ScaledSignal { values: back, scale: signal.scale }, dev));
    }
    dense_grads.reverse();
    dense_deltas.reverse();

    let mut stage_grads = Vec::with_capacity(model.stages.len());
    let mut stage_deltas = Vec::with_capacity(model.stages.len());
    let mut id = conv_layers;
    for (s, convs) in model.stages.iter().enumerate().rev() {
        let st = &store.stages[s];
        let routed = maxpool2x2_backward(
            st.conv_output.shape(),
            &st.argmax,
            &delta.reshape(st.pooled.shape().to_vec())?,
        )?;
        let mut d = routed.zip_map(&st.gate, |a, b| a * b)?;
        let mut grads = Vec::with_capacity(convs.len());
        let mut deltas = Vec::with_capacity(convs.len());
        for (l, conv) in convs.iter().enumerate().rev() {
            id -= 1;
            let mut r = key.stream(rng::tag::BACKWARD, id, 0);
            let (signal, stats) = launch_error(&d, dev, &mut r);
            groups += stats.wavelength_groups;
            let noisy = Tensor::new(d.shape().to_vec(), signal.values.clone())?;
            let g = conv2d_backward(&st.conv_inputs[l], &conv.layer, &noisy)?;
            grads.push(update_products(ParamGrad { weights: g.weights, bias: g.bias }, dev, key, id));
            // Convs inside a stage are linear: derivative 1.
            let back = land_error(
                ScaledSignal {
                    values: g.input.into_data(),
                    scale: signal.scale,
                },
                dev,
            );
            deltas.push(d);
            d = Tensor::new(st.conv_inputs[l].shape().to_vec(), back)?;
        }
        grads.reverse();
        deltas.reverse();
        stage_grads.push(grads);
        stage_deltas.push(deltas);
        delta = d;
    }
    stage_grads.reverse();
    stage_deltas.reverse();
    Ok(AnalogBackprop {
        gradients: Gradients {
            stages: stage_grads,
            dense: dense_grads,
        },
        deltas: Deltas {
            stages: stage_deltas,
            dense: dense_deltas,
        },
        hops: model.stages.len() + 1,
        wavelength_groups: groups,
    })
}

/// Commit a batch of summed gradients into one array:
/// `w_new = w_old - (lr / samples) * sum`, re-programmed (the sign switch
/// flips when the weight crosses zero).
pub fn weight_update(array: &mut QuantizedWeights, summed: &[f64], learning_rate: f64, samples: usize) {
    let scale = learning_rate / samples.max(1) as f64;
    for (i, &g) in summed.iter().enumerate() {
        if g != 0.0 {
            let w = array.value(i) - scale * g;
            array.write(i, w);
        }
    }
}

pub fn commit_update(model: &mut AnalogModel, summed: &Gradients, learning_rate: f64, samples: usize) {
    let convs = model.stages.iter_mut().flatten();
    for (conv, g) in convs.zip(summed.stages.iter().flatten()) {
        weight_update(&mut conv.weights, &g.weights, learning_rate, samples);
        weight_update(&mut conv.bias, &g.bias, learning_rate, samples);
        conv.refresh_view();
    }
    for (dense, g) in model.dense.iter_mut().zip(&summed.dense) {
        weight_update(&mut dense.weights, &g.weights, learning_rate, samples);
        weight_update(&mut dense.bias, &g.bias, learning_rate, samples);
        dense.refresh_view();
    }
}

/// Single-sample backward pass followed by the weight update.
pub fn backward_pass(
    model: &mut AnalogModel,
    store: &PeripheralStore,
    target: &Tensor,
    dev: &DeviceParams,
    params: &TrainingParams,
    key: &NoiseKey,
) -> Result<AnalogBackprop> {
    let bp = sample_gradients(model, store, target, dev, key)?;
    commit_update(model, &bp.gradients, params.learning_rate, 1);
    Ok(bp)
}
