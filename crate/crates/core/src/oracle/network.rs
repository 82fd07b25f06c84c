use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d, conv2d_backward, fc, fc_backward, maxpool2x2, maxpool2x2_backward, relu, relu_derivative,
    ConvLayer, DenseLayer, Pooled,
};
use crate::arch::NetworkConfig;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 1,
            epochs: 3,
            seed: 1,
        }
    }
}

impl TrainingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Gaussian initialisation with per-role gains.
///
/// Convs inside a stage are linear, so only the last one of each stage
/// gets the ReLU gain. The output layer starts small with a positive bias
/// so its rectifiers are alive on the first step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitScheme {
    pub linear_gain: f64,
    pub relu_gain: f64,
    pub output_gain: f64,
    pub output_scale: f64,
    pub stage_bias: f64,
    pub dense_bias: f64,
}

impl Default for InitScheme {
    fn default() -> Self {
        Self {
            linear_gain: 1.0,
            relu_gain: 2.0,
            output_gain: 1.0,
            output_scale: 0.1,
            stage_bias: 0.01,
            dense_bias: 0.1,
        }
    }
}

/// Conv stages (back-to-back convs, then ReLU and 2x2 pool) followed by
/// dense layers, each with a ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub input: [usize; 3],
    pub stages: Vec<Vec<ConvLayer>>,
    pub dense: Vec<DenseLayer>,
}

impl Model {
    pub fn zeros(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut channels = cfg.input[0];
        let mut stages = Vec::with_capacity(cfg.fe.len());
        for stage in &cfg.fe {
            let mut convs = Vec::new();
            for (filter, width) in stage.conv_layers() {
                convs.push(ConvLayer::same(channels, width, filter)?);
                channels = width;
            }
            stages.push(convs);
        }
        let mut inputs = cfg.feature_count()?;
        let mut dense = Vec::new();
        for width in cfg.dense_widths() {
            dense.push(DenseLayer::zeros(inputs, width));
            inputs = width;
        }
        Ok(Self {
            input: cfg.input,
            stages,
            dense,
        })
    }

    pub fn init(cfg: &NetworkConfig, seed: u64, scheme: &InitScheme) -> Result<Self> {
        let mut model = Self::zeros(cfg)?;
        let mut layer_id = 0u64;
        for stage in &mut model.stages {
            let last = stage.len() - 1;
            for (l, conv) in stage.iter_mut().enumerate() {
                let fan_in = (conv.in_channels * conv.filter.0 * conv.filter.1) as f64;
                let gain = if l == last { scheme.relu_gain } else { scheme.linear_gain };
                fill_normal(&mut conv.weights, (gain / fan_in).sqrt(), seed, layer_id);
                if l == last {
                    conv.bias.fill(scheme.stage_bias);
                }
                layer_id += 1;
            }
        }
        let last = model.dense.len() - 1;
        for (l, d) in model.dense.iter_mut().enumerate() {
            let std = if l == last {
                (scheme.output_gain / d.inputs as f64).sqrt() * scheme.output_scale
            } else {
                (scheme.relu_gain / d.inputs as f64).sqrt()
            };
            fill_normal(&mut d.weights, std, seed, layer_id);
            d.bias.fill(scheme.dense_bias);
            layer_id += 1;
        }
        Ok(model)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|(w, b)| w.len() + b.len()).sum()
    }

    /// Weight and bias slices of every layer in forward order.
    pub fn layers(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.stages
            .iter()
            .flatten()
            .map(|c| (c.weights.as_slice(), c.bias.as_slice()))
            .chain(self.dense.iter().map(|d| (d.weights.as_slice(), d.bias.as_slice())))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = (&mut Vec<f64>, &mut Vec<f64>)> {
        self.stages
            .iter_mut()
            .flatten()
            .map(|c| (&mut c.weights, &mut c.bias))
            .chain(self.dense.iter_mut().map(|d| (&mut d.weights, &mut d.bias)))
    }

    pub fn class_count(&self) -> usize {
        self.dense.last().map_or(0, |d| d.outputs)
    }
}

fn fill_normal(dst: &mut [f64], std: f64, seed: u64, layer: u64) {
    let mut r = rng::stream(seed, rng::tag::INIT, 0, layer);
    for w in dst {
        let z: f64 = StandardNormal.sample(&mut r);
        *w = z * std;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    /// Input of each conv in the stage.
    pub conv_inputs: Vec<Tensor>,
    /// Output of the last conv (pre-activation).
    pub pre_activation: Tensor,
    pub pool: Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrace {
    pub input: Tensor,
    pub pre_activation: Tensor,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub stages: Vec<StageTrace>,
    pub dense: Vec<DenseTrace>,
    pub scores: Tensor,
}

impl ForwardCache {
    pub fn check_against(&self, model: &Model) -> Result<()> {
        if self.stages.len() != model.stages.len() || self.dense.len() != model.dense.len() {
            return Err(Error::Contract("forward cache does not belong to this model".into()));
        }
        for (trace, stage) in self.stages.iter().zip(&model.stages) {
            if trace.conv_inputs.len() != stage.len() {
                return Err(Error::Contract("forward cache is missing conv inputs".into()));
            }
        }
        Ok(())
    }
}

pub fn forward(model: &Model, sample: &Tensor) -> Result<ForwardCache> {
    let (c, h, w) = sample.chw()?;
    if [c, h, w] != model.input {
        return Err(Error::shape("sample length", model.input.iter().product(), sample.len()));
    }
    let mut x = sample.clone();
    let mut stages = Vec::with_capacity(model.stages.len());
    for stage in &model.stages {
        let mut conv_inputs = Vec::with_capacity(stage.len());
        for conv in stage {
            let z = conv2d(&x, conv)?;
            conv_inputs.push(std::mem::replace(&mut x, z));
        }
        let pool = maxpool2x2(&relu(&x))?;
        let next = pool.output.clone();
        stages.push(StageTrace {
            conv_inputs,
            pre_activation: x,
            pool,
        });
        x = next;
    }
    let mut x = x.flatten();
    let mut dense = Vec::with_capacity(model.dense.len());
    for layer in &model.dense {
        let z = fc(&x, layer)?;
        let a = relu(&z);
        dense.push(DenseTrace {
            input: x,
            pre_activation: z,
        });
        x = a;
    }
    if !x.all_finite() {
        return Err(Error::Contract("non-finite activation in forward pass".into()));
    }
    Ok(ForwardCache {
        stages,
        dense,
        scores: x,
    })
}

pub fn predict(model: &Model, sample: &Tensor) -> Result<usize> {
    Ok(forward(model, sample)?.scores.argmax())
}

pub fn one_hot(class: usize, classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[classes]);
    t.data_mut()[class] = 1.0;
    t
}

/// `0.5 * |a - t|^2`.
pub fn cost(scores: &Tensor, target: &Tensor) -> f64 {
    0.5 * scores
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, t)| (a - t) * (a - t))
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-layer gradients in the same nesting as [`Model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub stages: Vec<Vec<ParamGrad>>,
    pub dense: Vec<ParamGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        let z = |w: &[f64], b: &[f64]| ParamGrad {
            weights: vec![0.0; w.len()],
            bias: vec![0.0; b.len()],
        };
        Self {
            stages: model
                .stages
                .iter()
                .map(|s| s.iter().map(|c| z(&c.weights, &c.bias)).collect())
                .collect(),
            dense: model.dense.iter().map(|d| z(&d.weights, &d.bias)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamGrad> {
        self.stages.iter().flatten().chain(&self.dense)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamGrad> {
        self.stages.iter_mut().flatten().chain(&mut self.dense)
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.iter()
            .all(|g| g.weights.iter().chain(&g.bias).all(|&x| x == 0.0))
    }
}

/// Error terms at every pre-activation, nested like [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Deltas {
    pub stages: Vec<Vec<Tensor>>,
    pub dense: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backprop {
    pub gradients: Gradients,
    pub deltas: Deltas,
}

/// Error at the output: `(a - t) * relu'(z)`.
pub fn output_delta(scores: &Tensor, target: &Tensor, relu_deriv: &Tensor) -> Result<Tensor> {
    if scores.len() != target.len() || scores.len() != relu_deriv.len() {
        return Err(Error::Contract(format!(
            "output error operands differ in length ({}, {}, {})",
            scores.len(),
            target.len(),
            relu_deriv.len()
        )));
    }
    let d = scores
        .data()
        .iter()
        .zip(target.data())
        .zip(relu_deriv.data())
        .map(|((a, t), g)| (a - t) * g)
        .collect();
    Ok(Tensor::vector(d))
}

pub fn backward(model: &Model, cache: &ForwardCache, target: &Tensor) -> Result<Backprop> {
    cache.check_against(model)?;
    let last = cache
        .dense
        .last()
        .ok_or_else(|| Error::Contract("empty forward cache".into()))?;
    let mut delta = output_delta(&cache.scores, target, &relu_derivative(&last.pre_activation))?;
    let mut dense_grads = Vec::with_capacity(model.dense.len());
    let mut dense_deltas = Vec::with_capacity(model.dense.len());
    for (l, layer) in model.dense.iter().enumerate().rev() {
        let trace = &cache.dense[l];
        let g = fc_backward(&trace.input, layer, &delta)?;
        dense_grads.push(ParamGrad { weights: g.weights, bias: g.bias });
        dense_deltas.push(delta);
        delta = if l > 0 {
            g.input
                .zip_map(&relu_derivative(&cache.dense[l - 1].pre_activation), |a, b| a * b)?
        } else {
            g.input
        };
    }
    dense_grads.reverse();
    dense_deltas.reverse();

    let mut stage_grads = Vec::with_capacity(model.stages.len());
    let mut stage_deltas = Vec::with_capacity(model.stages.len());
    // `delta` is now dC/d(flattened features).
    for (s, stage) in model.stages.iter().enumerate().rev() {
        let trace = &cache.stages[s];
        let routed = maxpool2x2_backward(
            trace.pre_activation.shape(),
            &trace.pool.argmax,
            &delta.reshape(trace.pool.output.shape().to_vec())?,
        )?;
        let mut d = routed.zip_map(&relu_derivative(&trace.pre_activation), |a, b| a * b)?;
        let mut grads = Vec::with_capacity(stage.len());
        let mut deltas = Vec::with_capacity(stage.len());
        for (l, conv) in stage.iter().enumerate().rev() {
            let g = conv2d_backward(&trace.conv_inputs[l], conv, &d)?;
            grads.push(ParamGrad { weights: g.weights, bias: g.bias });
            deltas.push(d);
            d = g.input;
        }
        grads.reverse();
        deltas.reverse();
        stage_grads.push(grads);
        stage_deltas.push(deltas);
        delta = d;
    }
    stage_grads.reverse();
    stage_deltas.reverse();
    Ok(Backprop {
        gradients: Gradients { stages: stage_grads, dense: dense_grads },
        deltas: Deltas { stages: stage_deltas, dense: dense_deltas },
    })
}

/// `w -= (lr / samples) * sum_grad`.
pub fn sgd_step(model: &mut Model, summed: &Gradients, learning_rate: f64, samples: usize) {
    let scale = learning_rate / samples.max(1) as f64;
    for ((w, b), g) in model.layers_mut().zip(summed.iter()) {
        w.iter_mut().zip(&g.weights).for_each(|(x, d)| *x -= scale * d);
        b.iter_mut().zip(&g.bias).for_each(|(x, d)| *x -= scale * d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::preset;

    #[test]
    fn zero_image_zero_bias_gives_zero_scores() {
        let cfg = preset("LeNet-A").unwrap();
        let mut model = Model::init(&cfg, 3, &InitScheme::default()).unwrap();
        for (_, b) in model.layers_mut() {
            b.fill(0.0);
        }
        let cache = forward(&model, &Tensor::zeros(&[1, 28, 28])).unwrap();
        assert!(cache.scores.data().iter().all(|&x| x == 0.0));
        assert_eq!(cache.scores.len(), 10);
    }

    #[test]
    fn zero_cost_gradient_gives_zero_everything() {
        let cfg = preset("LeNet-A").unwrap();
        let model = Model::init(&cfg, 5, &InitScheme::default()).unwrap();
        let x = Tensor::full(&[1, 28, 28], 0.3);
        let cache = forward(&model, &x).unwrap();
        let bp = backward(&model, &cache, &cache.scores.clone()).unwrap();
        assert!(bp.gradients.is_zero());
        assert!(bp.deltas.dense.iter().chain(bp.deltas.stages.iter().flatten()).all(|d| d.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn sgd_arithmetic() {
        let cfg = crate::arch::parse_config("input = 1x1x1\nfe = 1x1, 1, 1\nfc = 1, 1\n").unwrap();
        let mut model = Model::zeros(&cfg).unwrap();
        model.dense[0].weights[0] = 1.0;
        let mut g = Gradients::zeros_like(&model);
        g.dense[0].weights[0] = 2.0;
        sgd_step(&mut model, &g, 0.5, 1);
        assert_eq!(model.dense[0].weights[0], 0.0);
        let before = model.clone();
        let zero = Gradients::zeros_like(&model);
        sgd_step(&mut model, &zero, 0.5, 1);
        assert_eq!(model, before);
    }

    #[test]
    fn mismatched_cache_is_a_contract_violation() {
        let a = Model::init(&preset("LeNet-A").unwrap(), 1, &InitScheme::default()).unwrap();
        let cache = forward(&a, &Tensor::zeros(&[1, 28, 28])).unwrap();
        let mut b = a.clone();
        b.dense.pop();
        assert!(matches!(backward(&b, &cache, &one_hot(0, 10)), Err(Error::Contract(_))));
    }
}
