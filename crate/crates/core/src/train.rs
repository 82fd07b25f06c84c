//! Minibatch SGD for the digital reference and for the analog pipeline.
//!
//! Per-sample work inside a batch runs on the rayon pool. Results are
//! collected in sample order and summed sequentially, so the outcome does
//! not depend on the thread count.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analog::{analog_forward, commit_update, sample_gradients, AnalogModel, NoiseKey};
use crate::arch::NetworkConfig;
use crate::dataset::Dataset;
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::oracle::{backward, cost, forward, one_hot, sgd_step, Gradients, InitScheme, Model, TrainingParams};
use crate::rng::{self, tag};

/// Noise phase used by every evaluation pass, so that all evaluations of
/// the same sample share their noise draws.
pub const EVAL_PHASE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ideal,
    Analog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean cost over the epoch's training samples, before each update.
    pub cost: f64,
    /// Accuracy over the epoch's training samples, before each update.
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trained {
    Ideal(Model),
    Analog(AnalogModel),
}

impl Trained {
    /// Signed weights of the trained network.
    pub fn model(&self) -> Model {
        match self {
            Trained::Ideal(m) => m.clone(),
            Trained::Analog(a) => a.to_model(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trained: Trained,
    pub metrics: Vec<EpochMetrics>,
    /// Test accuracy of the final network (of the untrained one at 0 epochs).
    pub test_accuracy: f64,
    /// Weight writes clipped at the conductance limit.
    pub saturations: u64,
}

struct SampleResult {
    cost: f64,
    correct: bool,
    gradients: Gradients,
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn check_data(cfg: &NetworkConfig, ds: &Dataset) -> Result<()> {
    if ds.class_count > cfg.class_count() {
        return Err(Error::config(format!(
            "dataset has {} classes but the network outputs {}",
            ds.class_count,
            cfg.class_count()
        )));
    }
    if let Some(img) = ds.images.first() {
        if img.shape() != cfg.input {
            return Err(Error::config(format!(
                "dataset images are {:?} but the network expects {:?}",
                img.shape(),
                cfg.input
            )));
        }
    }
    Ok(())
}

/// Accuracy of the digital reference.
pub fn evaluate(model: &Model, ds: &Dataset) -> Result<f64> {
    let hits = ds
        .images
        .par_iter()
        .zip(&ds.labels)
        .map(|(x, &y)| Ok(usize::from(forward(model, x)?.scores.argmax() == y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(fraction(hits.iter().sum(), ds.len()))
}

/// Accuracy of the analog pipeline. Noise draws depend on `seed` and the
/// sample index only.
pub fn evaluate_analog(model: &AnalogModel, ds: &Dataset, dev: &DeviceParams, seed: u64) -> Result<f64> {
    let hits = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let key = NoiseKey {
                seed,
                phase: EVAL_PHASE,
                sample: i as u64,
            };
            let store = analog_forward(model, &ds.images[i], dev, &key)?;
            Ok(usize::from(store.scores.argmax() == ds.labels[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fraction(hits.iter().sum(), ds.len()))
}

fn evaluate_trained(t: &Trained, ds: &Dataset, dev: &DeviceParams, seed: u64) -> Result<f64> {
    match t {
        Trained::Ideal(m) => evaluate(m, ds),
        Trained::Analog(a) => evaluate_analog(a, ds, dev, seed),
    }
}

fn run_sample(t: &Trained, ds: &Dataset, i: usize, dev: &DeviceParams, key: NoiseKey) -> Result<SampleResult> {
    let x = &ds.images[i];
    let label = ds.labels[i];
    let classes = match t {
        Trained::Ideal(m) => m.class_count(),
        Trained::Analog(a) => a.dense.last().map_or(0, |d| d.layer.outputs),
    };
    let target = one_hot(label, classes);
    match t {
        Trained::Ideal(m) => {
            let cache = forward(m, x)?;
            let bp = backward(m, &cache, &target)?;
            Ok(SampleResult {
                cost: cost(&cache.scores, &target),
                correct: cache.scores.argmax() == label,
                gradients: bp.gradients,
            })
        }
        Trained::Analog(a) => {
            let store = analog_forward(a, x, dev, &key)?;
            let bp = sample_gradients(a, &store, &target, dev, &key)?;
            Ok(SampleResult {
                cost: cost(&store.scores, &target),
                correct: store.scores.argmax() == label,
                gradients: bp.gradients,
            })
        }
    }
}

/// Train `cfg` from a seeded initialisation. `dev` is ignored in ideal mode.
pub fn train(
    cfg: &NetworkConfig,
    params: &TrainingParams,
    scheme: &InitScheme,
    mode: Mode,
    dev: &DeviceParams,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<TrainOutcome> {
    params.validate()?;
    check_data(cfg, train_set)?;
    check_data(cfg, test_set)?;
    let init = Model::init(cfg, params.seed, scheme)?;
    let mut trained = match mode {
        Mode::Ideal => Trained::Ideal(init),
        Mode::Analog => {
            dev.validate()?;
            Trained::Analog(AnalogModel::program(&init, dev)?)
        }
    };
    let mut metrics = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::stream(params.seed, tag::SHUFFLE, epoch as u64, 0));
        let (mut total_cost, mut hits) = (0.0, 0);
        for batch in order.chunks(params.batch_size) {
            let t = &trained;
            let results = batch
                .par_iter()
                .map(|&i| {
                    let key = NoiseKey {
                        seed: params.seed,
                        phase: epoch as u64,
                        sample: i as u64,
                    };
                    run_sample(t, train_set, i, dev, key)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut sum: Option<Gradients> = None;
            for r in results {
                total_cost += r.cost;
                hits += usize::from(r.correct);
                match &mut sum {
                    Some(s) => s.add_assign(&r.gradients),
                    None => sum = Some(r.gradients),
                }
            }
            let Some(sum) = sum else { continue };
            match &mut trained {
                Trained::Ideal(m) => sgd_step(m, &sum, params.learning_rate, batch.len()),
                Trained::Analog(a) => commit_update(a, &sum, params.learning_rate, batch.len()),
            }
        }
        let test_accuracy = evaluate_trained(&trained, test_set, dev, params.seed)?;
        let n = train_set.len().max(1) as f64;
        let m = EpochMetrics {
            epoch: epoch + 1,
            cost: total_cost / n,
            train_accuracy: fraction(hits, train_set.len()),
            test_accuracy,
        };
        log::info!(
            "epoch {}: cost {:.4}, train {:.3}, test {:.3}",
            m.epoch,
            m.cost,
            m.train_accuracy,
            m.test_accuracy
        );
        metrics.push(m);
    }
    let test_accuracy = match metrics.last() {
        Some(m) => m.test_accuracy,
        None => evaluate_trained(&trained, test_set, dev, params.seed)?,
    };
    let saturations = match &trained {
        Trained::Ideal(_) => 0,
        Trained::Analog(a) => a.saturations(),
    };
    Ok(TrainOutcome {
        trained,
        metrics,
        test_accuracy,
        saturations,
    })
}
