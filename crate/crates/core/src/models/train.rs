use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::net::NetModel;
use crate::error::{Error, Result};
use crate::ingest::{load_samples, DatasetManifest, Sample, Split};
use crate::nncore::{cross_entropy, cross_entropy_grad, softmax, Sgd, Tensor};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.005,
            momentum: 0.9,
            epochs: 10,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean cross-entropy over each epoch's mini-batches.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients(model: &NetModel, sample: &Sample) -> Result<(f64, Vec<Tensor>)> {
    let trace = model.forward_trace(&sample.input)?;
    let probs = softmax(&trace.logits);
    let loss = cross_entropy(&probs, sample.label)?;
    let (grads, _) = model.backward(&trace, &cross_entropy_grad(&probs, sample.label)?)?;
    Ok((loss, grads))
}

/// Minimize softmax cross-entropy with mini-batch SGD.
///
/// Batch order comes from the seed; per-sample gradients may be computed
/// in parallel but are summed in batch order, so results do not depend on
/// the thread count.
pub fn train_samples(
    model: &mut NetModel,
    samples: &[Sample],
    hyper: &TrainConfig,
) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    if hyper.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let k = model.classes();
    let mut present = vec![false; k];
    for s in samples {
        *present
            .get_mut(s.label)
            .ok_or_else(|| Error::Dataset(format!("label {} outside {k} classes", s.label)))? =
            true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::Dataset(format!(
            "class {missing} missing from train split"
        )));
    }

    let n_params = model.params().len();
    let trainable: Vec<bool> = (0..n_params)
        .map(|i| !model.frozen || i >= n_params - model.head_param_count())
        .collect();
    let mut opt = Sgd::new(hyper.lr, hyper.momentum)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_loss = Vec::with_capacity(hyper.epochs);
    let mut steps = 0;
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng::stream(
            hyper.seed,
            &format!("train/epoch/{epoch}"),
        ));
        let mut total = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let results: Vec<(f64, Vec<Tensor>)> = batch
                .par_iter()
                .map(|&i| sample_gradients(model, &samples[i]))
                .collect::<Result<_>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut iter = results.into_iter();
            let (first_loss, mut sum) = iter.next().expect("non-empty batch");
            total += first_loss;
            for (loss, grads) in iter {
                total += loss;
                for (acc, g) in sum.iter_mut().zip(&grads) {
                    acc.axpy(1.0, g)?;
                }
            }
            for g in &mut sum {
                for v in g.data_mut() {
                    *v *= scale;
                }
            }
            let grads: Vec<Option<&Tensor>> = sum
                .iter()
                .zip(&trainable)
                .map(|(g, &t)| t.then_some(g))
                .collect();
            opt.step(&mut model.params_mut(), &grads)?;
            steps += 1;
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Contract(format!(
                "training diverged in epoch {epoch}"
            )));
        }
        log::info!("{} epoch {}: loss {mean:.6}", model.arch, epoch + 1);
        epoch_loss.push(mean);
    }
    Ok(TrainReport { epoch_loss, steps })
}

/// Train on the manifest's train split, resized to the model's input size.
pub fn train_model(
    model: &mut NetModel,
    manifest: &DatasetManifest,
    hyper: &TrainConfig,
) -> Result<TrainReport> {
    if manifest.family_count != model.classes() {
        return Err(Error::Dataset(format!(
            "manifest has {} families, model head has {} classes",
            manifest.family_count,
            model.classes()
        )));
    }
    let samples = load_samples(manifest, Split::Train, model.config.input)?;
    train_samples(model, &samples, hyper)
}

pub fn predict_class(model: &NetModel, input: &Tensor) -> Result<usize> {
    Ok(argmax(model.logits(input)?.data()))
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(model: &NetModel, samples: &[Sample]) -> Result<f64> {
    let correct: Vec<bool> = samples
        .par_iter()
        .map(|s| predict_class(model, &s.input).map(|p| p == s.label))
        .collect::<Result<_>>()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / samples.len().max(1) as f64)
}
