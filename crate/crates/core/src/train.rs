//! Minibatch training loop over an encoded dataset.

use std::time::Instant;

use crate::data::{make_batches, Dataset, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::TrainingHistory;
use crate::model::Model;
use crate::nn::layers::softmax;
use crate::nn::tensor::Tensor;

/// Mean loss and parameter gradients for one batch. Per-sample gradients are
/// accumulated in batch order, so the result is independent of scheduling.
pub fn batch_gradients(
    model: &Model<f32>,
    images: &[&Tensor<f32>],
    labels: &[usize],
) -> Result<(f32, Vec<Tensor<f32>>, usize)> {
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::Data("batch images and labels disagree".into()));
    }
    let batch = images.len() as f32;
    let mut total: Option<Vec<Tensor<f32>>> = None;
    let mut loss_sum = 0.0f32;
    let mut correct = 0usize;
    for (&image, &label) in images.iter().zip(labels) {
        let (logits, caches) = model.forward(image)?;
        let probs = softmax(logits.data());
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if argmax == label {
            correct += 1;
        }
        if label >= probs.len() {
            return Err(Error::Data(format!(
                "label {label} out of range for {} classes",
                probs.len()
            )));
        }
        let p = probs[label].max(crate::nn::loss::PROB_CLIP as f32);
        loss_sum -= p.ln();
        // Combined softmax + cross-entropy gradient, pre-scaled by the
        // batch size so the accumulated sum is the batch-mean gradient.
        let grad_logits: Vec<f32> = probs
            .iter()
            .enumerate()
            .map(|(i, &pi)| (pi - if i == label { 1.0 } else { 0.0 }) / batch)
            .collect();
        let grad_logits = Tensor::from_vec(&[probs.len()], grad_logits)?;
        let grads = model.backward(&caches, &grad_logits)?;
        match &mut total {
            None => total = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (av, &gv) in a.data_mut().iter_mut().zip(g.data()) {
                        *av += gv;
                    }
                }
            }
        }
    }
    Ok((loss_sum / batch, total.unwrap(), correct))
}

/// Fraction of dataset samples whose argmax prediction matches the label.
pub fn evaluate_accuracy(model: &Model<f32>, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    for (image, &label) in ds.images.iter().zip(&ds.labels) {
        let probs = model.predict(image)?;
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if argmax == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Train for `config.epochs` epochs, recording per-epoch loss and accuracy.
pub fn train(
    model: &mut Model<f32>,
    train_set: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainingHistory> {
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let mut history = TrainingHistory::default();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let batches = make_batches(train_set.len(), config, epoch);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for batch in &batches {
            let images: Vec<&Tensor<f32>> = batch.iter().map(|&i| &train_set.images[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let (loss, grads, batch_correct) = batch_gradients(model, &images, &labels)?;
            loss_sum += loss as f64 * batch.len() as f64;
            correct += batch_correct;
            model.apply_gradients(&grads)?;
        }
        let val_accuracy = match validation {
            Some(v) => Some(evaluate_accuracy(model, v)?),
            None => None,
        };
        model.epochs_trained += 1;
        history.push(
            loss_sum / train_set.len() as f64,
            correct as f64 / train_set.len() as f64,
            val_accuracy,
            started.elapsed().as_millis() as u64,
        );
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EncodingMode;
    use crate::model::{build_model, ModelConfig};

    /// Linearly separable 2-feature toy problem, embedded into the smallest
    /// config the stack accepts (4x4 single-channel input).
    fn toy_dataset() -> Dataset {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            let class = i % 2;
            let (a, b) = if class == 0 {
                (0.9 - 0.01 * i as f32, 0.1)
            } else {
                (0.1, 0.9 - 0.01 * i as f32)
            };
            let mut data = vec![0.0f32; 16];
            data[0] = a;
            data[1] = b;
            images.push(Tensor::from_vec(&[4, 4, 1], data).unwrap());
            labels.push(class);
        }
        Dataset {
            images,
            labels,
            class_names: vec!["a".into(), "b".into()],
            mode: EncodingMode::Gray,
        }
    }

    #[test]
    fn loss_strictly_decreases_on_separable_toy() {
        let config = ModelConfig {
            input_side: 4,
            num_classes: 2,
            conv_channels: [8, 8, 8],
            dense_width: 16,
            seed: 3,
            ..ModelConfig::default()
        };
        let mut model = build_model::<f32>(&config).unwrap();
        let ds = toy_dataset();
        // 20 full-batch steps.
        let cfg = TrainConfig {
            batch_size: ds.len(),
            epochs: 20,
            seed: 0,
        };
        let history = train(&mut model, &ds, None, &cfg).unwrap();
        let losses: Vec<f64> = history.epochs.iter().map(|e| e.train_loss).collect();
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "loss not strictly decreasing: {losses:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let config = ModelConfig {
            input_side: 4,
            num_classes: 2,
            conv_channels: [4, 4, 4],
            dense_width: 8,
            seed: 1,
            ..ModelConfig::default()
        };
        let ds = toy_dataset();
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 3,
            seed: 5,
        };
        let run = || {
            let mut model = build_model::<f32>(&config).unwrap();
            train(&mut model, &ds, None, &cfg).unwrap();
            model
                .params()
                .iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                .collect::<Vec<u32>>()
        };
        assert_eq!(run(), run());
    }
}
