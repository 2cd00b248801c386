use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamStore};
use crate::data::{dataset_dims, Sample, Task};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::Tensor;

use super::{compute_metrics, resample_epoch, split_train_val, Adam, MetricsReport};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy over the (unresampled) training split with dropout off.
    pub train_acc: f64,
    pub val_acc_task: f64,
    pub val_f1_task: f64,
    pub val_acc_w: f64,
    pub val_acc_u: f64,
    pub val_f1_w: f64,
    pub val_f1_u: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Restored to the epoch with the best validation `f1_task`.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: MetricsReport,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

fn task_labels(samples: &[Sample], task: Task) -> Vec<usize> {
    samples.iter().map(|s| s.labels.get(task)).collect()
}

/// Predictions with dropout off.
pub fn predict_all(model: &Model, samples: &[&Sample]) -> Result<Vec<usize>> {
    samples.iter().map(|s| model.predict(&s.features)).collect()
}

/// Scores `model` on `samples` under `task`.
pub fn evaluate(model: &Model, samples: &[Sample], task: Task) -> Result<MetricsReport> {
    let n = model.config().n_classes;
    if n != task.n_classes() {
        return Err(Error::invalid(format!(
            "checkpoint has {n} classes but the {task} task needs {}",
            task.n_classes()
        )));
    }
    model.check_dims(&dataset_dims(samples)?)?;
    let refs: Vec<&Sample> = samples.iter().collect();
    let pred = predict_all(model, &refs)?;
    compute_metrics(&task_labels(samples, task), &pred, n)
}

fn snapshot(store: &ParamStore) -> Vec<Tensor> {
    store.iter().map(|(_, p)| p.value().clone()).collect()
}

fn restore(store: &mut ParamStore, values: Vec<Tensor>) -> Result<()> {
    let ids: Vec<_> = store.ids().collect();
    for (id, v) in ids.into_iter().zip(values) {
        store.set_value(id, v)?;
    }
    Ok(())
}

/// Mean cross-entropy of one batch; accumulates gradients into the store.
fn train_batch(model: &mut Model, batch: &[&Sample], task: Task, rng: &mut ChaCha8Rng) -> Result<f64> {
    let grads = {
        let mut g = Graph::training(model.store(), rng);
        let mut rows = Vec::with_capacity(batch.len());
        for s in batch {
            rows.push(model.forward(&mut g, &s.features)?.logits);
        }
        let logits = g.concat(&rows, 0)?;
        let labels: Vec<usize> = batch.iter().map(|s| s.labels.get(task)).collect();
        let loss = g.cross_entropy(logits, &labels)?;
        let value = g.value(loss).item()?;
        (g.backward(loss)?, value)
    };
    let store = model.store_mut();
    store.zero_grad();
    store.accumulate(&grads.0);
    Ok(grads.1)
}

/// Trains a fresh model on a stratified split of `samples`, calling
/// `on_epoch` after each epoch. Fully determined by `config`.
pub fn train_with<F: FnMut(&EpochLog)>(
    config: &ModelConfig,
    samples: &[Sample],
    mut on_epoch: F,
) -> Result<TrainOutcome> {
    let task = config.task()?;
    let mut model = Model::new(config.clone())?;
    model.check_dims(&dataset_dims(samples)?)?;
    let labels = task_labels(samples, task);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let (train_idx, val_idx) = split_train_val(&labels, config.n_classes, config.val_fraction, &mut rng)?;
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let train_set: Vec<&Sample> = train_idx.iter().map(|&i| &samples[i]).collect();
    let val_set: Vec<&Sample> = val_idx.iter().map(|&i| &samples[i]).collect();
    let val_labels: Vec<usize> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut adam = Adam::new(
        model.store(),
        config.lr,
        config.beta1,
        config.beta2,
        config.adam_eps,
        config.weight_decay,
    );
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, MetricsReport, Vec<Tensor>)> = None;
    for epoch in 1..=config.epochs {
        let order = resample_epoch(&train_labels, config.n_classes, &mut rng)?;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&k| train_set[k]).collect();
            loss_sum += train_batch(&mut model, &batch, task, &mut rng)?;
            adam.step(model.store_mut());
            batches += 1;
        }
        let train_pred = predict_all(&model, &train_set)?;
        let hits = train_pred.iter().zip(&train_labels).filter(|(p, y)| p == y).count();
        let val = compute_metrics(&val_labels, &predict_all(&model, &val_set)?, config.n_classes)?;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / batches as f64,
            train_acc: hits as f64 / train_labels.len() as f64,
            val_acc_task: val.acc_task,
            val_f1_task: val.f1_task,
            val_acc_w: val.acc_weighted,
            val_acc_u: val.acc_unweighted,
            val_f1_w: val.f1_weighted,
            val_f1_u: val.f1_unweighted,
        };
        if !entry.train_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        on_epoch(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|(_, b, _)| val.f1_task > b.f1_task) {
            best = Some((epoch, val, snapshot(model.store())));
        }
    }
    let (best_epoch, best_val, values) = best.ok_or_else(|| Error::invalid("epochs must be positive"))?;
    restore(model.store_mut(), values)?;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_val,
        train_idx,
        val_idx,
    })
}

pub fn train(config: &ModelConfig, samples: &[Sample]) -> Result<TrainOutcome> {
    train_with(config, samples, |_| {})
}
