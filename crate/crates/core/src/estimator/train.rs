use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TaskWeights};
use super::loss::{batch_loss, BatchLoss};
use super::metrics::{argmax, Metrics, Prediction};
use super::model::{Model, Pass};
use crate::dataset::{LabeledDataset, MotionState};
use crate::error::{Error, Result};
use crate::tensor::{AdamConfig, Tensor};
use crate::wake::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate the test split every this many epochs (0 disables).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 64, lr: 1e-4, epochs: 200, seed: 0, eval_every: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test: Option<EpochMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub rmse_x: f64,
    pub acc_speed: f64,
    pub acc_dir: f64,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainStatus {
    Completed,
    /// Training stopped on a non-finite loss; the returned model is the last finite one.
    Diverged { epoch: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub status: TrainStatus,
}

/// Standardized input tensor `[B, sl, N]` and labels for the given sample indices.
pub fn assemble_batch(ds: &LabeledDataset, indices: &[usize]) -> (Tensor, Vec<MotionState>) {
    let per = ds.sl * ds.sensors;
    let mut data = vec![0.0; indices.len() * per];
    let mut labels = Vec::with_capacity(indices.len());
    for (row, &i) in data.chunks_exact_mut(per).zip(indices) {
        let s = &ds.samples[i];
        ds.standardizer.apply_into(&s.window.frames, row);
        labels.push(s.state);
    }
    let x = Tensor::new(vec![indices.len(), ds.sl, ds.sensors], data).expect("batch shape");
    (x, labels)
}

fn check_compatible(ds: &LabeledDataset, cfg: &ModelConfig) -> Result<()> {
    if ds.sl != cfg.seq_len || ds.sensors != cfg.sensors || ds.speed_classes.len() != cfg.speed_classes {
        return Err(Error::invalid(format!(
            "dataset (sl {}, {} sensors, {} speeds) does not match the model (sl {}, {} sensors, {} speeds)",
            ds.sl,
            ds.sensors,
            ds.speed_classes.len(),
            cfg.seq_len,
            cfg.sensors,
            cfg.speed_classes
        )));
    }
    Ok(())
}

/// One optimizer step on a batch; gradients are cleared first.
pub fn train_step(
    model: &mut Model,
    x: &Tensor,
    targets: &[MotionState],
    weights: &TaskWeights,
    adam: &AdamConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BatchLoss> {
    let (out, tape) = model.forward(x, Pass::Train(rng))?;
    let loss = batch_loss(&out, targets, weights)?;
    if !loss.total.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    let grads = model.backward(&tape, &loss.grads)?;
    model.params.zero_grad();
    for (i, g) in grads.iter().enumerate() {
        model.params.accumulate(i, g)?;
    }
    if !model.params.grads_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    model.params.adam_step(adam)?;
    model.bn_stats = tape.running;
    Ok(loss)
}

/// Mini-batch Adam on the weighted loss over `ds.train`.
pub fn train(ds: &LabeledDataset, cfg: &ModelConfig, weights: &TaskWeights, hyper: &TrainConfig) -> Result<TrainOutcome> {
    let model = Model::new(cfg, derive_seed(hyper.seed, 0))?;
    train_from(model, ds, weights, hyper)
}

/// Continues training an existing model.
pub fn train_from(model: Model, ds: &LabeledDataset, weights: &TaskWeights, hyper: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(model, ds, weights, hyper, |_| {})
}

/// [`train_from`] with a callback after every epoch.
pub fn train_observed<F>(
    mut model: Model,
    ds: &LabeledDataset,
    weights: &TaskWeights,
    hyper: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord),
{
    check_compatible(ds, &model.config)?;
    if ds.train.is_empty() {
        return Err(Error::invalid("empty training split"));
    }
    if hyper.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let adam = AdamConfig::with_lr(hyper.lr);
    if !(adam.lr > 0.0) {
        return Err(Error::invalid(format!("learning rate must be positive, got {}", hyper.lr)));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, 1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, 2));
    let mut order = ds.train.clone();
    let mut history = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        let snapshot = model.clone();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(hyper.batch_size) {
            let (x, y) = assemble_batch(ds, chunk);
            match train_step(&mut model, &x, &y, weights, &adam, &mut dropout_rng) {
                Ok(loss) => {
                    loss_sum += loss.total * chunk.len() as f64;
                    seen += chunk.len();
                }
                Err(Error::NonFinite(what)) => {
                    return Ok(TrainOutcome {
                        model: snapshot,
                        history,
                        status: TrainStatus::Diverged { epoch, reason: format!("non-finite {what}") },
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let test = if hyper.eval_every > 0 && (epoch + 1) % hyper.eval_every == 0 && !ds.test.is_empty() {
            let m = evaluate(&model, ds, &ds.test)?;
            Some(EpochMetrics { rmse_x: m.rmse_x, acc_speed: m.acc_speed, acc_dir: m.acc_dir, fitness: m.fitness() })
        } else {
            None
        };
        let record = EpochRecord { epoch, train_loss: loss_sum / seen as f64, test };
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome { model, history, status: TrainStatus::Completed })
}

const EVAL_BATCH: usize = 256;

/// Eval-mode argmax predictions for the given sample indices.
pub fn predict(model: &Model, ds: &LabeledDataset, indices: &[usize]) -> Result<Vec<Prediction>> {
    check_compatible(ds, &model.config)?;
    let (v, d) = (model.config.speed_classes, model.config.direction_classes);
    let mut preds = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, _) = assemble_batch(ds, chunk);
        let (out, _) = model.forward(&x, Pass::Eval)?;
        for s in 0..chunk.len() {
            preds.push(Prediction {
                x_hat: out.x_hat[s],
                v_class: argmax(&out.speed_logits.data()[s * v..(s + 1) * v]),
                d_class: argmax(&out.direction_logits.data()[s * d..(s + 1) * d]),
            });
        }
    }
    Ok(preds)
}

pub fn evaluate(model: &Model, ds: &LabeledDataset, indices: &[usize]) -> Result<Metrics> {
    if indices.is_empty() {
        return Err(Error::invalid("empty evaluation split"));
    }
    let preds = predict(model, ds, indices)?;
    let truth: Vec<MotionState> = indices.iter().map(|&i| ds.samples[i].state).collect();
    Metrics::from_predictions(&preds, &truth, model.config.speed_classes, model.config.direction_classes)
}
