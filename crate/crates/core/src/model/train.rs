use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::catalog::{DayRange, HeatMapSeq, LabelTensor};
use crate::error::{Error, Result};
use crate::eval::{pr_auc, roc_auc, ScoredSample};
use crate::nn::{ClassWeights, Tensor};
use crate::prior::PriorLogits;

use super::{window, Adam, AdamConfig, Network};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the event class; the no-event class has weight 1.
    pub minor_class_weight: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Reference days per optimizer step.
    pub batch_days: usize,
    /// Training days drawn per epoch, 0 for all of them.
    pub samples_per_epoch: usize,
    /// Epochs without a validation PR AUC improvement before stopping, 0 to
    /// never stop early.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            minor_class_weight: 1000.0,
            adam: AdamConfig::default(),
            epochs: 10,
            batch_days: 8,
            samples_per_epoch: 0,
            patience: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ClassWeights::minor(self.minor_class_weight)?;
        self.adam.validate()?;
        if self.batch_days == 0 {
            return Err(Error::InvalidArgument("batch_days must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inputs shared by training, prediction and evaluation.
#[derive(Clone, Copy, Debug)]
pub struct Dataset<'a> {
    pub heatmaps: &'a HeatMapSeq,
    pub labels: &'a LabelTensor,
    pub prior: Option<&'a PriorLogits>,
}

impl Dataset<'_> {
    /// Label rows inside `range` with at least one valid cell and a full
    /// window of history.
    pub fn usable_days(&self, range: &DayRange, w: usize) -> Vec<usize> {
        self.labels
            .reference_days
            .iter()
            .enumerate()
            .filter(|&(i, &day)| {
                range.contains(day)
                    && self.labels.mask(i).contains(&1)
                    && self.heatmaps.day_offset(day).is_some_and(|t| t + 1 >= w)
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn window_for(&self, label_idx: usize, w: usize) -> Result<Vec<&[f32]>> {
        let day = self.labels.reference_days[label_idx];
        let t = self
            .heatmaps
            .day_offset(day)
            .ok_or_else(|| Error::InsufficientHistory(format!("no heat map for {day}")))?;
        window(self.heatmaps, t, w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_roc_auc: f64,
    pub val_pr_auc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// CSV with header `epoch,train_loss,val_roc_auc,val_pr_auc`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "val_roc_auc", "val_pr_auc"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_roc_auc.to_string(),
                e.val_pr_auc.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation PR AUC.
    pub network: Network,
    pub log: TrainLog,
    pub best_epoch: usize,
    /// Optimizer steps taken up to the best epoch.
    pub steps: u64,
}

/// Probability maps for the given label rows, in order.
pub fn predict_days(network: &Network, data: &Dataset, label_rows: &[usize]) -> Result<Vec<Vec<f64>>> {
    let w = network.config().window_days;
    let (h, c) = (data.heatmaps.n_rows, data.heatmaps.n_cols);
    label_rows
        .par_iter()
        .map(|&i| network.predict(&data.window_for(i, w)?, h, c, data.prior))
        .collect()
}

/// Probability map at reference day `day` from the heat maps ending there.
pub fn predict_map(
    network: &Network,
    day: chrono::NaiveDate,
    heatmaps: &HeatMapSeq,
    prior: Option<&PriorLogits>,
) -> Result<Vec<f64>> {
    let t = heatmaps
        .day_offset(day)
        .ok_or_else(|| Error::InsufficientHistory(format!("no heat map for {day}")))?;
    let maps = window(heatmaps, t, network.config().window_days)?;
    network.predict(&maps, heatmaps.n_rows, heatmaps.n_cols, prior)
}

fn validation_metrics(network: &Network, data: &Dataset, rows: &[usize]) -> Result<(f64, f64)> {
    let maps = predict_days(network, data, rows)?;
    let mut samples = Vec::new();
    for (map, &i) in maps.iter().zip(rows) {
        for ((&s, &y), &m) in map.iter().zip(data.labels.labels(i)).zip(data.labels.mask(i)) {
            if m == 1 {
                samples.push(ScoredSample::new(s, y == 1));
            }
        }
    }
    // undefined without both classes
    Ok((roc_auc(&samples).unwrap_or(f64::NAN), pr_auc(&samples).unwrap_or(f64::NAN)))
}

/// Trains `network` on reference days in `train_range`, selecting the epoch
/// with the best PR AUC on `val_range`.
///
/// Each step sums the per-window weighted NLL and gradients over a batch and
/// normalizes both by the batch's total sample weight. Per-window gradients
/// run in parallel and are reduced in batch order, so results do not depend
/// on the thread count.
pub fn train(
    mut network: Network,
    cfg: &TrainConfig,
    train_range: &DayRange,
    val_range: &DayRange,
    data: &Dataset,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_range.start < val_range.end && val_range.start < train_range.end && !val_range.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "training range {}..{} overlaps validation range {}..{}",
            train_range.start, train_range.end, val_range.start, val_range.end
        )));
    }
    let w = network.config().window_days;
    let weights = ClassWeights::minor(cfg.minor_class_weight)?;
    let train_rows = data.usable_days(train_range, w);
    let val_rows = data.usable_days(val_range, w);
    if train_rows.is_empty() {
        return Err(Error::InsufficientHistory(
            "no training day has both valid labels and a full window".into(),
        ));
    }
    let (h, c) = (data.heatmaps.n_rows, data.heatmaps.n_cols);

    let mut rng = ChaCha8Rng::seed_from_u64(network.config().seed);
    rng.set_stream(2);
    let mut opt = Adam::new(cfg.adam, network.params().iter().map(|p| p.value.len()));
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, u64, Network)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        let mut order = train_rows.clone();
        order.shuffle(&mut rng);
        if cfg.samples_per_epoch > 0 {
            order.truncate(cfg.samples_per_epoch);
        }
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (step, batch) in order.chunks(cfg.batch_days).enumerate() {
            let per_sample = batch
                .par_iter()
                .map(|&i| {
                    let maps = data.window_for(i, w)?;
                    network.loss_and_grad(&maps, h, c, data.labels.labels(i), data.labels.mask(i), data.prior, weights)
                })
                .collect::<Result<Vec<_>>>();
            let per_sample = match per_sample {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Divergence { epoch, step, loss: f64::NAN });
                }
                Err(e) => return Err(e),
            };
            let mut sum = 0.0;
            let mut weight = 0.0;
            let mut grads: Vec<Tensor> = network.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            for s in &per_sample {
                sum += s.sum;
                weight += s.weight;
                for (g, sg) in grads.iter_mut().zip(&s.grads) {
                    g.add_assign(sg);
                }
            }
            let loss = sum / weight;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            let scale = 1.0 / weight;
            let mut params = network.params_mut();
            for (p, g) in params.iter_mut().zip(grads) {
                p.grad = g.map(|v| v * scale);
            }
            opt.step(&mut params);
            loss_sum += loss;
            batches += 1;
        }

        let (val_roc_auc, val_pr_auc) = validation_metrics(&network, data, &val_rows)?;
        log.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_roc_auc,
            val_pr_auc,
        });
        // without a defined validation score the latest epoch is kept
        match &best {
            Some((b, ..)) if !val_pr_auc.is_nan() && val_pr_auc <= *b => since_best += 1,
            _ => {
                let score = if val_pr_auc.is_nan() { f64::NEG_INFINITY } else { val_pr_auc };
                best = Some((score, epoch, opt.steps(), network.clone()));
                since_best = 0;
            }
        }
        if cfg.patience > 0 && since_best >= cfg.patience {
            break;
        }
    }

    let (network, best_epoch, steps) = match best {
        Some((_, epoch, steps, net)) => (net, epoch, steps),
        None => (network, 0, 0),
    };
    Ok(TrainOutcome { network, log, best_epoch, steps })
}
