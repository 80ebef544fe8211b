//! Imbalance-aware evaluation metrics.
//!
//! All metrics operate on pooled [`ScoredSample`]s, one per valid
//! (reference day, cell) pair. ROC AUC is the Mann-Whitney statistic with
//! midranks for ties; PR AUC is average precision with tied scores processed
//! as one block. Alarms fire on `score > threshold`, the same strict rule as
//! [`crate::prior::alarm`].

use std::cmp::Ordering;
use std::io::Write;

use crate::catalog::LabelTensor;
use crate::error::{Error, Result};

/// Thresholds reported by default.
pub const DEFAULT_THRESHOLDS: [f64; 6] = [0.0001, 0.1, 0.3, 0.5, 0.9, 0.99];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    pub label: bool,
}

impl ScoredSample {
    pub fn new(score: f64, label: bool) -> Self {
        ScoredSample { score, label }
    }
}

/// Confusion counts at one threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub counts: Confusion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub rows: Vec<SweepRow>,
    pub positives: usize,
    pub negatives: usize,
}

fn check_finite(samples: &[ScoredSample]) -> Result<()> {
    match samples.iter().position(|s| !s.score.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("score of sample {i}"))),
        None => Ok(()),
    }
}

fn class_counts(samples: &[ScoredSample]) -> (usize, usize) {
    let pos = samples.iter().filter(|s| s.label).count();
    (pos, samples.len() - pos)
}

fn by_score(a: &ScoredSample, b: &ScoredSample) -> Ordering {
    a.score.partial_cmp(&b.score).unwrap()
}

/// Area under the ROC curve: `P(score+ > score-) + P(tie)/2`.
pub fn roc_auc(samples: &[ScoredSample]) -> Result<f64> {
    check_finite(samples)?;
    let (pos, neg) = class_counts(samples);
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(format!(
            "ROC AUC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(by_score);

    // Sum of doubled midranks of the positives keeps everything integral.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        let block_pos = sorted[i..j].iter().filter(|s| s.label).count() as u128;
        // ranks i+1 ..= j, doubled average = i + 1 + j
        doubled_rank_sum += block_pos * (i + 1 + j) as u128;
        i = j;
    }
    let (p, n) = (pos as u128, neg as u128);
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2 * p * n) as f64)
}

/// Average precision: sum over score blocks of `ΔRecall * Precision`.
pub fn pr_auc(samples: &[ScoredSample]) -> Result<f64> {
    check_finite(samples)?;
    let (pos, _) = class_counts(samples);
    if pos == 0 {
        return Err(Error::InvalidArgument("PR AUC needs at least one positive".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| by_score(b, a));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut acc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        let block_pos = sorted[i..j].iter().filter(|s| s.label).count();
        tp += block_pos;
        fp += (j - i) - block_pos;
        if block_pos > 0 {
            acc += block_pos as f64 * (tp as f64 / (tp + fp) as f64);
        }
        i = j;
    }
    Ok(acc / pos as f64)
}

/// Confusion counts for alarms `score > threshold`.
pub fn confusion_at(samples: &[ScoredSample], threshold: f64) -> Confusion {
    let mut c = Confusion { tp: 0, fn_: 0, fp: 0, tn: 0 };
    for s in samples {
        match (s.score > threshold, s.label) {
            (true, true) => c.tp += 1,
            (false, true) => c.fn_ += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Confusion counts at each threshold, which must be ascending.
pub fn threshold_sweep(samples: &[ScoredSample], thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) || thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::InvalidArgument(format!("thresholds must be sorted ascending: {thresholds:?}")));
    }
    let mut pos: Vec<f64> = samples.iter().filter(|s| s.label).map(|s| s.score).collect();
    let mut neg: Vec<f64> = samples.iter().filter(|s| !s.label).map(|s| s.score).collect();
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let above = |sorted: &[f64], t: f64| sorted.len() - sorted.partition_point(|s| *s <= t);

    Ok(thresholds
        .iter()
        .map(|&t| {
            let tp = above(&pos, t);
            let fp = above(&neg, t);
            SweepRow {
                threshold: t,
                counts: Confusion {
                    tp,
                    fn_: pos.len() - tp,
                    fp,
                    tn: neg.len() - fp,
                },
            }
        })
        .collect())
}

/// Full report: both AUCs plus a threshold sweep.
pub fn evaluate(samples: &[ScoredSample], thresholds: &[f64]) -> Result<MetricsReport> {
    let (positives, negatives) = class_counts(samples);
    Ok(MetricsReport {
        roc_auc: roc_auc(samples)?,
        pr_auc: pr_auc(samples)?,
        rows: threshold_sweep(samples, thresholds)?,
        positives,
        negatives,
    })
}

/// Pools per-day probability maps against labels, keeping valid cells only.
/// `scores[i]` is the map for `labels.reference_days[i]`.
pub fn pool_samples(scores: &[Vec<f64>], labels: &LabelTensor) -> Result<Vec<ScoredSample>> {
    if scores.len() != labels.days() {
        return Err(Error::ShapeMismatch(format!(
            "{} score maps for {} label days",
            scores.len(),
            labels.days()
        )));
    }
    let mut out = Vec::new();
    for (i, map) in scores.iter().enumerate() {
        if map.len() != labels.cells() {
            return Err(Error::ShapeMismatch(format!("score map {i} has {} cells", map.len())));
        }
        for ((&s, &y), &m) in map.iter().zip(labels.labels(i)).zip(labels.mask(i)) {
            if m == 1 {
                out.push(ScoredSample::new(s, y == 1));
            }
        }
    }
    Ok(out)
}

/// Writes `method,roc_auc,pr_auc,positives,negatives` rows.
pub fn write_metrics_csv<W: Write>(out: W, reports: &[(&str, &MetricsReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "roc_auc", "pr_auc", "positives", "negatives"])?;
    for (name, r) in reports {
        w.write_record([
            name.to_string(),
            r.roc_auc.to_string(),
            r.pr_auc.to_string(),
            r.positives.to_string(),
            r.negatives.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `threshold,tp,fn,fp,tn` rows.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "tp", "fn", "fp", "tn"])?;
    for r in rows {
        let c = r.counts;
        w.write_record([
            r.threshold.to_string(),
            c.tp.to_string(),
            c.fn_.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
