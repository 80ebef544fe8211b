use crate::error::{Error, Result};

use super::Tensor;

/// Per-class sample weights; `event` is the minority (earthquake) class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassWeights {
    pub no_event: f64,
    pub event: f64,
}

impl ClassWeights {
    pub fn new(no_event: f64, event: f64) -> Result<Self> {
        if !(no_event > 0.0 && event > 0.0 && no_event.is_finite() && event.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "class weights must be positive, got ({no_event}, {event})"
            )));
        }
        Ok(ClassWeights { no_event, event })
    }

    /// Major class fixed at 1.
    pub fn minor(event: f64) -> Result<Self> {
        ClassWeights::new(1.0, event)
    }

    pub fn of(&self, label: u8) -> f64 {
        if label == 1 {
            self.event
        } else {
            self.no_event
        }
    }
}

/// Unnormalized weighted negative log-likelihood over one map.
#[derive(Clone, Debug)]
pub struct WeightedNll {
    /// `Σ_valid w_y · (-log softmax(z)_y)`
    pub sum: f64,
    /// `Σ_valid w_y`
    pub weight: f64,
    /// Gradient of `sum` with respect to the logits.
    pub grad: Tensor,
}

fn check_logits(logits: &Tensor, labels: &[u8], mask: &[u8]) -> Result<usize> {
    if logits.shape().len() != 3 || logits.dim(0) != 2 {
        return Err(Error::ShapeMismatch(format!("logits must be [2, H, W], got {:?}", logits.shape())));
    }
    let cells = logits.dim(1) * logits.dim(2);
    if labels.len() != cells || mask.len() != cells {
        return Err(Error::ShapeMismatch(format!(
            "{} labels / {} mask entries for {cells} cells",
            labels.len(),
            mask.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    Ok(cells)
}

/// Weighted NLL of class-major two-channel logits, without normalization.
pub fn weighted_nll(logits: &Tensor, labels: &[u8], mask: &[u8], weights: ClassWeights) -> Result<WeightedNll> {
    let cells = check_logits(logits, labels, mask)?;
    let z = logits.data();
    let mut grad = Tensor::zeros(logits.shape());
    let g = grad.data_mut();
    let (mut sum, mut weight) = (0.0, 0.0);
    for j in 0..cells {
        if mask[j] != 1 {
            continue;
        }
        let (z0, z1) = (z[j], z[cells + j]);
        let m = z0.max(z1);
        let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
        let lse = m + (e0 + e1).ln();
        let (s0, s1) = (e0 / (e0 + e1), e1 / (e0 + e1));
        let y = labels[j];
        let w = weights.of(y);
        let zy = if y == 1 { z1 } else { z0 };
        sum += w * (lse - zy);
        weight += w;
        g[j] = w * (s0 - if y == 0 { 1.0 } else { 0.0 });
        g[cells + j] = w * (s1 - if y == 1 { 1.0 } else { 0.0 });
    }
    Ok(WeightedNll { sum, weight, grad })
}

/// Weighted softmax cross-entropy normalized by the total sample weight:
/// `Σ w_y (-log softmax(z)_y) / Σ w_y` over valid cells, with its exact
/// gradient.
pub fn weighted_softmax_ce(
    logits: &Tensor,
    labels: &[u8],
    mask: &[u8],
    weights: ClassWeights,
) -> Result<(f64, Tensor)> {
    let nll = weighted_nll(logits, labels, mask, weights)?;
    if nll.weight == 0.0 {
        return Err(Error::InvalidArgument("every cell is masked out".into()));
    }
    let scale = 1.0 / nll.weight;
    Ok((nll.sum * scale, nll.grad.map(|v| v * scale)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_cost_log_two() {
        let z = Tensor::full(&[2, 2, 2], 0.3);
        let (loss, _) = weighted_softmax_ce(&z, &[0, 1, 1, 0], &[1; 4], ClassWeights::minor(1.0).unwrap()).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn minor_weight_enters_normalizer() {
        let z = Tensor::zeros(&[2, 1, 2]);
        let w = ClassWeights::minor(1000.0).unwrap();
        let nll = weighted_nll(&z, &[1, 0], &[1, 1], w).unwrap();
        assert_eq!(nll.weight, 1001.0);
        // the positive cell's gradient is 1000x the negative cell's
        assert!((nll.grad.data()[0] / nll.grad.data()[1] + 1000.0).abs() < 1e-9);
        assert!((nll.sum - 1001.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn masked_cells_are_ignored() {
        let z = Tensor::from_vec(&[2, 1, 2], vec![5.0, -1.0, -5.0, 2.0]).unwrap();
        let w = ClassWeights::minor(3.0).unwrap();
        let (a, ga) = weighted_softmax_ce(&z, &[1, 0], &[0, 1], w).unwrap();
        let (b, _) = weighted_softmax_ce(&z, &[0, 0], &[0, 1], w).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga.data()[0], 0.0);
        assert_eq!(ga.data()[2], 0.0);
    }

    #[test]
    fn all_masked_is_an_error() {
        let z = Tensor::zeros(&[2, 1, 1]);
        assert!(weighted_softmax_ce(&z, &[1], &[0], ClassWeights::minor(1.0).unwrap()).is_err());
        assert!(ClassWeights::new(0.0, 1.0).is_err());
    }

    #[test]
    fn saturated_correct_prediction_costs_nothing() {
        let z = Tensor::from_vec(&[2, 1, 2], vec![-400.0, 400.0, 400.0, -400.0]).unwrap();
        let (loss, _) = weighted_softmax_ce(&z, &[1, 0], &[1, 1], ClassWeights::minor(10.0).unwrap()).unwrap();
        assert_eq!(loss, 0.0);
        let (loss, _) = weighted_softmax_ce(&z, &[0, 1], &[1, 1], ClassWeights::minor(10.0).unwrap()).unwrap();
        assert!(loss > 700.0 && loss.is_finite());
    }
}
