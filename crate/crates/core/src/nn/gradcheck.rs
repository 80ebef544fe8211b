use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Outcome of a central-difference gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the analytic gradient of `loss_and_grad` at `theta` with central
/// differences `(L(θ + h e_k) - L(θ - h e_k)) / 2h`.
///
/// At most `coords` coordinates are probed, drawn without replacement from a
/// generator seeded with `seed`; all of them when `theta` is shorter. The
/// relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
/// The closure is evaluated twice at `theta` first and must agree bit for bit.
pub fn finite_diff_check<F>(
    mut loss_and_grad: F,
    theta: &[f64],
    h: f64,
    coords: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {h}")));
    }
    let (l1, g1) = loss_and_grad(theta)?;
    let (l2, g2) = loss_and_grad(theta)?;
    if l1.to_bits() != l2.to_bits() || g1.iter().zip(&g2).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::NonDeterministic { first: l1, second: l2 });
    }
    if g1.len() != theta.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient has {} entries for {} parameters",
            g1.len(),
            theta.len()
        )));
    }

    let picked: Vec<usize> = if theta.len() <= coords {
        (0..theta.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, theta.len(), coords).into_vec();
        v.sort_unstable();
        v
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: picked.first().copied().unwrap_or(0),
        analytic: 0.0,
        numeric: 0.0,
        checked: picked.len(),
    };
    let mut probe = theta.to_vec();
    for &k in &picked {
        let orig = probe[k];
        probe[k] = orig + h;
        let (up, _) = loss_and_grad(&probe)?;
        probe[k] = orig - h;
        let (down, _) = loss_and_grad(&probe)?;
        probe[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = g1[k];
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic - numeric).abs() / denom;
        if rel > report.max_rel_error || !rel.is_finite() {
            report.max_rel_error = rel;
            report.worst_index = k;
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn quadratic_is_exact() {
        let theta: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin()).collect();
        let r = finite_diff_check(
            |t| Ok((t.iter().map(|v| v * v).sum(), t.iter().map(|v| 2.0 * v).collect())),
            &theta,
            1e-3,
            250,
            1,
        )
        .unwrap();
        // central differences are exact on quadratics, leaving only roundoff
        assert_eq!(r.checked, 250);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn zero_loss_has_zero_error() {
        let theta = vec![1.0; 10];
        let r = finite_diff_check(|t| Ok((0.0, vec![0.0; t.len()])), &theta, 1e-5, 200, 0).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.checked, 10);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let theta = vec![0.5, -1.0];
        let r = finite_diff_check(|t| Ok((t[0] * t[1], vec![t[1], 0.0])), &theta, 1e-5, 200, 0).unwrap();
        assert!(r.max_rel_error > 0.5);
        assert_eq!(r.worst_index, 1);
    }

    #[test]
    fn non_deterministic_closure_is_detected() {
        let calls = Cell::new(0u32);
        let err = finite_diff_check(
            |t| {
                calls.set(calls.get() + 1);
                Ok((calls.get() as f64, vec![0.0; t.len()]))
            },
            &[1.0],
            1e-5,
            200,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministic { .. }));
    }
}
