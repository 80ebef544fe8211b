use proptest::prelude::*;
use quake_core::prior::{combine_residual, prior_logits, softmax2, PriorMap, PriorMode};

fn prior_map() -> impl Strategy<Value = PriorMap> {
    (1usize..5, 1usize..5, 0.01f64..5.0).prop_flat_map(|(r, c, alpha)| {
        prop::collection::vec((0u64..1000, 0u64..1000), r * c).prop_map(move |kn| {
            let (k, n): (Vec<u64>, Vec<u64>) = kn.into_iter().map(|(a, b)| (a.min(b), a.max(b))).unzip();
            PriorMap::from_counts(r, c, k, n, alpha).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn zero_residual_recovers_prior(prior in prior_map(), c in -50.0f64..50.0) {
        let logits = prior_logits(&prior, c, PriorMode::Additive);
        let p = combine_residual(&logits, &vec![0.0; 2 * prior.cells()]).unwrap();
        for (a, b) in p.iter().zip(&prior.p) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn fitted_probabilities_are_interior(prior in prior_map()) {
        prop_assert!(prior.p.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn common_shift_leaves_prediction(prior in prior_map(), shift in -30.0f64..30.0, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cells = prior.cells();
        let logits = prior_logits(&prior, 0.0, PriorMode::Additive);
        let delta: Vec<f64> = (0..2 * cells).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut moved = delta.clone();
        for j in 0..cells {
            moved[j] += shift;
            moved[cells + j] += shift;
        }
        let a = combine_residual(&logits, &delta).unwrap();
        let b = combine_residual(&logits, &moved).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    // outside roughly ±35 the probability saturates to 0 or 1 in f64
    #[test]
    fn event_logit_is_monotone(no in -10.0f64..10.0, yes in -10.0f64..10.0, step in 1e-3f64..5.0) {
        prop_assert!(softmax2(no, yes + step) > softmax2(no, yes));
    }
}
