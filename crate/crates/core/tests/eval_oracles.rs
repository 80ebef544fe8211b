use proptest::prelude::*;
use quake_core::eval::{confusion_at, evaluate, pr_auc, roc_auc, threshold_sweep, ScoredSample, DEFAULT_THRESHOLDS};

/// Both classes present, scores drawn from `levels` distinct values so ties
/// are frequent when `levels` is small.
fn instance() -> impl Strategy<Value = Vec<ScoredSample>> {
    (2usize..=500, 1u32..=40).prop_flat_map(|(n, levels)| {
        prop::collection::vec((0..levels, any::<bool>()), n).prop_filter_map("needs both classes", move |raw| {
            let s: Vec<ScoredSample> = raw
                .into_iter()
                .map(|(k, y)| ScoredSample::new(k as f64 / levels as f64, y))
                .collect();
            let pos = s.iter().filter(|x| x.label).count();
            (pos > 0 && pos < s.len()).then_some(s)
        })
    })
}

fn pairwise_roc(s: &[ScoredSample]) -> f64 {
    let (mut doubled, mut pairs) = (0u64, 0u64);
    for a in s.iter().filter(|x| x.label) {
        for b in s.iter().filter(|x| !x.label) {
            pairs += 1;
            doubled += if a.score > b.score {
                2
            } else if a.score == b.score {
                1
            } else {
                0
            };
        }
    }
    doubled as f64 / (2 * pairs) as f64
}

/// Precision and recall recomputed from scratch at every distinct score cut.
fn all_cuts_ap(s: &[ScoredSample]) -> f64 {
    let mut cuts: Vec<f64> = s.iter().map(|x| x.score).collect();
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();
    let pos = s.iter().filter(|x| x.label).count();
    let (mut acc, mut prev_tp) = (0.0, 0usize);
    for cut in cuts {
        let tp = s.iter().filter(|x| x.label && x.score >= cut).count();
        let fp = s.iter().filter(|x| !x.label && x.score >= cut).count();
        if tp > prev_tp {
            acc += (tp - prev_tp) as f64 * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    acc / pos as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn roc_auc_equals_pairwise_concordance(s in instance()) {
        prop_assert_eq!(roc_auc(&s).unwrap(), pairwise_roc(&s));
    }

    #[test]
    fn pr_auc_equals_all_cuts_average_precision(s in instance()) {
        prop_assert_eq!(pr_auc(&s).unwrap(), all_cuts_ap(&s));
    }

    #[test]
    fn sweep_is_monotone_and_partitions(s in instance(), mut t in prop::collection::vec(-0.1f64..1.1, 1..20)) {
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rows = threshold_sweep(&s, &t).unwrap();
        prop_assert_eq!(rows.len(), t.len());
        let pos = s.iter().filter(|x| x.label).count();
        for r in &rows {
            let c = r.counts;
            prop_assert_eq!(c.tp + c.fn_, pos);
            prop_assert_eq!(c.fp + c.tn, s.len() - pos);
            prop_assert_eq!(c, confusion_at(&s, r.threshold));
        }
        for w in rows.windows(2) {
            prop_assert!(w[1].counts.fp <= w[0].counts.fp);
            prop_assert!(w[1].counts.fn_ >= w[0].counts.fn_);
        }
    }

    #[test]
    fn aucs_invariant_under_increasing_transform(s in instance()) {
        let t: Vec<ScoredSample> = s.iter().map(|x| ScoredSample::new((3.0 * x.score).exp() - 7.0, x.label)).collect();
        prop_assert_eq!(roc_auc(&t).unwrap(), roc_auc(&s).unwrap());
        prop_assert_eq!(pr_auc(&t).unwrap(), pr_auc(&s).unwrap());
    }

    #[test]
    fn flipping_labels_and_negating_scores_preserves_roc(s in instance()) {
        let f: Vec<ScoredSample> = s.iter().map(|x| ScoredSample::new(-x.score, !x.label)).collect();
        prop_assert_eq!(roc_auc(&f).unwrap(), roc_auc(&s).unwrap());
    }
}

#[test]
fn report_carries_default_sweep() {
    let s: Vec<ScoredSample> = (0..50).map(|i| ScoredSample::new(i as f64 / 50.0, i % 7 == 0)).collect();
    let r = evaluate(&s, &DEFAULT_THRESHOLDS).unwrap();
    assert_eq!(r.rows.len(), DEFAULT_THRESHOLDS.len());
    assert_eq!(r.positives + r.negatives, 50);
    assert!(threshold_sweep(&s, &[0.5, 0.1]).is_err());
}
