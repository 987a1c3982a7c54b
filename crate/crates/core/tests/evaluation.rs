use proptest::prelude::*;

use ctxmon_core::constraints::ParameterId;
use ctxmon_core::eval::{classify_trial, evaluate_campaign, jaccard_similarity, Outcome};
use ctxmon_core::monitor::Alert;
use ctxmon_core::trajectory::SubtaskId;

fn labels(v: &[u8]) -> Vec<SubtaskId> {
    v.iter().map(|&i| SubtaskId::new(i).unwrap()).collect()
}

fn alert(t_ns: i64) -> Alert {
    Alert { t_ns, sample: 0, subtask: SubtaskId::START, parameter: ParameterId::X, value: 0.0, bound: 0.0, margin: 0.0 }
}

fn trial() -> impl Strategy<Value = (Vec<Alert>, Option<i64>)> {
    (
        prop::collection::vec(0i64..100_000_000_000, 0..5).prop_map(|v| v.into_iter().map(alert).collect()),
        prop::option::of(0i64..100_000_000_000),
    )
}

proptest! {
    #[test]
    fn jaccard_is_symmetric(pair in prop::collection::vec((0u8..7, 0u8..7), 1..300)) {
        let a = labels(&pair.iter().map(|p| p.0).collect::<Vec<_>>());
        let b = labels(&pair.iter().map(|p| p.1).collect::<Vec<_>>());
        let (ab, ba) = (jaccard_similarity(&a, &b).unwrap(), jaccard_similarity(&b, &a).unwrap());
        prop_assert_eq!(&ab.per_subtask, &ba.per_subtask);
        // The mean averages over subtasks present in the second argument, so
        // it is symmetric when both sequences use the same subtasks.
        let set = |v: &[SubtaskId]| v.iter().copied().collect::<std::collections::BTreeSet<_>>();
        if set(&a) == set(&b) {
            prop_assert_eq!(ab.mean, ba.mean);
        }
    }

    #[test]
    fn jaccard_mean_symmetric_on_full_labelings(cuts_a in prop::collection::btree_set(1usize..999, 6), cuts_b in prop::collection::btree_set(1usize..999, 6)) {
        let expand = |cuts: &std::collections::BTreeSet<usize>| -> Vec<SubtaskId> {
            (0..1000).map(|i| SubtaskId::new(cuts.iter().filter(|&&c| c <= i).count() as u8).unwrap()).collect()
        };
        let (a, b) = (expand(&cuts_a), expand(&cuts_b));
        prop_assert_eq!(jaccard_similarity(&a, &b).unwrap(), jaccard_similarity(&b, &a).unwrap());
    }

    #[test]
    fn jaccard_is_one_exactly_for_identical(a in prop::collection::vec(0u8..7, 1..300), flip in 0usize..300, to in 0u8..7) {
        let a = labels(&a);
        prop_assert_eq!(jaccard_similarity(&a, &a).unwrap().mean, 1.0);
        let mut b = a.clone();
        let i = flip % b.len();
        b[i] = SubtaskId::new(to).unwrap();
        prop_assert_eq!(jaccard_similarity(&a, &b).unwrap().mean == 1.0, a == b);
    }

    #[test]
    fn confusion_partitions_trials(trials in prop::collection::vec(trial(), 0..40), window in 0.5f64..60.0) {
        let t = evaluate_campaign(&trials, window);
        prop_assert_eq!(t.n_trials(), trials.len());
        for (a, f) in &trials {
            let o = classify_trial(a, *f, window);
            if o.class == Outcome::TruePositive {
                prop_assert!(o.time_to_react_s.unwrap() > 0.0);
            }
        }
        if let Some(m) = t.mean_time_to_react_s {
            prop_assert!(m > 0.0 && m <= window);
        }
    }
}
