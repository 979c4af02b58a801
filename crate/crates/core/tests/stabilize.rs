mod common;

use common::*;
use kfssi::identify::{merge, stack_lq, ModalEstimate, OrderEstimates};
use kfssi::signal::HankelPair;
use kfssi::stabilize::{
    auto_interpret, cluster_freqs, leave_one_out_factors, loo_aggregate, order_sweep, BoxStats, InterpretParams,
    InterpretationResult, StabilityTolerances, StabilizationDiagram,
};
use kfssi::Error;
use proptest::prelude::*;

fn diagram(rows: Vec<(usize, Vec<(f64, f64)>)>) -> StabilizationDiagram {
    let rows = rows
        .into_iter()
        .map(|(order, m)| OrderEstimates {
            order,
            modes: m.into_iter().map(|(f, d)| est(order, f, d)).collect(),
            error: None,
        })
        .collect();
    StabilizationDiagram::from_estimates(rows, StabilityTolerances::default()).unwrap()
}

fn result(modes: &[(f64, f64)]) -> InterpretationResult {
    InterpretationResult {
        selected_order: 6,
        modes: modes.iter().map(|&(f, d)| est(6, f, d)).collect(),
        unique_freqs: modes.iter().map(|m| m.0).collect(),
        occurrence_counts: vec![3; modes.len()],
    }
}

#[test]
fn stability_flags_compare_with_the_previous_order() {
    let d = diagram(vec![
        (2, vec![(2.0, 1.0)]),
        (4, vec![(2.01, 1.5), (6.0, 2.0)]),
        (6, vec![(2.1, 1.5), (6.02, 8.0)]),
    ]);
    assert_eq!(d.stable_flags, [None, Some(true), Some(false), Some(false), Some(false)]);
    assert_eq!(
        d.to_csv(),
        "order,frequency,damping_pct,stable_flag\n2,2,1,\n4,2.01,1.5,1\n4,6,2,0\n6,2.1,1.5,0\n6,6.02,8,0\n"
    );
}

#[test]
fn orders_must_be_even_and_increasing() {
    let row = |order| OrderEstimates {
        order,
        modes: vec![],
        error: None,
    };
    let tol = StabilityTolerances::default();
    assert!(StabilizationDiagram::from_estimates(vec![row(2), row(5)], tol).is_err());
    assert!(StabilizationDiagram::from_estimates(vec![row(4), row(2)], tol).is_err());
}

#[test]
fn failing_order_leaves_an_empty_row() {
    let d = order_sweep(&[2, 4, 6], StabilityTolerances::default(), |o| {
        if o == 4 {
            Err(Error::OrderExceedsRank { order: 4, rank: 2 })
        } else {
            Ok(vec![est(o, 3.0, 1.0)])
        }
    })
    .unwrap();
    assert_eq!(d.at_order(4).count(), 0);
    assert_eq!(d.failures.len(), 1);
    assert_eq!(d.failures[0].0, 4);
    assert_eq!(d.entries.len(), 2);
}

#[test]
fn scattered_poles_have_no_persistent_mode() {
    // every neighbour is 5 % away, beyond the 2 % tolerance
    let rows = (1..=10)
        .map(|i| (2 * i, (0..3).map(|j| (1.05f64.powi((3 * i + j) as i32), 1.0)).collect()))
        .collect();
    assert!(matches!(
        auto_interpret(&diagram(rows), &InterpretParams::default()),
        Err(Error::NoPersistentModes)
    ));
}

#[test]
fn spurious_damping_is_dropped_before_clustering() {
    let rows = (1..=5).map(|i| (2 * i, vec![(2.0, 1.0), (4.0, 35.0), (7.0, -3.0)])).collect();
    let r = auto_interpret(&diagram(rows), &InterpretParams::default()).unwrap();
    assert_eq!(r.unique_freqs, [2.0]);
    assert_eq!(r.selected_order, 2);
}

#[test]
fn box_stats_match_linear_interpolation() {
    let b = BoxStats::from_values(&[4.0, 1.0, 3.0, 2.0]).unwrap();
    assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (1.0, 1.75, 2.5, 3.25, 4.0));
    assert_eq!(b.iqr(), 1.5);
    assert!(BoxStats::from_values(&[]).is_none());
}

#[test]
fn identical_results_have_zero_spread() {
    let runs: Vec<InterpretationResult> = (0..5).map(|_| result(&[(2.24, 1.4), (6.3, 3.9)])).collect();
    let s = loo_aggregate(&runs).unwrap();
    assert_eq!(s.modes.len(), 2);
    for m in &s.modes {
        assert_eq!(m.frequency.iqr(), 0.0);
        assert_eq!(m.damping_pct.iqr(), 0.0);
        assert_eq!(m.excluded, 0);
    }
}

#[test]
fn one_outlier_keeps_the_median() {
    let freqs = [2.20, 2.21, 2.22, 2.23, 2.24];
    let base: Vec<InterpretationResult> = freqs.iter().map(|f| result(&[(*f, 1.0)])).collect();
    let mut bumped = base.clone();
    bumped[4] = result(&[(2.30, 9.0)]);
    let a = loo_aggregate(&base).unwrap();
    let b = loo_aggregate(&bumped).unwrap();
    assert_eq!(a.modes[0].frequency.median, b.modes[0].frequency.median);
    assert_eq!(a.modes[0].damping_pct.median, b.modes[0].damping_pct.median);
}

#[test]
fn rare_modes_are_unmatched() {
    let mut runs: Vec<InterpretationResult> = (0..4).map(|_| result(&[(2.0, 1.0)])).collect();
    runs.push(result(&[(2.0, 1.0), (8.0, 2.0)]));
    let s = loo_aggregate(&runs).unwrap();
    assert_eq!(s.modes.len(), 1);
    assert_eq!(s.unmatched, [8.0]);
    assert!(loo_aggregate(&runs[..2]).is_err());
}

#[test]
fn leave_one_out_merges_the_rest() {
    let mut rng = rng(31);
    let factors: Vec<_> = (0..4)
        .map(|_| {
            let p = HankelPair::from_matrices(gaussian(&mut rng, 3, 20), gaussian(&mut rng, 3, 20), 3, 1, 25.0).unwrap();
            stack_lq(&p).unwrap()
        })
        .collect();
    let loo = leave_one_out_factors(&factors).unwrap();
    assert_eq!(loo.len(), 4);
    let expect = merge(&[&factors[0], &factors[2], &factors[3]]).unwrap();
    assert!((loo[1].l() - expect.l()).amax() < 1e-12);
    assert!(leave_one_out_factors(&factors[..2]).is_err());
}

fn random_diagram(seed: u64) -> StabilizationDiagram {
    use rand::Rng;
    let mut rng = rng(seed);
    let rows = (1..=8)
        .map(|i| {
            let n = rng.random_range(0..5);
            (2 * i, (0..n).map(|_| (rng.random_range(1.0..3.0), rng.random_range(0.0..10.0))).collect())
        })
        .collect();
    diagram(rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn clusters_partition_the_input(freqs in prop::collection::vec(0.1f64..20.0, 0..60), tol in 0.001f64..0.1) {
        let clusters = cluster_freqs(&freqs, tol);
        let mut seen: Vec<usize> = clusters.iter().flat_map(|c| c.members.clone()).collect();
        seen.sort();
        prop_assert_eq!(seen, (0..freqs.len()).collect::<Vec<_>>());
        for c in &clusters {
            for w in c.members.windows(2) {
                let (a, b) = (freqs[w[0]], freqs[w[1]]);
                prop_assert!(a <= b && b - a <= tol * a);
            }
        }
        for w in clusters.windows(2) {
            let last = freqs[*w[0].members.last().unwrap()];
            let first = freqs[w[1].members[0]];
            prop_assert!(first - last > tol * last);
        }
    }

    #[test]
    fn lower_n_min_never_loses_clusters(seed in any::<u64>(), n_min in 2usize..6) {
        let d = random_diagram(seed);
        let strict = InterpretParams { n_min, ..Default::default() };
        let loose = InterpretParams { n_min: n_min - 1, ..Default::default() };
        if let Ok(s) = auto_interpret(&d, &strict) {
            let l = auto_interpret(&d, &loose).unwrap();
            prop_assert!(l.modes.len() >= s.modes.len());
            prop_assert!(l.unique_freqs.len() >= s.unique_freqs.len());
        }
    }

    #[test]
    fn box_stats_ignore_order(mut v in prop::collection::vec(-100.0f64..100.0, 1..40), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let a = BoxStats::from_values(&v).unwrap();
        v.shuffle(&mut rng(seed));
        prop_assert_eq!(a, BoxStats::from_values(&v).unwrap());
        prop_assert!(a.min <= a.q1 && a.q1 <= a.median && a.median <= a.q3 && a.q3 <= a.max);
    }
}

#[test]
fn interpretation_ignores_entry_order() {
    use rand::seq::SliceRandom;
    for seed in 0..20 {
        let d = random_diagram(seed);
        let mut shuffled = d.clone();
        for order in d.orders.clone() {
            let idx: Vec<usize> = (0..shuffled.entries.len()).filter(|&i| shuffled.entries[i].order == order).collect();
            let mut block: Vec<ModalEstimate> = idx.iter().map(|&i| shuffled.entries[i].clone()).collect();
            block.shuffle(&mut rng(seed + 100));
            for (i, e) in idx.into_iter().zip(block) {
                shuffled.entries[i] = e;
            }
        }
        let p = InterpretParams { n_min: 2, ..Default::default() };
        assert_eq!(auto_interpret(&d, &p).ok(), auto_interpret(&shuffled, &p).ok());
    }
}
