use flashcap_core::{
    assign, gate_costs, track_update, Assignment, ClusterSignature, CostMatrix, LedConfig, Pair, TrackState, TrackStatus,
};
use proptest::prelude::*;

fn arb_matrix(d_max: f64) -> impl Strategy<Value = CostMatrix> {
    (1usize..=6, 1usize..=6).prop_flat_map(move |(m, n)| {
        prop::collection::vec(prop_oneof![1 => Just(f64::INFINITY), 4 => (0u32..=300).prop_map(f64::from)], m * n)
            .prop_map(move |c| CostMatrix::new(m, n, c, d_max).unwrap())
    })
}

fn arb_sigs() -> impl Strategy<Value = (Vec<Option<ClusterSignature>>, Vec<LedConfig>)> {
    let sig = (80.0f64..320.0, 80.0f64..320.0, 200.0f64..600.0, 200.0f64..600.0)
        .prop_map(|(on, off, tp, tn)| ClusterSignature::new(on, off, tp, tn, 4));
    let led = (100u32..=300, 100u32..=300);
    (prop::collection::vec(prop::option::weighted(0.9, sig), 1..7), prop::collection::vec(led, 1..7)).prop_map(|(s, l)| {
        (s, l.into_iter().enumerate().map(|(i, (on, off))| LedConfig::new(format!("led{i}"), on, off)).collect())
    })
}

fn pairs(a: &Assignment) -> Vec<(usize, usize)> {
    a.pairs.iter().map(|p| (p.cluster, p.led)).collect()
}

/// Best total gain `Σ (d_max − cost)` by exhaustive search.
fn best_gain(cost: &CostMatrix, row: usize, used: &mut [bool]) -> f64 {
    if row == cost.rows() {
        return 0.0;
    }
    let mut best = best_gain(cost, row + 1, used);
    for col in 0..cost.cols() {
        if !used[col] && cost.is_admissible(row, col) {
            used[col] = true;
            best = best.max(cost.d_max - cost.get(row, col) + best_gain(cost, row + 1, used));
            used[col] = false;
        }
    }
    best
}

proptest! {
    #[test]
    fn assignment_is_injective_and_admissible(cost in arb_matrix(200.0)) {
        let a = assign(&cost);
        let mut rows: Vec<usize> = a.pairs.iter().map(|p| p.cluster).collect();
        let mut cols: Vec<usize> = a.pairs.iter().map(|p| p.led).collect();
        rows.dedup();
        cols.sort();
        cols.dedup();
        prop_assert_eq!(rows.len(), a.pairs.len());
        prop_assert_eq!(cols.len(), a.pairs.len());
        for p in &a.pairs {
            prop_assert!(cost.is_admissible(p.cluster, p.led));
            prop_assert!(p.cost <= cost.d_max);
        }
        prop_assert_eq!(a.pairs.len() + a.unmatched_clusters.len(), cost.rows());
        prop_assert_eq!(a.pairs.len() + a.unmatched_leds.len(), cost.cols());
    }

    #[test]
    fn assignment_is_optimal(cost in arb_matrix(200.0)) {
        let a = assign(&cost);
        let gain: f64 = a.pairs.iter().map(|p| cost.d_max - p.cost).sum();
        prop_assert!((gain - best_gain(&cost, 0, &mut vec![false; cost.cols()])).abs() < 1e-6);
    }

    #[test]
    fn weight_scaling_keeps_pairs((sigs, leds) in arb_sigs(), c in prop::sample::select(vec![0.25, 0.5, 2.0, 3.7, 10.0])) {
        let base = CostMatrix::from_signatures(&sigs, &leds, 1.0, 0.5, 200.0).unwrap();
        let scaled = CostMatrix::from_signatures(&sigs, &leds, c, 0.5 * c, 200.0 * c).unwrap();
        for i in 0..base.rows() {
            for j in 0..base.cols() {
                let (b, s) = (base.get(i, j), scaled.get(i, j));
                prop_assert!(b == s && b.is_infinite() || (s - c * b).abs() <= 1e-9 * s.max(1.0));
            }
        }
        prop_assert_eq!(pairs(&assign(&base)), pairs(&assign(&scaled)));
        let unbounded = |m: &CostMatrix| CostMatrix::new(m.rows(), m.cols(), (0..m.rows() * m.cols()).map(|k| m.get(k / m.cols(), k % m.cols())).collect(), f64::INFINITY).unwrap();
        prop_assert_eq!(pairs(&assign(&unbounded(&base))), pairs(&assign(&unbounded(&scaled))));
    }

    #[test]
    fn shrinking_the_gate_never_adds_pairs(cost in arb_matrix(300.0), lower in 0u32..300) {
        let tight = CostMatrix::new(cost.rows(), cost.cols(), (0..cost.rows() * cost.cols()).map(|k| cost.get(k / cost.cols(), k % cost.cols())).collect(), f64::from(lower)).unwrap();
        prop_assert!(assign(&tight).pairs.len() <= assign(&cost).pairs.len());
    }

    #[test]
    fn exact_signature_is_matched_at_zero_cost((_, leds) in arb_sigs(), pick in any::<prop::sample::Index>()) {
        let target = pick.index(leds.len());
        let unique = leds.iter().filter(|l| (l.on_time_us, l.off_time_us) == (leds[target].on_time_us, leds[target].off_time_us)).count() == 1;
        prop_assume!(unique);
        let sigs = vec![Some(ClusterSignature::nominal(&leds[target]))];
        let cost = CostMatrix::from_signatures(&sigs, &leds, 1.0, 0.5, 200.0).unwrap();
        prop_assert_eq!(cost.get(0, target), 0.0);
        let a = assign(&cost);
        prop_assert_eq!(a.pairs, vec![Pair { cluster: 0, led: target, cost: 0.0 }]);
    }

    #[test]
    fn coasting_iff_recently_seen(gap in 1u64..300_000) {
        let seen = Assignment { pairs: vec![Pair { cluster: 0, led: 0, cost: 0.0 }], ..Default::default() };
        let s = track_update(&TrackState::new(1, 100_000, 0.5), &seen, &[(5.0, 5.0)], 1_000);
        let s = track_update(&s, &Assignment::default(), &[], 1_000 + gap);
        let expected = if gap <= 100_000 { TrackStatus::Coasting } else { TrackStatus::Lost };
        prop_assert_eq!(s.leds[0].status, expected);
    }
}

#[test]
fn gating_examples() {
    let cost = CostMatrix::from_rows(&[vec![10.0]], 200.0).unwrap();
    let seen = Assignment { pairs: vec![Pair { cluster: 0, led: 0, cost: 0.0 }], ..Default::default() };
    let state = track_update(&TrackState::new(1, 100_000, 0.5), &seen, &[(0.0, 0.0)], 500);
    let far = gate_costs(&cost, &state, &[(200.0, 0.0)], 1_500, 50.0);
    assert!(!far.is_admissible(0, 0));
    let near = gate_costs(&cost, &state, &[(10.0, 0.0)], 1_500, 50.0);
    assert!(near.is_admissible(0, 0));
    let lost = TrackState::new(1, 100_000, 0.5);
    assert!(gate_costs(&cost, &lost, &[(200.0, 0.0)], 1_500, 50.0).is_admissible(0, 0));
}
