use flashcap_core::timing::Sample;
use flashcap_core::{detect_crossing, precision_recall, GroundTruthLabels, Joint, LabelSet, LineSpec, Source, TruthPoint};
use proptest::prelude::*;

const IDS: [&str; 3] = ["a", "b", "c"];

fn arb_truth() -> impl Strategy<Value = GroundTruthLabels> {
    prop::collection::vec(prop::collection::vec((0.0f64..50.0, 0.0f64..50.0, prop::bool::weighted(0.85)), 3), 1..30).prop_map(
        |ticks| GroundTruthLabels {
            led_ids: IDS.iter().map(|s| s.to_string()).collect(),
            led_hash: String::new(),
            t0_ms: 10,
            ticks: ticks.into_iter().map(|row| row.into_iter().map(|(x, y, visible)| TruthPoint { x, y, visible }).collect()).collect(),
        },
    )
}

/// Predictions near the truth, with some labels dropped, moved, or swapped.
fn arb_case() -> impl Strategy<Value = (GroundTruthLabels, LabelSet)> {
    arb_truth().prop_flat_map(|gt| {
        let n = gt.ticks.len() * 3;
        (Just(gt), prop::collection::vec((0u8..6, -2.0f64..2.0, -2.0f64..2.0), n)).prop_map(|(gt, edits)| {
            let mut pred = LabelSet::empty(gt.led_ids.clone(), String::new(), String::new(), gt.t0_ms, gt.ticks.len());
            for (k, (frame, row)) in pred.frames.iter_mut().zip(&gt.ticks).enumerate() {
                for (i, id) in IDS.iter().enumerate() {
                    let (op, dx, dy) = edits[k * 3 + i];
                    let src = match op {
                        0 => continue,
                        1 => row[(i + 1) % 3],
                        _ => row[i],
                    };
                    frame.joints.insert(id.to_string(), Joint { x: src.x + dx * f64::from(op == 2), y: src.y + dy * f64::from(op == 2), source: Source::Auto });
                }
            }
            (gt, pred)
        })
    })
}

fn relabel(gt: &GroundTruthLabels, pred: &LabelSet, perm: &[usize; 3]) -> (GroundTruthLabels, LabelSet) {
    let name = |id: &str| IDS[perm[IDS.iter().position(|s| *s == id).unwrap()]].to_string();
    let mut g = gt.clone();
    for row in &mut g.ticks {
        let old = row.clone();
        for i in 0..3 {
            row[perm[i]] = old[i];
        }
    }
    let mut p = pred.clone();
    for f in &mut p.frames {
        f.joints = f.joints.iter().map(|(k, v)| (name(k), *v)).collect();
    }
    (g, p)
}

proptest! {
    #[test]
    fn relabeling_keeps_aggregates((gt, pred) in arb_case(), perm in Just([0usize, 1, 2]).prop_shuffle(), tol in 0.1f64..3.0) {
        let (g2, p2) = relabel(&gt, &pred, &perm);
        let a = precision_recall(&pred, &gt, tol).unwrap();
        let b = precision_recall(&p2, &g2, tol).unwrap();
        prop_assert_eq!((a.tp, a.fp, a.fn_, a.detected), (b.tp, b.fp, b.fn_, b.detected));
        prop_assert_eq!(a.precision, b.precision);
        prop_assert_eq!(a.recall, b.recall);
    }

    #[test]
    fn wider_tolerance_never_loses_true_positives((gt, pred) in arb_case(), tol in 0.0f64..3.0, extra in 0.0f64..3.0) {
        let a = precision_recall(&pred, &gt, tol).unwrap();
        let b = precision_recall(&pred, &gt, tol + extra).unwrap();
        prop_assert!(b.tp >= a.tp);
        prop_assert!(b.detected >= a.detected);
        prop_assert_eq!(a.tp + a.fp, b.tp + b.fp);
    }

    #[test]
    fn ratios_match_counts((gt, pred) in arb_case(), tol in 0.0f64..3.0) {
        let r = precision_recall(&pred, &gt, tol).unwrap();
        let total = r.tp + r.fp;
        prop_assert_eq!(r.precision, (total > 0).then(|| r.tp as f64 / total as f64));
        let visible = gt.ticks.iter().flatten().filter(|g| g.visible).count() as u64;
        prop_assert_eq!(r.detected + r.fn_, visible);
    }

    #[test]
    fn crossing_lies_between_bracketing_samples(
        ys in prop::collection::vec(-20.0f64..20.0, 2..40),
        xs in prop::collection::vec(-5.0f64..5.0, 40),
        start in 0u64..40_000,
    ) {
        let traj: Vec<Sample> = ys.iter().enumerate().map(|(k, &y)| Sample { t_us: k as f64 * 1000.0, x: xs[k], y }).collect();
        let line = LineSpec { bounded: false, ..LineSpec::new((-10.0, 0.0), (10.0, 0.0), "j", start) };
        if let Ok(t) = detect_crossing(&traj, &line) {
            prop_assert!(t >= start as f64);
            let k = traj.partition_point(|s| s.t_us <= t);
            let after = traj.get(k.min(traj.len() - 1)).unwrap();
            let before = &traj[k.saturating_sub(1)];
            prop_assert!(before.t_us <= t && t <= after.t_us.max(before.t_us));
            let d0 = line.signed_distance((before.x, before.y));
            let d1 = line.signed_distance((after.x, after.y));
            prop_assert!(d0 == 0.0 || d1 == 0.0 || d0.signum() != d1.signum() || before.t_us == t);
        }
    }

    #[test]
    fn constant_velocity_crossings_are_exact(v in 0.2f64..5.0, y0 in -100.0f64..-1.0, step in 1usize..10) {
        let traj: Vec<Sample> = (0..400).step_by(step).map(|k| Sample { t_us: k as f64 * 1000.0, x: 0.0, y: y0 + v * k as f64 }).collect();
        let line = LineSpec { bounded: false, ..LineSpec::new((-10.0, 0.0), (10.0, 0.0), "j", 0) };
        let expected = -y0 / v * 1000.0;
        if expected < traj.last().unwrap().t_us {
            let t = detect_crossing(&traj, &line).unwrap();
            prop_assert!((t - expected).abs() < 1e-6 * expected.max(1.0));
        }
    }
}
