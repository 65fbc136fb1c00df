use flashcap_core::signature::{decode, relative_deviation};
use flashcap_core::{is_outlier, polarity_sequence, smooth, ClusterSignature, Event, LedConfig, Polarity};
use proptest::prelude::*;

/// Edge bursts of an ideal LED: 6 events per edge, `cycles` periods from `t0`.
fn blink(on: u64, off: u64, t0: u64, cycles: u64, jitter: &[u64]) -> Vec<Event> {
    let mut events = Vec::new();
    for k in 0..cycles {
        let t = t0 + k * (on + off);
        for j in 0..6u64 {
            let d = jitter.get((k * 6 + j) as usize % jitter.len().max(1)).copied().unwrap_or(0);
            events.push(Event::new(t + d, 10, 10, Polarity::Positive));
            events.push(Event::new(t + on + d, 10, 10, Polarity::Negative));
        }
    }
    events.sort();
    events
}

fn arb_led() -> impl Strategy<Value = (u64, u64)> {
    (100u64..=300, 100u64..=300)
}

proptest! {
    #[test]
    fn recovers_timings_within_ten_microseconds(
        (on, off) in arb_led(),
        t0 in 0u64..10_000,
        jitter in prop::collection::vec(0u64..=10, 1..64),
    ) {
        let sig = decode(&blink(on, off, t0, 25, &jitter), 25, 3).unwrap();
        prop_assert!((sig.mean_on_us - on as f64).abs() <= 10.0, "{:?}", sig);
        prop_assert!((sig.mean_off_us - off as f64).abs() <= 10.0, "{:?}", sig);
        prop_assert!((sig.period_us - (on + off) as f64).abs() <= 10.0, "{:?}", sig);
    }

    #[test]
    fn period_is_sum_of_means((on, off) in arb_led(), jitter in prop::collection::vec(0u64..=10, 1..64)) {
        let sig = decode(&blink(on, off, 0, 12, &jitter), 25, 3).unwrap();
        prop_assert_eq!(sig.period_us, sig.mean_on_us + sig.mean_off_us);
        prop_assert!(sig.mean_on_us > 0.0 && sig.mean_off_us > 0.0 && sig.sample_count > 0);
    }

    #[test]
    fn time_shift_invariant((on, off) in arb_led(), shift in 0u64..1_000_000_000, jitter in prop::collection::vec(0u64..=10, 1..64)) {
        let events = blink(on, off, 0, 12, &jitter);
        let shifted: Vec<Event> = events.iter().map(|e| Event { t: e.t + shift, ..*e }).collect();
        prop_assert_eq!(decode(&events, 25, 3).unwrap(), decode(&shifted, 25, 3).unwrap());
    }

    #[test]
    fn halving_subwindow_moves_runs_by_at_most_one_coarse_slot_per_edge(
        (on, off) in arb_led(),
        sw in prop::sample::select(vec![10u64, 20, 30, 40]),
        jitter in prop::collection::vec(0u64..=10, 1..64),
    ) {
        let events = blink(on, off, 0, 15, &jitter);
        let coarse = decode(&events, sw, 3).unwrap();
        let fine = decode(&events, sw / 2, 3).unwrap();
        let bound = 2.0 * sw as f64;
        prop_assert!((coarse.mean_on_us - fine.mean_on_us).abs() <= bound);
        prop_assert!((coarse.mean_off_us - fine.mean_off_us).abs() <= bound);
    }

    #[test]
    fn isolated_flips_barely_move_the_means(
        (on, off) in arb_led(),
        picks in prop::collection::vec(0.0f64..1.0, 1..800),
    ) {
        let sw = 25u64;
        let seq = polarity_sequence(&blink(on, off, 0, 20, &[0]), sw).unwrap();
        let clean = flashcap_core::estimate_signature(&smooth(&seq, 3).unwrap()).unwrap();
        let mut noisy = seq.clone();
        let n = noisy.slots.len();
        let mut last: Option<usize> = None;
        let mut flips = 0;
        for s in 0..n {
            if picks[s % picks.len()] < 0.05 && last.is_none_or(|l| s > l + 2) && (flips + 1) * 20 <= n {
                noisy.slots[s].class = noisy.slots[s].class.flipped();
                last = Some(s);
                flips += 1;
            }
        }
        let noisy = flashcap_core::estimate_signature(&smooth(&noisy, 3).unwrap()).unwrap();
        prop_assert!((noisy.mean_on_us - clean.mean_on_us).abs() <= 2.0 * sw as f64, "{flips} flips");
        prop_assert!((noisy.mean_off_us - clean.mean_off_us).abs() <= 2.0 * sw as f64, "{flips} flips");
    }

    #[test]
    fn exact_match_is_never_an_outlier((on, off) in arb_led(), tol in 0.01f64..2.0) {
        let led = LedConfig::new("a", on as u32, off as u32);
        prop_assert!(!is_outlier(&ClusterSignature::nominal(&led), &[led], tol).unwrap());
    }
}

#[test]
fn smoothing_is_idempotent_on_clean_sequences() {
    let seq = polarity_sequence(&blink(150, 250, 0, 10, &[0]), 25).unwrap();
    let once = smooth(&seq, 3).unwrap();
    assert_eq!(smooth(&once, 3).unwrap(), once);
    assert_eq!(once.runs().len(), seq.runs().len());
}

#[test]
fn outlier_examples() {
    let led = LedConfig::new("a", 150, 250);
    let close = ClusterSignature::new(140.0, 260.0, 400.0, 400.0, 5);
    let dev = relative_deviation(&close, &led);
    assert!((dev - 10.0 / 150.0).abs() < 1e-12, "{dev}");
    assert!(!is_outlier(&close, std::slice::from_ref(&led), 0.5).unwrap());
    let lamp = ClusterSignature::new(2000.0, 2000.0, 4000.0, 4000.0, 5);
    assert!(is_outlier(&lamp, &[led], 0.5).unwrap());
}

fn arb_events() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0u64..3_000, any::<bool>()), 1..200).prop_map(|raw| {
        let mut events: Vec<Event> = raw
            .into_iter()
            .map(|(t, p)| Event::new(t, 0, 0, if p { Polarity::Positive } else { Polarity::Negative }))
            .collect();
        events.sort();
        events
    })
}

proptest! {
    #[test]
    fn fused_decode_matches_staged_decode(
        events in arb_events(),
        sw in 1u64..60,
        kernel in prop::sample::select(vec![1usize, 3, 5, 7]),
    ) {
        let staged = polarity_sequence(&events, sw)
            .and_then(|seq| smooth(&seq, kernel))
            .and_then(|seq| flashcap_core::estimate_signature(&seq));
        prop_assert_eq!(decode(&events, sw, kernel), staged);
    }
}
