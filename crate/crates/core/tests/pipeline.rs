use flashcap_core::sim::SceneMetadata;
use flashcap_core::{
    ablation_run, annotate_stream, precision_recall, scenario, simulate, AblationFlags, GroundTruthLabels, LabelSet, PipelineConfig,
    SceneConfig, SceneLed, Trajectory,
};

/// Labels sitting on another visible LED while more than 3 px from their own.
fn identity_swaps(labels: &LabelSet, gt: &GroundTruthLabels) -> usize {
    let mut swaps = 0;
    for frame in &labels.frames {
        let row = &gt.ticks[(frame.t_ms - gt.t0_ms) as usize];
        for (id, j) in &frame.joints {
            let own = gt.led_index(id).unwrap();
            let d = |k: usize| (row[k].x - j.x).hypot(row[k].y - j.y);
            let far_from_own = !row[own].visible || d(own) > 3.0;
            if far_from_own && (0..row.len()).any(|k| k != own && row[k].visible && d(k) <= 1.0) {
                swaps += 1;
            }
        }
    }
    swaps
}

fn short(name: &str, seed: u64, duration_us: u64) -> SceneConfig {
    scenario(name, seed).unwrap().truncated(duration_us)
}

#[test]
fn spatial_gating_prevents_identity_swaps_when_hands_cross() {
    let out = simulate(&scenario("crossing_hands", 0).unwrap()).unwrap();
    let gated = annotate_stream(&out.stream, &out.leds, &PipelineConfig::default()).unwrap().labels;
    let ungated_cfg = PipelineConfig { spatial_gate_px: f64::INFINITY, ..PipelineConfig::default() };
    let ungated = annotate_stream(&out.stream, &out.leds, &ungated_cfg).unwrap().labels;
    assert_eq!(identity_swaps(&gated, &out.truth), 0);
    assert!(identity_swaps(&ungated, &out.truth) > 0);
}

#[test]
fn period_distance_and_tracking_both_pay_off() {
    let out = simulate(&scenario("ambiguous_ontime", 2).unwrap()).unwrap();
    let [_, no_period, _, no_tracking] = AblationFlags::singles();
    let rows = ablation_run(&out.stream, &out.truth, &out.leds, &PipelineConfig::default(), &[no_period, no_tracking], 1.0).unwrap();
    let (complete, no_period, no_tracking) = (&rows[0].report, &rows[1].report, &rows[2].report);
    assert_eq!(rows[0].name, "complete");
    assert!(complete.precision_or_zero() >= no_period.precision_or_zero());
    assert!(complete.recall_or_zero() > no_tracking.recall_or_zero());
}

#[test]
fn end_to_end_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(&short("static", 4, 2_000_000)).unwrap();
    let fevt = dir.path().join("scene.fevt");
    let gt_path = dir.path().join("gt.flbl");
    flashcap_core::event::write_event_file(&fevt, &out.stream).unwrap();
    std::fs::write(&gt_path, out.truth.to_flbl()).unwrap();

    let stream = flashcap_core::event::read_any(&fevt).unwrap();
    let labels = annotate_stream(&stream, &out.leds, &PipelineConfig::default()).unwrap().labels;
    let pred_path = dir.path().join("pred.flbl");
    labels.save(&pred_path).unwrap();
    let report = precision_recall(&LabelSet::load(&pred_path).unwrap(), &GroundTruthLabels::load(&gt_path).unwrap(), 1.0).unwrap();
    assert!(report.precision_or_zero() >= 0.999, "{report:?}");
    assert!(report.recall_or_zero() >= 0.98, "{report:?}");
}

#[test]
fn coarser_frames_are_resampled_onto_millisecond_ticks() {
    let out = simulate(&short("wave", 5, 1_000_000)).unwrap();
    for frame_us in [500, 2000] {
        let cfg = PipelineConfig { frame_us, ..PipelineConfig::default() };
        let labels = annotate_stream(&out.stream, &out.leds, &cfg).unwrap().labels;
        assert_eq!(labels.frames.len(), out.truth.ticks.len());
        assert!(labels.frames.iter().enumerate().all(|(k, f)| f.t_ms == k as u64));
        let r = precision_recall(&labels, &out.truth, 3.0).unwrap();
        assert!(r.precision_or_zero() > 0.99, "frame {frame_us}: {r:?}");
    }
}

#[test]
fn simulation_is_a_function_of_scene_and_seed() {
    let a = simulate(&short("kick", 1, 300_000)).unwrap();
    let b = simulate(&short("kick", 1, 300_000)).unwrap();
    let c = simulate(&short("kick", 2, 300_000)).unwrap();
    assert_eq!(a.stream, b.stream);
    assert_eq!(a.truth, b.truth);
    assert_ne!(a.stream, c.stream);
    let meta = SceneMetadata::from_toml(&a.metadata.to_toml()).unwrap();
    assert_eq!(meta, a.metadata);
}

#[test]
fn truth_matches_trajectory_at_tick_midpoints() {
    let scene = short("wave", 0, 200_000);
    let out = simulate(&scene).unwrap();
    for (i, led) in scene.leds.iter().enumerate() {
        for t_ms in 0..200u64 {
            let (x, y) = led.trajectory.position((t_ms * 1000 + 500) as f64);
            let g = out.truth.at(t_ms, i).unwrap();
            assert!((g.x - x).abs() < 0.01 && (g.y - y).abs() < 0.01);
        }
    }
}

#[test]
fn occluded_led_emits_nothing() {
    let led = SceneLed { led: flashcap_core::LedConfig::new("m", 150, 250), trajectory: Trajectory::Static { x: 300.0, y: 200.0 } };
    let mut scene = SceneConfig::new("occluded", 9, 100_000, vec![led]);
    scene.occlusions.push(flashcap_core::sim::Occlusion { led_id: "m".into(), t_begin_us: 20_000, t_end_us: 60_000 });
    let out = simulate(&scene).unwrap();
    assert!(out.stream.window(20_010, 59_990).is_empty());
    assert!(!out.stream.window(0, 20_000).is_empty());
    assert!(!out.stream.window(60_000, 100_000).is_empty());
    assert!(!out.truth.at(30, 0).unwrap().visible);
    assert!(out.truth.at(10, 0).unwrap().visible);
}
