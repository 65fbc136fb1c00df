//! Named scene presets covering the motion categories the pipeline must
//! handle: static poses, waving, kicking, crossing limbs, sprint finishes and
//! deliberately confusable LED tables.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Distractor, FinishLine, Occlusion, Reflection, SceneConfig, SceneLed, SimError, Trajectory};
use crate::led::{LedConfig, LedTable, BODY_SITES};

pub const SCENARIOS: [&str; 7] =
    ["static", "wave", "kick", "crossing_hands", "sprint_crossing", "ambiguous_duty", "ambiguous_ontime"];

pub const SCENE_DURATION_US: u64 = 10_000_000;
pub const SCENE_NOISE_RATE: f64 = 0.05;

pub fn scenario_names() -> &'static [&'static str] {
    &SCENARIOS
}

/// Builds the named preset for `seed`.
pub fn scenario(name: &str, seed: u64) -> Result<SceneConfig, SimError> {
    let scene = match name {
        "static" => static_pose(seed),
        "wave" => wave(seed),
        "kick" => kick(seed),
        "crossing_hands" => crossing_hands(seed),
        "sprint_crossing" => sprint_crossing(seed),
        "ambiguous_duty" => ambiguous_duty(seed),
        "ambiguous_ontime" => ambiguous_ontime(seed),
        other => return Err(SimError::UnknownScenario(other.to_owned())),
    };
    Ok(scene)
}

/// Rest position of each body site, indexed like [`BODY_SITES`].
const SKELETON: [(f64, f64); 17] = [
    (640.0, 120.0),
    (640.0, 220.0),
    (560.0, 200.0),
    (720.0, 200.0),
    (520.0, 290.0),
    (760.0, 290.0),
    (500.0, 380.0),
    (780.0, 380.0),
    (640.0, 380.0),
    (600.0, 400.0),
    (680.0, 400.0),
    (590.0, 500.0),
    (690.0, 500.0),
    (585.0, 600.0),
    (695.0, 600.0),
    (570.0, 645.0),
    (710.0, 645.0),
];

fn site(name: &str) -> usize {
    BODY_SITES.iter().position(|s| *s == name).expect("known body site")
}

fn base_scene(name: &str, seed: u64, leds: Vec<LedConfig>) -> SceneConfig {
    let leds = leds
        .into_iter()
        .zip(SKELETON)
        .map(|(led, (x, y))| SceneLed { led, trajectory: Trajectory::Static { x, y } })
        .collect();
    SceneConfig {
        name: name.to_owned(),
        seed,
        duration_us: SCENE_DURATION_US,
        sensor_width: crate::event::DEFAULT_SENSOR_WIDTH,
        sensor_height: crate::event::DEFAULT_SENSOR_HEIGHT,
        led_radius_px: 2.0,
        events_per_edge: 6,
        jitter_us: 5,
        off_latency_us: 0,
        noise_rate: SCENE_NOISE_RATE,
        leds,
        occlusions: Vec::new(),
        distractors: Vec::new(),
        reflections: Vec::new(),
        lines: Vec::new(),
    }
}

fn suit_scene(name: &str, seed: u64) -> SceneConfig {
    base_scene(name, seed, LedTable::default_suit().leds().to_vec())
}

fn id(scene: &SceneConfig, site_name: &str) -> String {
    scene.leds[site(site_name)].led.id.clone()
}

fn occlude(scene: &mut SceneConfig, site_name: &str, t_begin_us: u64, t_end_us: u64) {
    let led_id = id(scene, site_name);
    scene.occlusions.push(Occlusion { led_id, t_begin_us, t_end_us });
}

fn static_pose(seed: u64) -> SceneConfig {
    suit_scene("static", seed)
}

fn wave(seed: u64) -> SceneConfig {
    let mut scene = suit_scene("wave", seed);
    let (wx, wy) = SKELETON[site("right_wrist")];
    scene.leds[site("right_wrist")].trajectory = Trajectory::Sinusoid {
        center: [wx, wy - 80.0],
        amplitude: [70.0, 40.0],
        period_ms: 450.0,
        phase: [0.0, std::f64::consts::FRAC_PI_2],
    };
    let (ex, ey) = SKELETON[site("right_elbow")];
    scene.leds[site("right_elbow")].trajectory = Trajectory::Sinusoid {
        center: [ex, ey - 30.0],
        amplitude: [25.0, 15.0],
        period_ms: 450.0,
        phase: [0.0, std::f64::consts::FRAC_PI_2],
    };
    occlude(&mut scene, "right_wrist", 3_000_000, 3_060_000);
    scene
}

fn kick(seed: u64) -> SceneConfig {
    let mut scene = suit_scene("kick", seed);
    let pivot = [SKELETON[site("right_hip")].0, SKELETON[site("right_hip")].1];
    for (name, length) in [("right_knee", 100.0), ("right_ankle", 200.0), ("right_foot", 245.0)] {
        scene.leds[site(name)].trajectory =
            Trajectory::Pendulum { pivot, length, amplitude_rad: 0.6, period_ms: 900.0, phase: 0.0 };
    }
    for k in 0..20u64 {
        let t0 = 250_000 + k * 500_000;
        occlude(&mut scene, "left_ankle", t0, t0 + 30_000);
    }
    occlude(&mut scene, "left_ankle", 5_000_000, 5_250_000);
    scene
}

fn crossing_hands(seed: u64) -> SceneConfig {
    let mut scene = suit_scene("crossing_hands", seed);
    // Wrists swing in antiphase along x and pass 2 px apart twice a cycle.
    for (name, sign, y) in [("left_wrist", -1.0, 460.0), ("right_wrist", 1.0, 462.0)] {
        scene.leds[site(name)].trajectory = Trajectory::Sinusoid {
            center: [640.0, y],
            amplitude: [sign * 110.0, 0.0],
            period_ms: 2000.0,
            phase: [std::f64::consts::FRAC_PI_2, 0.0],
        };
    }
    scene
}

/// Start of each sprint trial's motion, one per second, jittered by the seed.
pub fn sprint_trial_starts_ms(seed: u64, duration_us: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..duration_us / 1_000_000).map(|s| (s * 1000) as f64 + f64::from(rng.random_range(100u32..400))).collect()
}

pub const SPRINT_REST_X: f64 = 560.0;
pub const SPRINT_FAR_X: f64 = 720.0;
pub const SPRINT_Y: f64 = 330.0;
pub const SPRINT_LINE_X: f64 = 710.0;

fn sprint_crossing(seed: u64) -> SceneConfig {
    let mut scene = suit_scene("sprint_crossing", seed);
    let starts = sprint_trial_starts_ms(seed, scene.duration_us);
    let mut points = vec![[0.0, SPRINT_REST_X, SPRINT_Y]];
    for &t in &starts {
        points.push([t, SPRINT_REST_X, SPRINT_Y]);
        points.push([t + 80.0, SPRINT_FAR_X, SPRINT_Y]);
        points.push([t + 180.0, SPRINT_FAR_X, SPRINT_Y]);
        points.push([t + 500.0, SPRINT_REST_X, SPRINT_Y]);
    }
    let wrist = site("right_wrist");
    scene.leds[wrist].trajectory = Trajectory::Waypoints { points };
    let led_id = scene.leds[wrist].led.id.clone();
    scene.lines = starts
        .iter()
        .map(|&t| FinishLine {
            led_id: led_id.clone(),
            p0: [SPRINT_LINE_X, SPRINT_Y - 80.0],
            p1: [SPRINT_LINE_X, SPRINT_Y + 80.0],
            t_start_us: (t * 1000.0) as u64,
        })
        .collect();
    scene
}

fn sway(scene: &mut SceneConfig, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - 1);
    // The whole body sways with a single phase.
    let phase = std::f64::consts::TAU * rng.random::<f64>();
    for led in &mut scene.leds {
        if let Trajectory::Static { x, y } = led.trajectory {
            led.trajectory =
                Trajectory::Sinusoid { center: [x, y], amplitude: [8.0, 4.0], period_ms: 3000.0, phase: [phase, phase] };
        }
    }
}

/// Timing table with equal-period groups; `(150, 250)` has a near twin
/// `(165, 255)` mounted beside it.
pub const AMBIGUOUS_DUTY_TIMINGS: [(u32, u32); 17] = [
    (100, 300),
    (150, 250),
    (200, 200),
    (250, 150),
    (300, 100),
    (100, 250),
    (150, 200),
    (200, 150),
    (250, 100),
    (150, 300),
    (200, 250),
    (250, 200),
    (300, 150),
    (200, 300),
    (250, 250),
    (300, 200),
    (165, 255),
];

/// Timing table with equal-on-time groups.
pub const AMBIGUOUS_ONTIME_TIMINGS: [(u32, u32); 17] = [
    (100, 150),
    (100, 200),
    (100, 250),
    (100, 300),
    (150, 100),
    (150, 200),
    (150, 250),
    (150, 300),
    (200, 100),
    (200, 150),
    (200, 250),
    (200, 300),
    (250, 100),
    (250, 150),
    (250, 200),
    (250, 300),
    (300, 200),
];

fn table_leds(timings: &[(u32, u32)]) -> Vec<LedConfig> {
    BODY_SITES.iter().zip(timings).map(|(s, &(on, off))| LedConfig::new(*s, on, off)).collect()
}

fn ambiguous_duty(seed: u64) -> SceneConfig {
    let mut scene = base_scene("ambiguous_duty", seed, table_leds(&AMBIGUOUS_DUTY_TIMINGS));
    scene.off_latency_us = 15;
    // The twin sits 15 px to the right of its (150, 250) partner.
    let partner = SKELETON[1];
    scene.leds[16].trajectory = Trajectory::Static { x: partner.0 + 15.0, y: partner.1 };
    sway(&mut scene, seed);
    scene.distractors.push(Distractor {
        position: [1000.0, 150.0],
        on_time_us: 40,
        off_time_us: 360,
        radius_px: 2.0,
        t_begin_us: 2_000_000,
        t_end_us: 4_000_000,
    });
    let occluded = scene.leds[0].led.id.clone();
    scene.occlusions.push(Occlusion { led_id: occluded, t_begin_us: 2_000_000, t_end_us: 2_500_000 });
    let mirrored = scene.leds[15].led.id.clone();
    scene.reflections.push(Reflection {
        led_id: mirrored,
        offset: [0.0, -200.0],
        t_begin_us: 5_000_000,
        t_end_us: 6_000_000,
    });
    scene
}

fn ambiguous_ontime(seed: u64) -> SceneConfig {
    let mut scene = base_scene("ambiguous_ontime", seed, table_leds(&AMBIGUOUS_ONTIME_TIMINGS));
    sway(&mut scene, seed);
    occlude(&mut scene, "left_knee", 4_000_000, 4_200_000);
    scene
}
