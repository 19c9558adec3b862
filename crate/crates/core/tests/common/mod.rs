#![allow(dead_code)]
use tricycle_core::track::Track;

pub fn straight_track(length: f64, width: f64) -> Track {
    let pts: Vec<(f64, f64)> = (0..=(length as usize)).map(|i| (i as f64, 0.0)).collect();
    Track::from_points(&pts, width, width).unwrap()
}

/// Closed counter-clockwise circle starting at the origin heading +x.
pub fn circle_track(radius: f64, count: usize, width: f64) -> Track {
    let pts: Vec<(f64, f64)> = (0..=count)
        .map(|i| {
            let a = i as f64 / count as f64 * std::f64::consts::TAU;
            (radius * a.sin(), radius - radius * a.cos())
        })
        .collect();
    Track::from_points(&pts, width, width).unwrap()
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Closed-loop run of `data/golden/scenario.toml` on the shipped data files.
pub fn golden_run() -> (
    tricycle_core::sim::Telemetry,
    tricycle_core::sim::MetricsReport,
) {
    use tricycle_core::config::Config;
    use tricycle_core::lowlevel::ThrottleMap;
    use tricycle_core::planner::{generate_speed_profile, AccelLimits};
    use tricycle_core::sim::{compute_metrics, run_closed_loop};
    use tricycle_core::track::load_track;
    use tricycle_core::trackgen::load_segments;

    let d = data_dir();
    let cfg = Config::load(Some(&d.join("golden/scenario.toml")), &[]).unwrap();
    let track = load_track(&d.join("track.csv")).unwrap();
    let segments = load_segments(&d.join("segments.csv")).unwrap();
    let limits = AccelLimits::load(&d.join("limits/ay.csv"), &d.join("limits/ax.csv")).unwrap();
    let map = ThrottleMap::load_csv(&d.join("throttle_map.csv")).unwrap();
    let profile = generate_speed_profile(&track, &limits, cfg.planner.ds).unwrap();
    let scn = cfg.scenario(track, segments.clone(), limits, profile, map);
    let tel = run_closed_loop(&scn).unwrap();
    let metrics = compute_metrics(&tel, &segments);
    (tel, metrics)
}

pub const GOLDEN_METRICS: &str = "golden/metrics.json";
pub const BLESS_ENV: &str = "TRICYCLE_BLESS";

pub struct StepSample {
    pub t: f64,
    pub vx: f64,
    pub throttle: f64,
    pub brake: f64,
}

/// Low-level controller driving the plant straight ahead from `v0` toward a
/// constant reference `v1`, at 100 Hz.
pub fn speed_step(v0: f64, v1: f64, duration: f64) -> Vec<StepSample> {
    use tricycle_core::lowlevel::{
        select_gear, LowLevel, LowLevelConfig, LowLevelInput, PiState, ThrottleMap,
    };
    use tricycle_core::params::{TireParams, VehicleParams};
    use tricycle_core::sim::{Plant, PlantConfig, PlantInput, PlantState};

    let (p, t) = (VehicleParams::default(), TireParams::default());
    let plant = Plant::new(p.clone(), t, PlantConfig::default()).unwrap();
    let low = LowLevel::new(
        LowLevelConfig::default(),
        p.clone(),
        t,
        ThrottleMap::synthetic(&p),
    )
    .unwrap();
    let mut state = plant.refresh(&PlantState::rolling(0.0, 0.0, 0.0, v0, &p));
    let mut gear = tricycle_core::sim::initial_gear(state.omega, &p);
    let mut pi = PiState::default();
    let dt = 0.01;
    let mut out = Vec::new();
    for k in 0..(duration / dt).round() as usize {
        let rpm = plant.engine_rpm(state.omega, gear);
        let fz = state.wheels.fz;
        let inp = LowLevelInput {
            v_ref: v1,
            a_ref: 0.0,
            vx: state.vx,
            ax: state.ax,
            rpm,
            gear,
            fz_f: fz[0] + fz[1],
            fz_r: fz[2] + fz[3],
        };
        let (cmd, next) = low.tick(&inp, dt, &pi);
        pi = next;
        gear = select_gear(rpm, gear, &p);
        state = plant
            .step(
                &state,
                &PlantInput {
                    throttle: cmd.throttle,
                    brake: cmd.brake,
                    delta_cmd: 0.0,
                    gear,
                },
                dt,
            )
            .unwrap();
        out.push(StepSample {
            t: (k + 1) as f64 * dt,
            vx: state.vx,
            throttle: cmd.throttle,
            brake: cmd.brake,
        });
    }
    out
}

/// First time after which the speed stays within `tol` (relative) of `v1`.
pub fn settling_time(samples: &[StepSample], v1: f64, tol: f64) -> Option<f64> {
    let last_out = samples.iter().rposition(|s| (s.vx - v1).abs() > tol * v1);
    match last_out {
        None => Some(0.0),
        Some(i) if i + 1 < samples.len() => Some(samples[i].t),
        Some(_) => None,
    }
}

/// Scenario on `track` with shipped defaults, synthetic limits and map.
pub fn default_scenario(
    cfg: &tricycle_core::config::Config,
    track: Track,
    segments: Vec<tricycle_core::trackgen::NamedSegment>,
) -> tricycle_core::sim::Scenario {
    use tricycle_core::lowlevel::ThrottleMap;
    use tricycle_core::planner::generate_speed_profile;
    let limits = cfg.synthetic_limits();
    let profile = generate_speed_profile(&track, &limits, cfg.planner.ds).unwrap();
    let map = ThrottleMap::synthetic(&cfg.vehicle);
    cfg.scenario(track, segments, limits, profile, map)
}

pub fn whole(track: &Track) -> Vec<tricycle_core::trackgen::NamedSegment> {
    vec![tricycle_core::trackgen::NamedSegment {
        name: "all".into(),
        s_start: 0.0,
        s_end: track.total_length(),
        kind: tricycle_core::trackgen::SegmentKind::Straight,
        radius: f64::INFINITY,
    }]
}
