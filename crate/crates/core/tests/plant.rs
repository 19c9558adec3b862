use tricycle_core::params::{TireParams, VehicleParams};
use tricycle_core::sim::plant::{Plant, PlantConfig, PlantInput, PlantState, RL, RR};

fn plant() -> Plant {
    Plant::new(
        VehicleParams::default(),
        TireParams::default(),
        PlantConfig::default(),
    )
    .unwrap()
}

fn run(p: &Plant, mut s: PlantState, input: PlantInput, secs: f64) -> PlantState {
    let n = (secs / 0.01).round() as usize;
    for _ in 0..n {
        s = p.step(&s, &input, 0.01).unwrap();
    }
    s
}

#[test]
fn at_rest_stays_at_rest() {
    let p = plant();
    let s = run(
        &p,
        PlantState::default(),
        PlantInput {
            gear: 1,
            ..Default::default()
        },
        1.0,
    );
    assert!(s.vx.abs() < 1e-9 && s.vy.abs() < 1e-9 && s.r.abs() < 1e-9);
    let total: f64 = s.wheels.fz.iter().sum();
    assert!((total - p.params.m * 9.81).abs() < 1.0, "{total}");
}

#[test]
fn low_speed_turn_radius_near_kinematic() {
    let p = plant();
    let v = 5.0;
    let delta = 0.08;
    let s0 = PlantState::rolling(0.0, 0.0, 0.0, v, &p.params);
    let mut input = PlantInput {
        delta_cmd: delta,
        gear: 1,
        ..Default::default()
    };
    let mut s = s0;
    // crude speed hold so the car does not coast down
    for _ in 0..600 {
        input.throttle = (0.3 * (v - s.vx) + 0.05).clamp(0.0, 1.0);
        s = p.step(&s, &input, 0.01).unwrap();
    }
    let radius = s.vx / s.r;
    let kin = p.params.l / delta.tan();
    assert!((radius - kin).abs() / kin < 0.1, "radius {radius} vs {kin}");
}

#[test]
fn locked_axle_resists_turn_when_coasting() {
    let p = plant();
    let s0 = PlantState::rolling(0.0, 0.0, 0.0, 15.0, &p.params);
    let input = PlantInput {
        delta_cmd: 0.05,
        gear: 3,
        ..Default::default()
    };
    let s = run(&p, s0, input, 1.5);
    assert!(s.r > 0.0);
    let [kl, kr] = s.wheels.slip_ratio;
    assert!(kl > 0.0 && kr < 0.0, "slips {kl} {kr}");
    assert!(s.m_diff < 0.0, "m_diff {}", s.m_diff);
    let (fl, fr) = s.rear_loads();
    assert!(fr > fl, "outer rear should carry more load");
    assert!(s.wheels.fx[RL] > 0.0 && s.wheels.fx[RR] < 0.0);
}

#[test]
fn coasting_energy_never_increases() {
    let p = plant();
    let mut s = PlantState::rolling(0.0, 0.0, 0.0, 20.0, &p.params);
    let input = PlantInput {
        delta_cmd: 0.04,
        gear: 3,
        ..Default::default()
    };
    let mut e = p.kinetic_energy(&s);
    for _ in 0..300 {
        s = p.step(&s, &input, 0.01).unwrap();
        let e2 = p.kinetic_energy(&s);
        assert!(e2 <= e + 1e-6 * e, "energy rose {e} -> {e2}");
        e = e2;
    }
}

#[test]
fn braking_decelerates_and_throttle_accelerates() {
    let p = plant();
    let s0 = PlantState::rolling(0.0, 0.0, 0.0, 20.0, &p.params);
    let b = run(
        &p,
        s0,
        PlantInput {
            brake: 60.0,
            gear: 3,
            ..Default::default()
        },
        0.5,
    );
    assert!(b.vx < 20.0 - 3.0 && b.ax < -5.0, "vx {} ax {}", b.vx, b.ax);
    let t = run(
        &p,
        s0,
        PlantInput {
            throttle: 1.0,
            gear: 2,
            ..Default::default()
        },
        0.5,
    );
    assert!(t.vx > 20.5, "vx {}", t.vx);
}

#[test]
fn mirrored_steering_gives_mirrored_motion() {
    let p = plant();
    let s0 = PlantState::rolling(0.0, 0.0, 0.0, 18.0, &p.params);
    let a = run(
        &p,
        s0,
        PlantInput {
            delta_cmd: 0.06,
            throttle: 0.2,
            gear: 3,
            ..Default::default()
        },
        2.0,
    );
    let b = run(
        &p,
        s0,
        PlantInput {
            delta_cmd: -0.06,
            throttle: 0.2,
            gear: 3,
            ..Default::default()
        },
        2.0,
    );
    assert!((a.x - b.x).abs() < 1e-9 && (a.y + b.y).abs() < 1e-9 && (a.r + b.r).abs() < 1e-9);
    assert!((a.vx - b.vx).abs() < 1e-9);
}
