mod common;

use common::{settling_time, speed_step};

fn check_step(v0: f64, v1: f64) {
    let run = speed_step(v0, v1, 12.0);
    let t = settling_time(&run, v1, 0.02).unwrap_or(f64::INFINITY);
    assert!(t <= 8.0, "{v0} -> {v1}: settled at {t}");
    assert!(
        run.iter().all(|s| !(s.throttle > 0.0 && s.brake > 0.0)),
        "pedal overlap"
    );
}

#[test]
fn step_up_from_rest() {
    check_step(0.0, 10.0);
}

#[test]
fn step_up_at_speed() {
    check_step(10.0, 20.0);
}

#[test]
fn step_down_brakes() {
    check_step(30.0, 20.0);
}
