mod common;

use common::{circle_track, straight_track};
use tricycle_core::models::*;
use tricycle_core::mpc::*;
use tricycle_core::numerics::{step, IntegratorKind};
use tricycle_core::params::{TireParams, VehicleParams};

fn controller(kind: ModelKind) -> Mpc {
    let cfg = MpcConfig {
        model: kind,
        ..Default::default()
    };
    Mpc::new(cfg, VehicleParams::default(), TireParams::default()).unwrap()
}

fn iterate(
    mpc: &Mpc,
    x: &CurvState,
    track: &tricycle_core::track::Track,
    v: f64,
    n: usize,
) -> Vec<MpcSolution> {
    let vref = vec![v; mpc.cfg.horizon + 1];
    let mut warm = MpcSolution::cold_start(x, &mpc.cfg);
    let mut out = Vec::new();
    for _ in 0..n {
        let sol = mpc.solve(x, track, &vref, &warm);
        warm = sol.clone();
        out.push(sol);
    }
    out
}

#[test]
fn straight_equilibrium_stays_centered() {
    let track = straight_track(400.0, 6.0);
    let mpc = controller(ModelKind::Tricycle);
    let x = CurvState {
        vx: 20.0,
        ..Default::default()
    };
    let sol = iterate(&mpc, &x, &track, 20.0, 3).pop().unwrap();
    assert_ne!(sol.status, SolveStatus::Failed);
    for s in &sol.states {
        assert!(s.n.abs() < 1e-3, "n = {}", s.n);
        assert!(s.delta.abs() < 1e-4);
    }
}

#[test]
fn lateral_offset_steers_back() {
    let track = straight_track(400.0, 6.0);
    let mpc = controller(ModelKind::Tricycle);
    let x = CurvState {
        n: 1.0,
        vx: 20.0,
        ..Default::default()
    };
    let sols = iterate(&mpc, &x, &track, 20.0, 4);
    let sol = sols.last().unwrap();
    assert!(
        sol.inputs[0].ddelta < 0.0,
        "first steering rate {}",
        sol.inputs[0].ddelta
    );
    assert!(
        sol.states.last().unwrap().n.abs() < 0.1,
        "terminal n {}",
        sol.states.last().unwrap().n
    );
}

fn steady_corner_delta(kind: ModelKind) -> f64 {
    let track = circle_track(30.0, 600, 6.0);
    let mpc = controller(kind);
    let v = 12.0;
    let vref = vec![v; mpc.cfg.horizon + 1];
    let mut x = CurvState {
        vx: v,
        r: v / 30.0,
        ..Default::default()
    };
    let mut warm = MpcSolution::cold_start(&x, &mpc.cfg);
    for _ in 0..150 {
        let sol = mpc.solve(&x, &track, &vref, &warm);
        let next = mpc
            .stage_map(&x.to_array(), &sol.inputs[0], &sol.contexts[0], &track)
            .unwrap();
        x = CurvState::from_array(&next);
        warm = sol.shifted_by(mpc.cfg.dt, mpc.cfg.dt);
    }
    assert!(
        x.n.abs() < 0.05 && (x.vx - v).abs() < 0.1,
        "not settled: {x:?}"
    );
    x.delta
}

#[test]
fn locked_axle_needs_more_steering_in_tight_corner() {
    let tri = steady_corner_delta(ModelKind::Tricycle);
    let single = steady_corner_delta(ModelKind::SingleTrack);
    assert!(
        tri > single && single > 0.0,
        "tricycle {tri} single-track {single}"
    );
}

#[test]
fn solution_is_a_rollout_and_cost_matches() {
    let track = circle_track(120.0, 600, 6.0);
    let mpc = controller(ModelKind::Tricycle);
    let x = CurvState {
        n: 0.5,
        vx: 25.0,
        r: 0.2,
        ..Default::default()
    };
    let sol = iterate(&mpc, &x, &track, 27.0, 3).pop().unwrap();
    let rep = mpc.check_solution(&sol, &track).unwrap();
    assert!(rep.max_dynamics_defect < 1e-3);
    assert_eq!(rep.max_input_violation, 0.0);
    let j = evaluate_cost(
        &sol.states,
        &sol.inputs,
        &sol.v_ref,
        &mpc.cfg,
        &mpc.model.params,
    );
    assert!((j - sol.cost).abs() <= 1e-6 * j.abs().max(1.0));
}

#[test]
fn repeated_solve_reaches_fixed_point() {
    let track = straight_track(400.0, 6.0);
    let mpc = controller(ModelKind::Tricycle);
    let x = CurvState {
        n: 0.3,
        vx: 20.0,
        ..Default::default()
    };
    let sols = iterate(&mpc, &x, &track, 20.0, 12);
    let (a, b) = (&sols[10], &sols[11]);
    assert!(
        (a.cost - b.cost).abs() <= 1e-6 * a.cost,
        "{} vs {}",
        a.cost,
        b.cost
    );
}

#[test]
fn stage_map_is_five_chained_steps() {
    let track = circle_track(80.0, 400, 6.0);
    let mpc = controller(ModelKind::Tricycle);
    assert_eq!(mpc.micro_steps(), 5);
    let x0 = CurvState {
        n: 0.2,
        mu: 0.01,
        vx: 18.0,
        vy: 0.1,
        r: 0.2,
        delta: 0.03,
        d: 1.0,
        ..Default::default()
    };
    let u = RateInput {
        ddelta: 0.1,
        dd: -2.0,
    };
    let ctx = ModelContext {
        ay: 3.0,
        m0_diff: -50.0,
    };
    let f = |z: &[f64; STATE_DIM]| {
        let xs = CurvState::from_array(z);
        Ok(mpc
            .model
            .derivative(&xs, &u, track.curvature_clamped(xs.s), &ctx)?
            .to_array())
    };
    let mut manual = x0.to_array();
    for _ in 0..5 {
        manual = step(&f, &manual, 0.008, IntegratorKind::Rk4).unwrap();
    }
    assert_eq!(
        mpc.stage_map(&x0.to_array(), &u, &ctx, &track).unwrap(),
        manual
    );
}

#[test]
fn linear_stub_discretization() {
    let lambda = -3.0;
    let f = |x: &[f64; STATE_DIM], _u: &[f64; INPUT_DIM]| Ok(x.map(|v| lambda * v));
    let x0 = [0.3; STATE_DIM];
    let (a, b, c) =
        discretize_stage(&f, &x0, &[0.0; 2], 0.04, 0.008, IntegratorKind::Euler).unwrap();
    let expect = (1.0 + lambda * 0.008f64).powi(5);
    for i in 0..STATE_DIM {
        for j in 0..STATE_DIM {
            let e = if i == j { expect } else { 0.0 };
            assert!((a[(i, j)] - e).abs() < 1e-8);
        }
        assert!(c[i].abs() < 1e-8);
    }
    assert!(b.amax() < 1e-12);

    let zero = |_x: &[f64; STATE_DIM], _u: &[f64; INPUT_DIM]| Ok([0.0; STATE_DIM]);
    let (a, b, c) =
        discretize_stage(&zero, &x0, &[0.1, 0.2], 0.04, 0.008, IntegratorKind::Rk4).unwrap();
    assert!(
        (a - StateMat::identity()).amax() < 1e-9
            && b.amax() == 0.0
            && c.iter().all(|v| v.abs() < 1e-9)
    );
}

#[test]
fn micro_steps_change_the_linearization_at_blend_speed() {
    let model = VehicleModel::new(
        ModelKind::Tricycle,
        VehicleParams::default(),
        TireParams::default(),
    );
    let ctx = ModelContext::default();
    let f = |x: &[f64; STATE_DIM], u: &[f64; INPUT_DIM]| {
        Ok(model
            .derivative(
                &CurvState::from_array(x),
                &RateInput::from_array(u),
                0.0,
                &ctx,
            )?
            .to_array())
    };
    let x0 = CurvState {
        vx: 8.0,
        ..Default::default()
    }
    .to_array();
    let (micro, _, _) =
        discretize_stage(&f, &x0, &[0.0; 2], 0.04, 0.008, IntegratorKind::Euler).unwrap();
    let (macro_, _, _) =
        discretize_stage(&f, &x0, &[0.0; 2], 0.04, 0.04, IntegratorKind::Euler).unwrap();
    assert!((micro - macro_).amax() > 0.1);
}

#[test]
fn contexts_follow_previous_prediction() {
    let mpc = controller(ModelKind::Tricycle);
    let straight = straight_track(400.0, 6.0);
    let cold = MpcSolution::cold_start(
        &CurvState {
            vx: 30.0,
            ..Default::default()
        },
        &mpc.cfg,
    );
    assert!(mpc
        .precompute_m0diff(&cold, &straight)
        .iter()
        .all(|m| *m == 0.0));
    let rest = MpcSolution::cold_start(&CurvState::default(), &mpc.cfg);
    assert!(mpc
        .precompute_m0diff(&rest, &straight)
        .iter()
        .all(|m| *m == 0.0));

    let track = circle_track(30.0, 600, 6.0);
    let mut prev = MpcSolution::cold_start(
        &CurvState {
            vx: 12.0,
            r: 0.4,
            delta: 0.12,
            vy: -0.2,
            ..Default::default()
        },
        &mpc.cfg,
    );
    prev.contexts = vec![
        ModelContext {
            ay: 4.8,
            m0_diff: 0.0
        };
        mpc.cfg.horizon
    ];
    let ctx = mpc.precompute_contexts(&prev, &track);
    let first = ctx[0].m0_diff.signum();
    assert!(first < 0.0);
    for (t, c) in ctx.iter().enumerate() {
        assert_eq!(c.m0_diff.signum(), first);
        let probe = ModelContext {
            ay: c.ay,
            m0_diff: if t == 0 { 0.0 } else { ctx[t - 1].m0_diff },
        };
        assert_eq!(c.m0_diff, mpc.model.m_diff(&prev.states[t], &probe));
    }
}

#[test]
fn hand_built_violation_is_reported() {
    let track = straight_track(400.0, 6.0);
    let mpc = controller(ModelKind::Tricycle);
    let n_max = 6.0 - mpc.model.params.half_width - mpc.cfg.track_margin;
    let mut sol = MpcSolution::cold_start(
        &CurvState {
            vx: 10.0,
            ..Default::default()
        },
        &mpc.cfg,
    );
    sol.states[10].n = 2.0 * n_max;
    let rep = mpc.check_solution(&sol, &track).unwrap();
    assert!((rep.max_track_violation - n_max).abs() < 1e-12);
}
