//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs all criteria; numeric arguments after
//! `--` select a subset, e.g. `cargo test --test acceptance -- 3 5`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{circle_track, data_dir, golden_run, settling_time, speed_step, GOLDEN_METRICS};
use tricycle_core::config::Config;
use tricycle_core::lowlevel::ThrottleMap;
use tricycle_core::models::*;
use tricycle_core::mpc::*;
use tricycle_core::numerics::*;
use tricycle_core::params::{TireParams, VehicleParams};
use tricycle_core::planner::*;
use tricycle_core::sim::*;
use tricycle_core::trackgen::{monza_like, SegmentKind};

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(u32, &str, Duration, Check); 11] = [
        (
            1,
            "micro-step contract",
            Duration::from_secs(1),
            micro_step_contract,
        ),
        (
            2,
            "integrator orders",
            Duration::from_secs(1),
            integrator_orders,
        ),
        (
            3,
            "stability reproduction",
            Duration::from_secs(30),
            stability_reproduction,
        ),
        (
            4,
            "locked-diff yaw-moment sign",
            Duration::from_secs(10),
            yaw_moment_sign,
        ),
        (
            5,
            "open-loop direction",
            Duration::from_secs(30),
            open_loop_direction,
        ),
        (
            6,
            "closed-loop improvement",
            Duration::from_secs(300),
            closed_loop_improvement,
        ),
        (
            7,
            "speed-profile audit",
            Duration::from_secs(5),
            profile_audit,
        ),
        (
            8,
            "LMPC feasibility",
            Duration::from_secs(30),
            lmpc_feasibility,
        ),
        (9, "low-level loop", Duration::from_secs(20), low_level_loop),
        (
            10,
            "determinism and regression",
            Duration::from_secs(120),
            determinism,
        ),
        (
            11,
            "MPC solver sanity",
            Duration::from_secs(120),
            mpc_sanity,
        ),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let result = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let elapsed = t0.elapsed();
        let result = result.and_then(|d| {
            if elapsed <= budget {
                Ok(d)
            } else {
                Err(format!(
                    "{d}; runtime {:.1} s over budget {} s",
                    elapsed.as_secs_f64(),
                    budget.as_secs()
                ))
            }
        });
        let secs = elapsed.as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {id:>2} {name} ({secs:.2} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name} ({secs:.2} s): {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn defaults() -> (VehicleParams, TireParams) {
    (VehicleParams::default(), TireParams::default())
}

fn micro_step_contract() -> Result<String, String> {
    let (p, t) = defaults();
    let track = circle_track(80.0, 400, 6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for kind in [IntegratorKind::Euler, IntegratorKind::Rk4] {
        let cfg = MpcConfig {
            integrator: kind,
            dt: 0.04,
            h: 0.008,
            ..Default::default()
        };
        let mpc = Mpc::new(cfg.clone(), p.clone(), t).map_err(|e| e.to_string())?;
        ensure(mpc.micro_steps() == 5, || {
            format!("{} micro-steps", mpc.micro_steps())
        })?;
        let x0 = CurvState {
            n: 0.3,
            mu: 0.02,
            vx: 20.0,
            vy: 0.1,
            r: 0.25,
            delta: 0.04,
            d: 1.0,
            ..Default::default()
        };
        let inputs: Vec<RateInput> = (0..cfg.horizon)
            .map(|_| RateInput {
                ddelta: rng.gen_range(-0.3..0.3),
                dd: rng.gen_range(-5.0..5.0),
            })
            .collect();
        let contexts: Vec<ModelContext> = (0..cfg.horizon)
            .map(|_| ModelContext {
                ay: rng.gen_range(-5.0..5.0),
                m0_diff: rng.gen_range(-200.0..200.0),
            })
            .collect();
        let pred = mpc
            .predict(&x0, &inputs, &contexts, &track)
            .map_err(|e| e.to_string())?;
        let mut x = x0.to_array();
        for (k, (u, ctx)) in inputs.iter().zip(&contexts).enumerate() {
            let f = |z: &[f64; STATE_DIM]| {
                let xs = CurvState::from_array(z);
                Ok(mpc
                    .model
                    .derivative(&xs, u, track.curvature_clamped(xs.s), ctx)?
                    .to_array())
            };
            for _ in 0..5 {
                x = step(&f, &x, 0.008, kind).map_err(|e| e.to_string())?;
            }
            ensure(pred[k + 1].to_array() == x, || {
                format!("{kind}: stage {} differs from chained steps", k + 1)
            })?;
            checked += 1;
        }
    }
    let bad = MpcConfig {
        h: 0.007,
        ..Default::default()
    };
    ensure(bad.validate().is_err(), || "h = 7 ms accepted".into())?;
    ensure(Mpc::new(bad, p, t).is_err(), || {
        "Mpc::new accepted h = 7 ms".into()
    })?;
    Ok(format!(
        "{checked} stages bit-identical to 5 chained steps; h = 7 ms rejected"
    ))
}

fn integrator_orders() -> Result<String, String> {
    let f = |x: &[f64; 1]| Ok([-x[0]]);
    let err = |h: f64, kind| -> f64 {
        let n = (1.0 / h).round() as usize;
        let mut x = [1.0];
        for _ in 0..n {
            x = step(&f, &x, h, kind).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    let mut out = Vec::new();
    for (kind, target, tol) in [
        (IntegratorKind::Euler, 2.0, 0.05),
        (IntegratorKind::Rk4, 16.0, 0.10),
    ] {
        for h in [0.1, 0.05, 0.025] {
            let ratio = err(h, kind) / err(h / 2.0, kind);
            ensure((ratio - target).abs() <= tol * target, || {
                format!("{kind} h={h}: ratio {ratio:.4}")
            })?;
            out.push(format!("{kind} h={h}: {ratio:.3}"));
        }
    }
    Ok(out.join(", "))
}

fn stability_reproduction() -> Result<String, String> {
    let (p, t) = defaults();
    let cfg = Config::default().stability;
    let mut steps = cfg.steps.clone();
    steps.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let (mut unstable, mut stable) = (0, 0);
    let mut tri_euler = None;
    for &kind in &cfg.models {
        let model = VehicleModel::new(kind, p.clone(), t);
        for &method in &cfg.methods {
            let mut last = f64::INFINITY;
            for &h in &steps {
                let rep = model_stability_scan(&model, h, method, &cfg.speeds);
                let v = rep
                    .min_stable_speed
                    .ok_or_else(|| format!("{kind} {method} h={h}: never stable"))?;
                ensure(v <= last, || {
                    format!("{kind} {method}: min stable speed rises to {v} at h={h}")
                })?;
                last = v;
                if kind == ModelKind::Tricycle && method == IntegratorKind::Euler && h == 0.008 {
                    tri_euler = Some(v);
                }
                for sv in rep.speeds.iter().filter(|s| !s.stable && !s.indeterminate) {
                    let g = perturbed_growth(&model, sv.speed, h, method, 1e-3, 2.0)
                        .unwrap_or(f64::INFINITY);
                    ensure(g > 2.0, || {
                        format!(
                            "{kind} {method} h={h} v={}: flagged unstable, growth {g:.3}",
                            sv.speed
                        )
                    })?;
                    unstable += 1;
                }
                let g = perturbed_growth(&model, v + 2.0, h, method, 1e-3, 2.0)
                    .unwrap_or(f64::INFINITY);
                ensure(g <= 2.0, || {
                    format!(
                        "{kind} {method} h={h} v={}: flagged stable, growth {g:.3}",
                        v + 2.0
                    )
                })?;
                stable += 1;
            }
        }
    }
    let v = tri_euler.ok_or("tricycle Euler h=0.008 missing from the grid")?;
    ensure(v <= 8.0, || {
        format!("tricycle Euler h=0.008 min stable speed {v} > 8")
    })?;
    Ok(format!(
        "tricycle Euler h=0.008 min stable {v} m/s; monotone in h; {unstable} unstable triples diverge, {stable} stable triples stay bounded"
    ))
}

/// Plant `M_diff` while coasting on a circle of `radius` at lateral acceleration `ay`.
fn plant_coast_moment(radius: f64, ay: f64) -> Result<(f64, f64), String> {
    let (p, t) = defaults();
    let plant = Plant::new(p.clone(), t, PlantConfig::default()).map_err(|e| e.to_string())?;
    let v_target = (ay * radius).sqrt();
    let mut s = plant.refresh(&PlantState::rolling(0.0, 0.0, 0.0, 1.04 * v_target, &p));
    let gear = initial_gear(s.omega, &p);
    let (kp, ki) = (4.0, 20.0);
    let mut integral = 0.0;
    let dt = 0.01;
    let mut prev = s;
    for k in 0..1500 {
        let e = 1.0 / radius - s.r / s.vx.max(1.0);
        integral += e * dt;
        let delta_cmd = (p.l / radius + kp * e + ki * integral).clamp(-0.3, 0.3);
        s = plant
            .step(
                &s,
                &PlantInput {
                    throttle: 0.0,
                    brake: 0.0,
                    delta_cmd,
                    gear,
                },
                dt,
            )
            .map_err(|e| e.to_string())?;
        let ay_now = s.vx * s.r;
        if k > 150 && ay_now <= ay {
            let ay_prev = prev.vx * prev.r;
            let w = (ay_prev - ay) / (ay_prev - ay_now);
            return Ok((prev.m_diff + w * (s.m_diff - prev.m_diff), s.r));
        }
        prev = s;
    }
    Err(format!(
        "plant never coasted down to ay = {ay} on R = {radius}"
    ))
}

fn model_coast_moment(radius: f64, ay: f64) -> f64 {
    let (p, t) = defaults();
    let model = VehicleModel::new(ModelKind::Tricycle, p.clone(), t);
    let v = (ay * radius).sqrt();
    let x = CurvState {
        vx: v,
        r: v / radius,
        delta: p.l / radius,
        d: 0.0,
        ..Default::default()
    };
    let mut ctx = ModelContext { ay, m0_diff: 0.0 };
    for _ in 0..5 {
        ctx.m0_diff = model.m_diff(&x, &ctx);
    }
    ctx.m0_diff
}

fn yaw_moment_sign() -> Result<String, String> {
    let ay = 6.0;
    let mut out = Vec::new();
    for (label, tight, wide) in [
        (
            "plant",
            plant_coast_moment(25.0, ay)?,
            plant_coast_moment(250.0, ay)?,
        ),
        (
            "tricycle",
            (model_coast_moment(25.0, ay), 1.0),
            (model_coast_moment(250.0, ay), 1.0),
        ),
    ] {
        let ((m25, r25), (m250, r250)) = (tight, wide);
        ensure(
            m25 * r25.signum() < 0.0 && m250 * r250.signum() < 0.0,
            || format!("{label}: M_diff does not oppose the turn ({m25:.1}, {m250:.1})"),
        )?;
        ensure(m25.abs() > m250.abs(), || {
            format!(
                "{label}: |M(25)| = {:.1} <= |M(250)| = {:.1}",
                m25.abs(),
                m250.abs()
            )
        })?;
        out.push(format!(
            "{label} M(25) = {m25:.1} N m, M(250) = {m250:.1} N m"
        ));
    }
    Ok(format!("at ay = {ay} m/s^2: {}", out.join("; ")))
}

fn open_loop_direction() -> Result<String, String> {
    let cfg = Config::default();
    let g = monza_like(1.0).map_err(|e| e.to_string())?;
    let profile = generate_speed_profile(&g.track, &cfg.synthetic_limits(), cfg.planner.ds)
        .map_err(|e| e.to_string())?;
    let rep = cfg
        .open_loop_compare(
            &g.track,
            &g.segments,
            &profile,
            &ThrottleMap::synthetic(&cfg.vehicle),
        )
        .map_err(|e| e.to_string())?;
    let row = |seg: &str, model: &str| {
        rep.row(seg, model)
            .cloned()
            .ok_or_else(|| format!("no {model} row for {seg}"))
    };
    let tight: Vec<&str> = g
        .segments
        .iter()
        .filter(|s| s.kind == SegmentKind::Tight)
        .map(|s| s.name.as_str())
        .collect();
    let wide: Vec<&str> = g
        .segments
        .iter()
        .filter(|s| s.kind == SegmentKind::Wide)
        .map(|s| s.name.as_str())
        .collect();
    ensure(!tight.is_empty() && !wide.is_empty(), || {
        "track lacks tight or wide segments".into()
    })?;
    let mut out = Vec::new();
    for seg in &tight {
        let (tr, st) = (row(seg, "tricycle")?, row(seg, "single-track")?);
        ensure(tr.terminal_e_y.abs() < st.terminal_e_y.abs(), || {
            format!(
                "{seg}: |e_y| tricycle {:.3} >= single-track {:.3}",
                tr.terminal_e_y.abs(),
                st.terminal_e_y.abs()
            )
        })?;
        ensure(
            tr.terminal_e_psi_deg.abs() < st.terminal_e_psi_deg.abs(),
            || {
                format!(
                    "{seg}: |e_psi| tricycle {:.3} >= single-track {:.3}",
                    tr.terminal_e_psi_deg, st.terminal_e_psi_deg
                )
            },
        )?;
        out.push(format!(
            "{seg} e_y {:.2}/{:.2} m e_psi {:.2}/{:.2} deg",
            tr.terminal_e_y, st.terminal_e_y, tr.terminal_e_psi_deg, st.terminal_e_psi_deg
        ));
        for w in &wide {
            let sw = row(w, "single-track")?;
            ensure(st.terminal_e_y.signum() != sw.terminal_e_y.signum(), || {
                format!("single-track e_y sign same in {seg} and {w}")
            })?;
            ensure(
                st.terminal_e_psi_deg.signum() != sw.terminal_e_psi_deg.signum(),
                || format!("single-track e_psi sign same in {seg} and {w}"),
            )?;
        }
    }
    for w in &wide {
        let sw = row(w, "single-track")?;
        out.push(format!(
            "{w} single-track e_y {:.2} m e_psi {:.2} deg",
            sw.terminal_e_y, sw.terminal_e_psi_deg
        ));
    }
    Ok(format!(
        "tricycle/single-track terminal errors: {}; single-track sign flips tight vs wide",
        out.join(", ")
    ))
}

fn closed_loop_improvement() -> Result<String, String> {
    let g = monza_like(1.0).map_err(|e| e.to_string())?;
    let run = |kind: ModelKind| {
        let mut cfg = Config::default();
        cfg.mpc.model = kind;
        cfg.sim.laps = 1.0;
        cfg.sim.duration = 200.0;
        let scn = common::default_scenario(&cfg, g.track.clone(), g.segments.clone());
        run_closed_loop(&scn).map(|tel| compute_metrics(&tel, &g.segments))
    };
    let (tri, st) = std::thread::scope(|s| {
        let a = s.spawn(|| run(ModelKind::Tricycle));
        let b = s.spawn(|| run(ModelKind::SingleTrack));
        (a.join().unwrap(), b.join().unwrap())
    });
    let (tri, st) = (
        tri.map_err(|e| e.to_string())?,
        st.map_err(|e| e.to_string())?,
    );
    for (label, m) in [("tricycle", &tri), ("single-track", &st)] {
        ensure(m.termination == Termination::Completed, || {
            format!("{label} run ended with {:?}", m.termination)
        })?;
    }
    let (a, b) = (tri.overall.mean_abs_e_y, st.overall.mean_abs_e_y);
    ensure(a < b, || {
        format!("mean |e_y| tricycle {a:.4} >= single-track {b:.4}")
    })?;
    Ok(format!(
        "mean |e_y| tricycle {a:.3} m vs single-track {b:.3} m; laps {:.1} s / {:.1} s",
        tri.lap_time.unwrap_or(f64::NAN),
        st.lap_time.unwrap_or(f64::NAN)
    ))
}

fn profile_audit() -> Result<String, String> {
    let cfg = Config::default();
    let g = monza_like(1.0).map_err(|e| e.to_string())?;
    let limits = cfg.synthetic_limits();
    let prof =
        generate_speed_profile(&g.track, &limits, cfg.planner.ds).map_err(|e| e.to_string())?;
    let bad = audit_profile(&prof, &limits, 1e-6);
    ensure(bad.is_empty(), || {
        format!("{} audit violations, first {:?}", bad.len(), bad[0])
    })?;
    let ay = 14.0;
    let flat = AccelLimits::new(
        vec![[0.0, ay], [100.0, ay]],
        vec![[0.0, 8.0, -15.0], [100.0, 8.0, -15.0]],
        90.0,
        "flat",
    )
    .map_err(|e| e.to_string())?;
    let circle = circle_track(120.0, 720, 6.0);
    let cp = generate_speed_profile(&circle, &flat, 1.0).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (v, k) in cp.v.iter().zip(&cp.kappa) {
        let expect = (ay / k.abs()).sqrt();
        worst = worst.max((v - expect).abs() / expect);
    }
    ensure(worst <= 1e-4, || format!("circle relative error {worst:e}"))?;
    Ok(format!(
        "{} Monza-like samples pass the pair audit at 1e-6; circle max relative error {worst:.1e}",
        prof.s.len()
    ))
}

fn lmpc_feasibility() -> Result<String, String> {
    let cfg = LmpcConfig::default();
    let limits = Config::default().synthetic_limits();
    let n = cfg.horizon + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut worst_rec, mut worst_cap, mut worst_ell): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for case in 0..100 {
        let ay_cap: Vec<f64> = vec![rng.gen_range(8.0..16.0); n];
        let (c0, c1) = (rng.gen_range(5..40), rng.gen_range(5..20));
        let radius = rng.gen_range(20.0..300.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let rho: Vec<f64> = (0..n)
            .map(|t| {
                if (c0..c0 + c1).contains(&t) {
                    1.0 / radius
                } else {
                    0.0
                }
            })
            .collect();
        let v_bound = (1..n)
            .map(|t| curvature_speed_bound(ay_cap[t], rho[t], cfg.curvature_eps))
            .fold(limits.v_top, f64::min);
        let v0 = rng.gen_range(0.3..0.9) * v_bound;
        let a0 = rng.gen_range(-2.0..2.0);
        let v_hat: Vec<f64> = (0..n)
            .map(|_| (v0 * rng.gen_range(0.9..1.1)).min(v_bound))
            .collect();
        let preview = LmpcPreview {
            rho: rho.clone(),
            v_ref: vec![rng.gen_range(0.5..1.5) * v_bound; n],
            a_ref: vec![0.0; n],
            v_hat: v_hat.clone(),
            ay_cap: ay_cap.clone(),
        };
        let plan = lmpc_solve((v0, a0), &preview, &limits, &cfg)
            .map_err(|e| format!("case {case}: {e}"))?;
        let (mut v, mut a) = (v0, a0);
        for t in 0..cfg.horizon {
            v += plan.ts * a + 0.5 * plan.ts * plan.ts * plan.j[t];
            a += plan.ts * plan.j[t];
            worst_rec = worst_rec
                .max((v - plan.v[t + 1]).abs())
                .max((a - plan.a[t + 1]).abs());
        }
        for t in 1..n {
            let cap = (ay_cap[t] / rho[t].abs().max(cfg.curvature_eps)).sqrt();
            worst_cap = worst_cap.max(plan.v[t] - cap);
            let ay_hat = rho[t] * v_hat[t] * v_hat[t];
            let w = (1.0 - (ay_hat / limits.ay_max(v_hat[t])).powi(2))
                .max(0.0)
                .sqrt();
            let (lo, hi) = (limits.ax_min(v_hat[t]) * w, limits.ax_max(v_hat[t]) * w);
            worst_ell = worst_ell.max(lo - plan.a[t]).max(plan.a[t] - hi);
        }
        ensure(!plan.softened, || {
            format!("case {case}: feasible preview needed slack")
        })?;
    }
    ensure(worst_rec <= 1e-9, || {
        format!("recursion residual {worst_rec:e}")
    })?;
    ensure(worst_cap <= 1e-6, || {
        format!("speed cap exceeded by {worst_cap:e}")
    })?;
    ensure(worst_ell <= 1e-6, || {
        format!("ellipse exceeded by {worst_ell:e}")
    })?;
    Ok(format!(
        "100 plans: recursion residual {worst_rec:.1e}, cap excess {:.1e}, ellipse excess {:.1e}",
        worst_cap.max(0.0),
        worst_ell.max(0.0)
    ))
}

fn low_level_loop() -> Result<String, String> {
    let mut out = Vec::new();
    for (v0, v1) in [(0.0, 10.0), (10.0, 20.0), (30.0, 20.0)] {
        let run = speed_step(v0, v1, 12.0);
        let t = settling_time(&run, v1, 0.02)
            .ok_or_else(|| format!("{v0} -> {v1} never settles within 2%"))?;
        ensure(t <= 8.0, || format!("{v0} -> {v1} settles at {t:.2} s"))?;
        ensure(
            run.iter().all(|s| !(s.throttle > 0.0 && s.brake > 0.0)),
            || format!("{v0} -> {v1}: pedal overlap"),
        )?;
        out.push(format!("{v0} -> {v1} m/s settles in {t:.2} s"));
    }
    Ok(format!("{}; no pedal overlap", out.join(", ")))
}

fn determinism() -> Result<String, String> {
    let (t1, m1) = golden_run();
    let (t2, m2) = golden_run();
    ensure(t1 == t2, || "two runs with the same seed differ".into())?;
    let json = m1.to_json().map_err(|e| e.to_string())?;
    ensure(json == m2.to_json().map_err(|e| e.to_string())?, || {
        "metrics differ between runs".into()
    })?;
    let stored =
        std::fs::read_to_string(data_dir().join(GOLDEN_METRICS)).map_err(|e| e.to_string())?;
    ensure(json == stored, || {
        "metrics differ from the stored golden report".into()
    })?;
    Ok(format!(
        "{} ticks bit-identical twice; metrics equal the stored report byte for byte",
        t1.records.len()
    ))
}

fn mpc_sanity() -> Result<String, String> {
    let (p, t) = defaults();
    let mpc = Mpc::new(MpcConfig::default(), p, t).map_err(|e| e.to_string())?;
    let cases = [
        (
            circle_track(120.0, 600, 6.0),
            CurvState {
                n: 0.5,
                vx: 25.0,
                r: 0.2,
                ..Default::default()
            },
            27.0,
        ),
        (
            circle_track(40.0, 400, 6.0),
            CurvState {
                n: -0.4,
                mu: 0.05,
                vx: 15.0,
                r: 0.35,
                ..Default::default()
            },
            15.0,
        ),
        (
            common::straight_track(600.0, 6.0),
            CurvState {
                n: 1.0,
                vx: 40.0,
                ..Default::default()
            },
            45.0,
        ),
    ];
    let (mut worst_defect, mut worst_cost): (f64, f64) = (0.0, 0.0);
    for (i, (track, x, v)) in cases.iter().enumerate() {
        let vref = vec![*v; mpc.cfg.horizon + 1];
        let mut warm = MpcSolution::cold_start(x, &mpc.cfg);
        let mut sol = None;
        for _ in 0..30 {
            let s = mpc.solve(x, track, &vref, &warm);
            warm = s.clone();
            if s.status == SolveStatus::Converged {
                sol = Some(s);
                break;
            }
        }
        let sol = sol.ok_or_else(|| format!("case {i} never converged"))?;
        let rep = mpc.check_solution(&sol, track).map_err(|e| e.to_string())?;
        worst_defect = worst_defect.max(rep.max_dynamics_defect);
        let j = evaluate_cost(
            &sol.states,
            &sol.inputs,
            &sol.v_ref,
            &mpc.cfg,
            &mpc.model.params,
        );
        worst_cost = worst_cost.max((j - sol.cost).abs() / j.abs().max(1e-12));
    }
    ensure(worst_defect < 1e-3, || {
        format!("dynamics defect {worst_defect:e}")
    })?;
    ensure(worst_cost <= 1e-6, || {
        format!("cost mismatch {worst_cost:e}")
    })?;

    let g = monza_like(1.0).map_err(|e| e.to_string())?;
    let mut cfg = Config::default();
    cfg.sim.duration = 8.0;
    cfg.sim.record_timing = true;
    let tel = run_closed_loop(&common::default_scenario(&cfg, g.track, g.segments))
        .map_err(|e| e.to_string())?;
    let mut times: Vec<f64> = tel
        .records
        .iter()
        .filter(|r| r.mpc_solved)
        .map(|r| r.mpc_time * 1e3)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ensure(!times.is_empty(), || "no MPC solves recorded".into())?;
    let q = |f: f64| times[((times.len() - 1) as f64 * f).round() as usize];
    let (median, p90, max) = (q(0.5), q(0.9), q(1.0));
    let artifact = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("mpc_benchmark.json");
    let body = serde_json::json!({
        "horizon": cfg.mpc.horizon,
        "dt": cfg.mpc.dt,
        "h": cfg.mpc.h,
        "sqp_iterations": cfg.mpc.sqp_iterations,
        "solves": times.len(),
        "median_ms": median,
        "p90_ms": p90,
        "max_ms": max,
        "target_ms": 10.0,
    });
    std::fs::write(&artifact, serde_json::to_string_pretty(&body).unwrap())
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "defect {worst_defect:.1e}, cost mismatch {worst_cost:.1e}; T=65 median solve {median:.1} ms (p90 {p90:.1}, target 10 ms, informational) -> {}",
        artifact.display()
    ))
}
