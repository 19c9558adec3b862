use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lowlevel::{select_gear, LowLevel, LowLevelInput, LowLevelOutput, PiState};
use crate::models::{front_axle_load, rear_axle_load, CurvState};
use crate::mpc::{Mpc, MpcSolution, SolveStatus};
use crate::planner::{LonPlan, LonPlanner};

use super::plant::{Plant, PlantInput, PlantState, FL, FR, RL, RR};
use super::scenario::{NoiseConfig, Scenario};
use super::telemetry::{Telemetry, TelemetryRecord, TelemetrySink, Termination};
use super::{initial_gear, measure};

struct Noise {
    rng: ChaCha8Rng,
    cfg: NoiseConfig,
}

impl Noise {
    fn sample(&mut self, std: f64) -> f64 {
        if std == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, std)
            .map(|d| d.sample(&mut self.rng))
            .unwrap_or(0.0)
    }
}

fn lerp_states(sol: &MpcSolution, tau: f64, dt: f64) -> CurvState {
    let t = sol.inputs.len();
    let pos = (tau / dt).max(0.0);
    let k = pos.floor() as usize;
    if k >= t {
        return sol.states[t];
    }
    let a = sol.states[k].to_array();
    let b = sol.states[k + 1].to_array();
    let w = pos - k as f64;
    let mut out = a;
    for i in 0..out.len() {
        out[i] = a[i] + w * (b[i] - a[i]);
    }
    CurvState::from_array(&out)
}

pub fn run_closed_loop(scn: &Scenario) -> Result<Telemetry> {
    run_closed_loop_with_sink(scn, None)
}

/// Runs the full stack against the plant. Configuration problems are
/// errors; off-track and non-finite states end the run with partial
/// telemetry and a failure [`Termination`].
pub fn run_closed_loop_with_sink(
    scn: &Scenario,
    sink: Option<&TelemetrySink>,
) -> Result<Telemetry> {
    scn.validate()?;
    let sc = &scn.sim;
    let track = &scn.track;
    let (plant_params, plant_tires) = sc.perturbation.apply(&scn.params, &scn.tires);
    let plant = Plant::new(plant_params, plant_tires, scn.plant.clone())?;
    let mpc = Mpc::new(scn.mpc.clone(), scn.params.clone(), scn.tires)?;
    let mut lon = LonPlanner::new(scn.lmpc.clone(), scn.limits.clone(), scn.profile.clone())?;
    let low = LowLevel::new(
        scn.lowlevel.clone(),
        scn.params.clone(),
        scn.tires,
        scn.throttle_map.clone(),
    )?;
    let p = &scn.params;
    let (mpc_div, lmpc_div, low_div) = sc.divisors();
    let low_dt = sc.lowlevel_period;
    let dt = scn.mpc.dt;
    let mut noise = Noise {
        rng: ChaCha8Rng::seed_from_u64(sc.seed),
        cfg: sc.noise,
    };

    let mut state: PlantState = plant.refresh(&scn.initial_state()?);
    let mut gear = initial_gear(state.omega, p);
    let mut delta_cmd = state.delta;
    let mut d_cmd = 0.0;
    let mut sol: Option<(MpcSolution, f64)> = None;
    let mut plan: Option<(LonPlan, f64)> = None;
    let mut pi = PiState::default();
    let mut low_out = LowLevelOutput::default();
    let mut failing = false;
    let mut seed_s: Option<f64> = None;
    let mut prev_s = f64::NAN;
    let mut progress = 0.0;
    let length = track.total_length();
    let goal = if track.is_closed() {
        sc.laps * length
    } else {
        length - track.clamp_s(sc.start_s)
    };
    let mut records = Vec::new();
    let push = |records: &mut Vec<TelemetryRecord>, rec: TelemetryRecord| {
        if let Some(s) = sink {
            s.send(&rec);
        }
        records.push(rec);
    };

    let mut k: usize = 0;
    let termination = loop {
        let t = k as f64 * sc.tick;
        let m = match measure(&state, track, seed_s) {
            Ok(m) => m,
            Err(Error::Projection(_)) => break Termination::Lost { t },
            Err(e) => return Err(e),
        };
        let pose = m.pose;
        seed_s = Some(pose.s);
        if prev_s.is_finite() {
            progress += track.progress_delta(prev_s, pose.s);
        }
        prev_s = pose.s;
        let (wl, wr) = track.widths_clamped(pose.s);
        let bound = if pose.n >= 0.0 { wl } else { wr };

        let mut rec = TelemetryRecord {
            t,
            x: state.x,
            y: state.y,
            psi: state.psi,
            vx: state.vx,
            vy: state.vy,
            r: state.r,
            ax: state.ax,
            ay: state.ay,
            delta: state.delta,
            omega: state.omega,
            s: pose.s,
            progress,
            e_y: pose.n,
            e_psi_deg: pose.mu.to_degrees(),
            bound,
            gear,
            rpm: state.rpm,
            fz_fl: state.wheels.fz[FL],
            fz_fr: state.wheels.fz[FR],
            fz_rl: state.wheels.fz[RL],
            fz_rr: state.wheels.fz[RR],
            slip_rl: state.wheels.slip_ratio[0],
            slip_rr: state.wheels.slip_ratio[1],
            m_diff: state.m_diff,
            v_profile: scn.profile.speed_at(pose.s),
            ..Default::default()
        };
        if pose.n.abs() > bound + sc.off_track_margin {
            push(&mut records, rec);
            break Termination::OffTrack {
                t,
                n: pose.n,
                bound,
            };
        }
        if progress >= goal - 1e-9 {
            push(&mut records, rec);
            break Termination::Completed;
        }
        if t >= sc.duration - 1e-9 {
            push(&mut records, rec);
            break Termination::TimeLimit;
        }

        let nc = noise.cfg;
        let x_hat = CurvState {
            s: pose.s,
            n: pose.n + noise.sample(nc.n_std),
            mu: pose.mu + noise.sample(nc.mu_std),
            vx: (m.vx + noise.sample(nc.vx_std)).max(0.0),
            vy: m.vy,
            r: m.r + noise.sample(nc.r_std),
            delta: delta_cmd,
            d: d_cmd,
        };

        if k.is_multiple_of(lmpc_div) {
            let (elapsed, a0) = match &plan {
                Some((pl, t0)) => (t - t0, pl.sample(&pl.a, t - t0)),
                None => (0.0, 0.0),
            };
            let lo = scn.limits.ax_min(x_hat.vx);
            let hi = scn.limits.ax_max(x_hat.vx);
            match lon.plan(pose.s, x_hat.vx, a0.clamp(lo, hi), elapsed, track) {
                Ok(pl) => {
                    rec.lmpc_softened = pl.softened;
                    plan = Some((pl, t));
                }
                Err(e) if e.is_config() => return Err(e),
                Err(_) => {}
            }
        }

        if k.is_multiple_of(mpc_div) {
            let horizon = scn.mpc.horizon;
            let v_ref: Vec<f64> = (0..=horizon)
                .map(|j| match &plan {
                    Some((pl, t0)) => pl.sample(&pl.v, t - t0 + j as f64 * dt),
                    None => scn.profile.speed_at(pose.s),
                })
                .collect();
            let warm = match &sol {
                Some((prev, t0)) if !failing => prev.shifted_by(t - t0, dt),
                _ => MpcSolution::cold_start(&x_hat, &scn.mpc),
            };
            let next = mpc.solve(&x_hat, track, &v_ref, &warm);
            rec.mpc_solved = true;
            rec.mpc_status = Some(next.status);
            rec.mpc_cost = next.cost;
            rec.mpc_iterations = next.iterations;
            if sc.record_timing {
                rec.mpc_time = next.solve_time;
            }
            if next.status == SolveStatus::Failed {
                failing = true;
            } else {
                failing = false;
                sol = Some((next, t));
            }
        }
        rec.mpc_failed = failing;

        let v_low = match (&sol, failing) {
            (Some((s, t0)), false) => {
                let c = lerp_states(s, t - t0, dt);
                delta_cmd = c.delta;
                d_cmd = c.d;
                c.vx
            }
            _ => rec.v_profile.min(m.vx),
        };

        if k.is_multiple_of(low_div) {
            let a_ref = d_cmd - (p.drag(m.vx) + p.rolling(m.vx)) / p.m;
            let inp = LowLevelInput {
                v_ref: v_low,
                a_ref,
                vx: m.vx,
                ax: m.ax,
                rpm: m.rpm,
                gear,
                fz_f: front_axle_load(m.vx, d_cmd, p),
                fz_r: rear_axle_load(m.vx, d_cmd, p),
            };
            let last_throttle = low_out.throttle;
            let (out, next) = low.tick(&inp, low_dt, &pi);
            low_out = out;
            pi = next;
            if failing {
                low_out.throttle = low_out
                    .throttle
                    .min(last_throttle * sc.failure_throttle_decay);
            }
            rec.v_low_ref = v_low;
            rec.a_low_ref = a_ref;
        }
        rec.delta_cmd = delta_cmd;
        rec.d_cmd = d_cmd;
        rec.throttle = low_out.throttle;
        rec.brake = low_out.brake;
        rec.lowlevel_saturated = low_out.saturated;
        rec.v_plan = match &plan {
            Some((pl, t0)) => pl.sample(&pl.v, t - t0),
            None => rec.v_profile,
        };
        push(&mut records, rec);

        gear = select_gear(m.rpm, gear, p);
        let input = PlantInput {
            throttle: low_out.throttle,
            brake: low_out.brake,
            delta_cmd,
            gear,
        };
        match plant.step(&state, &input, sc.tick) {
            Ok(next) => state = next,
            Err(Error::Integration(_)) => break Termination::NonFinite { t: t + sc.tick },
            Err(e) => return Err(e),
        }
        k += 1;
    };

    Ok(Telemetry {
        tick: sc.tick,
        records,
        termination,
    })
}
