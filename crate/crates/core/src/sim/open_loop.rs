//! Open-loop prediction error of the controller models against plant
//! truth, over a fixed horizon starting in each named segment.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowlevel::{select_gear, LowLevel, LowLevelConfig, LowLevelInput, PiState, ThrottleMap};
use crate::models::{lateral_accel, CurvState, ModelContext, ModelKind, RateInput, VehicleModel};
use crate::numerics::{step, IntegratorKind};
use crate::params::{TireParams, VehicleParams};
use crate::planner::SpeedProfile;
use crate::track::{wrap_to_pi, Track};
use crate::trackgen::{NamedSegment, SegmentKind};

use super::metrics::segment_index;
use super::plant::{Plant, PlantConfig, PlantInput, PlantState};
use super::{initial_gear, measure};

/// Pure-pursuit driver used to record plant-truth replays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub dt: f64,
    pub lookahead_min: f64,
    /// Lookahead seconds of travel.
    pub lookahead_time: f64,
    /// Fraction of the offline profile speed the driver targets.
    pub speed_fraction: f64,
    pub horizon: f64,
    /// Integration step of the model rollouts.
    pub h: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            lookahead_min: 6.0,
            lookahead_time: 0.35,
            speed_fraction: 0.9,
            horizon: 2.6,
            h: 0.005,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.lookahead_min > 0.0
            && self.lookahead_time >= 0.0
            && self.speed_fraction > 0.0
            && self.horizon > 0.0
            && self.h > 0.0
            && self.h <= self.dt;
        if !ok {
            return Err(Error::Config(
                "replay settings must be positive with h <= dt".into(),
            ));
        }
        Ok(())
    }
}

/// Recorded plant trajectory with the inputs applied at each tick.
#[derive(Debug, Clone)]
pub struct Replay {
    pub dt: f64,
    pub states: Vec<PlantState>,
    pub inputs: Vec<PlantInput>,
    /// Track progress of each state.
    pub s: Vec<f64>,
}

impl Replay {
    /// Realized longitudinal tire force over mass, the model's `D`.
    pub fn d_equiv(&self, k: usize, m: f64) -> f64 {
        self.states[k].wheels.fx.iter().sum::<f64>() / m
    }
}

/// Drives one lap (or to the end of an open track) with pure pursuit on
/// steering and the low-level controller on speed.
#[allow(clippy::too_many_arguments)]
pub fn record_replay(
    track: &Track,
    profile: &SpeedProfile,
    params: &VehicleParams,
    tires: &TireParams,
    plant_cfg: &PlantConfig,
    lowlevel: &LowLevelConfig,
    map: &ThrottleMap,
    cfg: &ReplayConfig,
) -> Result<Replay> {
    cfg.validate()?;
    let plant = Plant::new(params.clone(), *tires, plant_cfg.clone())?;
    let low = LowLevel::new(lowlevel.clone(), params.clone(), *tires, map.clone())?;
    let (x0, y0, psi0) = track.centerline_at(0.0)?;
    let mut state = plant.refresh(&PlantState::rolling(
        x0,
        y0,
        psi0,
        cfg.speed_fraction * profile.speed_at(0.0),
        params,
    ));
    let mut gear = initial_gear(state.omega, params);
    let mut pi = PiState::default();
    let length = track.total_length();
    let mut out = Replay {
        dt: cfg.dt,
        states: Vec::new(),
        inputs: Vec::new(),
        s: Vec::new(),
    };
    let mut seed = None;
    let mut progress = 0.0;
    let mut prev_s = 0.0;
    let mut tail: Option<usize> = None;
    let max_ticks = (20.0 * length / (cfg.speed_fraction * 5.0) / cfg.dt) as usize;
    for _ in 0..max_ticks {
        let m = measure(&state, track, seed)?;
        seed = Some(m.pose.s);
        progress += track.progress_delta(prev_s, m.pose.s);
        prev_s = m.pose.s;
        if !track.is_closed() && m.pose.s >= length - 1.0 {
            break;
        }
        // closed tracks run one horizon past the lap so the last segment gets a window
        if progress >= length - 1e-6 {
            let left = tail.get_or_insert((cfg.horizon / cfg.dt).ceil() as usize + 1);
            if *left == 0 {
                break;
            }
            *left -= 1;
        }
        let lookahead = cfg.lookahead_min.max(cfg.lookahead_time * state.vx);
        let (tx, ty, _) = track.centerline_at(track.clamp_s(m.pose.s + lookahead))?;
        let alpha = wrap_to_pi((ty - state.y).atan2(tx - state.x) - state.psi);
        let delta_cmd = (2.0 * params.l * alpha.sin() / lookahead).atan();
        let v_ref = cfg.speed_fraction * profile.speed_at(m.pose.s);
        let a_ref = cfg.speed_fraction * cfg.speed_fraction * profile.accel_at(m.pose.s);
        let inp = LowLevelInput {
            v_ref,
            a_ref,
            vx: m.vx,
            ax: m.ax,
            rpm: m.rpm,
            gear,
            fz_f: state.wheels.fz[0] + state.wheels.fz[1],
            fz_r: state.wheels.fz[2] + state.wheels.fz[3],
        };
        let (cmd, next) = low.tick(&inp, cfg.dt, &pi);
        pi = next;
        gear = select_gear(m.rpm, gear, params);
        let input = PlantInput {
            throttle: cmd.throttle,
            brake: cmd.brake,
            delta_cmd,
            gear,
        };
        out.states.push(state);
        out.inputs.push(input);
        out.s.push(m.pose.s);
        state = plant.step(&state, &input, cfg.dt)?;
    }
    Ok(out)
}

/// A predictor compared against the replay.
#[derive(Debug, Clone)]
pub enum CompareModel {
    /// The plant itself, re-stepped under the recorded inputs.
    Plant(Plant),
    Vehicle(VehicleModel),
}

impl CompareModel {
    pub fn label(&self) -> String {
        match self {
            CompareModel::Plant(_) => "plant".into(),
            CompareModel::Vehicle(v) => v.kind.to_string(),
        }
    }
}

/// Predicted Cartesian poses `(x, y, psi)` at every replay tick of the window.
fn predict_window(
    model: &CompareModel,
    replay: &Replay,
    start: usize,
    ticks: usize,
    h: f64,
) -> Result<Vec<(f64, f64, f64)>> {
    let s0 = replay.states[start];
    let mut out = Vec::with_capacity(ticks + 1);
    out.push((s0.x, s0.y, s0.psi));
    match model {
        CompareModel::Plant(plant) => {
            let mut s = s0;
            for k in start..start + ticks {
                s = plant.step(&s, &replay.inputs[k], replay.dt)?;
                out.push((s.x, s.y, s.psi));
            }
        }
        CompareModel::Vehicle(vm) => {
            // with zero curvature the curvilinear pose is the Cartesian pose
            let m = vm.params.m;
            let mut x = CurvState {
                s: s0.x,
                n: s0.y,
                mu: s0.psi,
                vx: s0.vx,
                vy: s0.vy,
                r: s0.r,
                delta: s0.delta,
                d: replay.d_equiv(start, m),
            };
            let mut ctx = ModelContext {
                ay: s0.ay,
                m0_diff: 0.0,
            };
            ctx.m0_diff = vm.m_diff(&x, &ctx);
            let micro = ((replay.dt / h).round() as usize).max(1);
            let hh = replay.dt / micro as f64;
            let zero = RateInput::default();
            for k in start..start + ticks {
                x.delta = replay.states[k].delta;
                x.d = replay.d_equiv(k, m);
                for _ in 0..micro {
                    let c = ctx;
                    let f = |a: &[f64; 8]| {
                        vm.derivative(&CurvState::from_array(a), &zero, 0.0, &c)
                            .map(|d| d.to_array())
                    };
                    let next = step(&f, &x.to_array(), hh, IntegratorKind::Rk4)?;
                    x = CurvState::from_array(&next);
                    x.vx = x.vx.max(0.0);
                    let dx = vm.derivative(&x, &zero, 0.0, &ctx)?;
                    ctx.ay = lateral_accel(&x, &dx);
                    ctx.m0_diff = vm.m_diff(&x, &ctx);
                }
                out.push((x.s, x.n, wrap_to_pi(x.mu)));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub segment: String,
    pub kind: SegmentKind,
    pub radius: f64,
    pub model: String,
    pub start_time: f64,
    pub start_speed: f64,
    /// Errors of the prediction in the truth frame, signed so that positive
    /// means the model turned further into the corner than the plant.
    pub terminal_e_y: f64,
    pub terminal_e_psi_deg: f64,
    pub max_abs_e_y: f64,
    pub max_abs_e_psi_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub horizon: f64,
    /// Rear cornering-stiffness scale applied to the single-track model.
    pub single_track_rear_scale: Option<f64>,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn row(&self, segment: &str, model: &str) -> Option<&CompareRow> {
        self.rows
            .iter()
            .find(|r| r.segment == segment && r.model == model)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Table with one line per segment and `e_y`/`e_psi` columns per model.
    pub fn render_text(&self) -> String {
        let mut models: Vec<&str> = Vec::new();
        let mut segments: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
            if !segments.contains(&r.segment.as_str()) {
                segments.push(&r.segment);
            }
        }
        let mut out = String::new();
        let w = |m: &str| m.len() + 12;
        let _ = write!(out, "{:<16}{:>8}", "segment", "R [m]");
        for m in &models {
            let _ = write!(
                out,
                "{:>w$}{:>w$}",
                format!("{m} e_y[m]"),
                format!("{m} e_psi[deg]"),
                w = w(m)
            );
        }
        out.push('\n');
        for seg in segments {
            let radius = self
                .rows
                .iter()
                .find(|r| r.segment == seg)
                .map(|r| r.radius)
                .unwrap_or(f64::INFINITY);
            let rtxt = if radius.is_finite() {
                format!("{radius:.0}")
            } else {
                "-".into()
            };
            let _ = write!(out, "{seg:<16}{rtxt:>8}");
            for m in &models {
                match self.row(seg, m) {
                    Some(r) => {
                        let _ = write!(
                            out,
                            "{:>w$.3}{:>w$.3}",
                            r.terminal_e_y,
                            r.terminal_e_psi_deg,
                            w = w(m)
                        );
                    }
                    None => {
                        let _ = write!(out, "{:>w$}{:>w$}", "-", "-", w = w(m));
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// First replay tick inside each segment with a full horizon remaining.
pub fn window_starts(
    replay: &Replay,
    segments: &[NamedSegment],
    ticks: usize,
) -> Vec<Option<usize>> {
    let mut starts = vec![None; segments.len()];
    for (k, s) in replay.s.iter().enumerate() {
        if k + ticks >= replay.states.len() {
            break;
        }
        if let Some(i) = segment_index(segments, *s) {
            if starts[i].is_none() {
                starts[i] = Some(k);
            }
        }
    }
    starts
}

fn turn_sign(track: &Track, seg: &NamedSegment) -> f64 {
    let n = 50;
    let total: f64 = (0..=n)
        .map(|i| {
            track.curvature_clamped(seg.s_start + (seg.s_end - seg.s_start) * i as f64 / n as f64)
        })
        .sum();
    if total < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Rolls each model over `horizon` seconds from the first tick of every
/// segment and reports its pose error against the replay.
pub fn run_open_loop_compare(
    models: &[CompareModel],
    replay: &Replay,
    track: &Track,
    segments: &[NamedSegment],
    horizon: f64,
    h: f64,
) -> Result<CompareReport> {
    let ticks = (horizon / replay.dt).round() as usize;
    if ticks == 0 {
        return Err(Error::Config(
            "compare horizon shorter than one replay tick".into(),
        ));
    }
    let starts = window_starts(replay, segments, ticks);
    let mut rows = Vec::new();
    for (seg, start) in segments.iter().zip(starts) {
        let Some(start) = start else { continue };
        let sign = turn_sign(track, seg);
        for model in models {
            let pred = predict_window(model, replay, start, ticks, h)?;
            let mut row = CompareRow {
                segment: seg.name.clone(),
                kind: seg.kind,
                radius: seg.radius,
                model: model.label(),
                start_time: start as f64 * replay.dt,
                start_speed: replay.states[start].vx,
                terminal_e_y: 0.0,
                terminal_e_psi_deg: 0.0,
                max_abs_e_y: 0.0,
                max_abs_e_psi_deg: 0.0,
            };
            for (j, (px, py, ppsi)) in pred.iter().enumerate() {
                let truth = &replay.states[start + j];
                let (sp, cp) = truth.psi.sin_cos();
                let e_y = sign * (-sp * (px - truth.x) + cp * (py - truth.y));
                let e_psi = sign * wrap_to_pi(ppsi - truth.psi).to_degrees();
                row.max_abs_e_y = row.max_abs_e_y.max(e_y.abs());
                row.max_abs_e_psi_deg = row.max_abs_e_psi_deg.max(e_psi.abs());
                row.terminal_e_y = e_y;
                row.terminal_e_psi_deg = e_psi;
            }
            rows.push(row);
        }
    }
    Ok(CompareReport {
        horizon,
        single_track_rear_scale: None,
        rows,
    })
}

/// Golden-section search over the single-track rear cornering-stiffness
/// scale, minimizing the summed squared terminal lateral error over all
/// cornering segments.
pub fn calibrate_single_track(
    replay: &Replay,
    segments: &[NamedSegment],
    params: &VehicleParams,
    tires: &TireParams,
    cfg: &ReplayConfig,
    bounds: (f64, f64),
) -> Result<f64> {
    let corners: Vec<NamedSegment> = segments
        .iter()
        .filter(|s| s.kind != SegmentKind::Straight)
        .cloned()
        .collect();
    let ticks = (cfg.horizon / replay.dt).round() as usize;
    let starts = window_starts(replay, &corners, ticks);
    let cost = |log_scale: f64| -> f64 {
        let model = CompareModel::Vehicle(VehicleModel::new(
            ModelKind::SingleTrack,
            params.clone(),
            (*tires).with_rear_stiffness_scale(log_scale.exp()),
        ));
        let mut total = 0.0;
        for start in starts.iter().flatten().copied() {
            match predict_window(&model, replay, start, ticks, cfg.h) {
                Ok(pred) => {
                    let (px, py, _) = *pred.last().unwrap();
                    let truth = &replay.states[start + ticks];
                    let (sp, cp) = truth.psi.sin_cos();
                    let e = -sp * (px - truth.x) + cp * (py - truth.y);
                    total += e * e;
                }
                Err(_) => total += 1e6,
            }
        }
        total
    };
    let (mut a, mut b) = (bounds.0.ln(), bounds.1.ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    for _ in 0..40 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = cost(d);
        }
        if (b - a).abs() < 1e-4 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}
