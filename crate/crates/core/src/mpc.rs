//! Nonlinear path-tracking MPC solved by real-time iterations.
//!
//! Each iteration rolls the micro-stepped model forward from the measured
//! state, linearizes every stage around that rollout, solves a sparse QP in
//! the deviations and line-searches the nonlinear rollout on a merit
//! function. The returned trajectory is always a nonlinear rollout of the
//! returned inputs, so it satisfies the prediction model exactly.

use std::time::Instant;

use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    lateral_accel, slip_angles, CurvState, ModelContext, ModelKind, RateInput, VehicleModel,
    INPUT_DIM, STATE_DIM,
};
use crate::numerics::{linearize, micro_step, micro_step_count, IntegratorKind};
use crate::params::{VehicleParams, GRAVITY};
use crate::qp::{QpBuilder, QpSettings, QpStatus};
use crate::track::Track;

pub type StateMat = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputMat = SMatrix<f64, STATE_DIM, INPUT_DIM>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub h: f64,
    pub integrator: IntegratorKind,
    pub model: ModelKind,
    /// Blend in the kinematic model at low speed.
    pub blend: bool,
    pub q_n: f64,
    pub q_mu: f64,
    pub q_v: f64,
    pub q_r: f64,
    pub q_b: f64,
    pub r_ddelta: f64,
    pub r_dd: f64,
    pub delta_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub ddelta_max: f64,
    pub dd_max: f64,
    /// Friction-ellipse semi-axes on (D, vx * r) at zero speed.
    pub ellipse_ax_max: f64,
    pub ellipse_ax_min: f64,
    pub ellipse_ay_max: f64,
    /// Grow the semi-axes with the total vertical load including downforce.
    pub ellipse_downforce: bool,
    /// Clearance kept from the lane edge on top of the vehicle half-width.
    pub track_margin: f64,
    pub slack_weight: f64,
    pub sqp_iterations: usize,
    pub tolerance: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 65,
            dt: 0.04,
            h: 0.008,
            integrator: IntegratorKind::Rk4,
            model: ModelKind::Tricycle,
            blend: true,
            q_n: 3.0,
            q_mu: 30.0,
            q_v: 1.0,
            q_r: 5.0,
            q_b: 10.0,
            r_ddelta: 200.0,
            r_dd: 0.05,
            delta_max: 0.3,
            d_min: -21.0,
            d_max: 9.0,
            ddelta_max: 0.8,
            dd_max: 40.0,
            ellipse_ax_max: 10.0,
            ellipse_ax_min: -15.0,
            ellipse_ay_max: 15.5,
            ellipse_downforce: true,
            track_margin: 0.3,
            slack_weight: 1e4,
            sqp_iterations: 2,
            tolerance: 1e-4,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("mpc.horizon must be positive".into()));
        }
        micro_step_count(self.dt, self.h)?;
        let weights = [
            ("q_n", self.q_n),
            ("q_mu", self.q_mu),
            ("q_v", self.q_v),
            ("q_r", self.q_r),
            ("q_b", self.q_b),
            ("r_ddelta", self.r_ddelta),
            ("r_dd", self.r_dd),
            ("slack_weight", self.slack_weight),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("mpc.{name} must be >= 0, got {w}")));
            }
        }
        if !(self.delta_max > 0.0
            && self.d_min < 0.0
            && self.d_max > 0.0
            && self.ddelta_max > 0.0
            && self.dd_max > 0.0)
        {
            return Err(Error::Config(
                "mpc input boxes must contain zero strictly".into(),
            ));
        }
        if !(self.ellipse_ax_max > 0.0 && self.ellipse_ax_min < 0.0 && self.ellipse_ay_max > 0.0) {
            return Err(Error::Config(
                "mpc ellipse semi-axes must be nonzero".into(),
            ));
        }
        Ok(())
    }

    pub fn horizon_time(&self) -> f64 {
        self.horizon as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// Track or ellipse slack is active in the returned trajectory.
    Softened,
    /// No usable iterate; the warm start is returned.
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpcSolution {
    pub states: Vec<CurvState>,
    pub inputs: Vec<RateInput>,
    /// Per-stage model context; `contexts[t].m0_diff` is the yaw-moment schedule.
    pub contexts: Vec<ModelContext>,
    pub v_ref: Vec<f64>,
    pub cost: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Per-stage track-bound and ellipse violations of the returned rollout.
    pub track_slack: Vec<f64>,
    pub ellipse_slack: Vec<f64>,
    pub solve_time: f64,
}

impl MpcSolution {
    /// Constant-velocity prediction used when no previous solution exists.
    pub fn cold_start(x_hat: &CurvState, cfg: &MpcConfig) -> Self {
        let t = cfg.horizon;
        let states = (0..=t)
            .map(|k| CurvState {
                s: x_hat.s + x_hat.vx * cfg.dt * k as f64,
                ..*x_hat
            })
            .collect();
        Self {
            states,
            inputs: vec![RateInput::default(); t],
            contexts: vec![ModelContext::default(); t],
            v_ref: vec![x_hat.vx; t + 1],
            cost: 0.0,
            status: SolveStatus::Converged,
            iterations: 0,
            track_slack: vec![0.0; t + 1],
            ellipse_slack: vec![0.0; t + 1],
            solve_time: 0.0,
        }
    }

    pub fn m0diff_schedule(&self) -> Vec<f64> {
        self.contexts.iter().map(|c| c.m0_diff).collect()
    }

    /// Warm start advanced by `elapsed` seconds: inputs and states are
    /// resampled at `t * dt + elapsed`, holding the last stage.
    pub fn shifted_by(&self, elapsed: f64, dt: f64) -> Self {
        let t = self.inputs.len();
        let at_state = |time: f64| -> CurvState {
            let pos = (time / dt).max(0.0);
            let k = (pos.floor() as usize).min(t);
            if k >= t {
                return self.states[t];
            }
            let a = self.states[k].to_array();
            let b = self.states[k + 1].to_array();
            let w = pos - k as f64;
            let mut out = [0.0; STATE_DIM];
            for i in 0..STATE_DIM {
                out[i] = a[i] + w * (b[i] - a[i]);
            }
            CurvState::from_array(&out)
        };
        let at_index = |time: f64| -> usize {
            ((time / dt + 1e-9).floor().max(0.0) as usize).min(t.saturating_sub(1))
        };
        let states = (0..=t).map(|k| at_state(k as f64 * dt + elapsed)).collect();
        let inputs = (0..t)
            .map(|k| self.inputs[at_index(k as f64 * dt + elapsed)])
            .collect();
        let contexts = (0..t)
            .map(|k| self.contexts[at_index(k as f64 * dt + elapsed)])
            .collect();
        let v_ref = (0..=t)
            .map(|k| self.v_ref[((k as f64 + elapsed / dt).round() as usize).min(t)])
            .collect();
        Self {
            states,
            inputs,
            contexts,
            v_ref,
            ..self.clone()
        }
    }
}

/// Linearizes the micro-stepped stage map `x -> Phi(x, u, dt)` about
/// `(x0, u0)`. Returns `(A_d, B_d, c_d)` with
/// `c_d = Phi(x0, u0) - A_d x0 - B_d u0`.
pub fn discretize_stage<F>(
    f: &F,
    x0: &[f64; STATE_DIM],
    u0: &[f64; INPUT_DIM],
    dt: f64,
    h: f64,
    kind: IntegratorKind,
) -> Result<(StateMat, InputMat, [f64; STATE_DIM])>
where
    F: Fn(&[f64; STATE_DIM], &[f64; INPUT_DIM]) -> Result<[f64; STATE_DIM]> + Sync,
{
    let phi = |x: &[f64; STATE_DIM], u: &[f64; INPUT_DIM]| {
        micro_step(&|z: &[f64; STATE_DIM]| f(z, u), x, dt, h, kind)
    };
    let (a, b) = linearize(&phi, x0, u0)?;
    let base = phi(x0, u0)?;
    let lin = a * SVector::from(*x0) + b * SVector::<f64, INPUT_DIM>::from(*u0);
    let mut c = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        c[i] = base[i] - lin[i];
    }
    Ok((a, b, c))
}

/// Stage cost summed over the horizon.
pub fn evaluate_cost(
    states: &[CurvState],
    inputs: &[RateInput],
    v_ref: &[f64],
    cfg: &MpcConfig,
    params: &VehicleParams,
) -> f64 {
    let mut j = 0.0;
    for (t, x) in states.iter().enumerate() {
        let (_, alpha_r) = slip_angles(x, params);
        let dv = x.vx - v_ref[t.min(v_ref.len() - 1)];
        j += cfg.q_n * x.n * x.n
            + cfg.q_mu * x.mu * x.mu
            + cfg.q_v * dv * dv
            + cfg.q_r * x.r * x.r
            + cfg.q_b * alpha_r * alpha_r;
    }
    for u in inputs {
        j += cfg.r_ddelta * u.ddelta * u.ddelta + cfg.r_dd * u.dd * u.dd;
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ViolationReport {
    /// Largest absolute state difference between the returned states and a
    /// fresh rollout of the returned inputs.
    pub max_dynamics_defect: f64,
    pub max_track_violation: f64,
    pub max_ellipse_violation: f64,
    pub max_input_violation: f64,
}

pub struct Mpc {
    pub cfg: MpcConfig,
    pub model: VehicleModel,
    steps: usize,
}

struct Rollout {
    states: Vec<CurvState>,
    inputs: Vec<RateInput>,
    cost: f64,
    track_slack: Vec<f64>,
    ellipse_slack: Vec<f64>,
}

impl Rollout {
    fn merit(&self, w: f64) -> f64 {
        self.cost
            + w * (self.track_slack.iter().sum::<f64>() + self.ellipse_slack.iter().sum::<f64>())
    }
}

impl Mpc {
    pub fn new(
        cfg: MpcConfig,
        params: VehicleParams,
        tires: crate::params::TireParams,
    ) -> Result<Self> {
        cfg.validate()?;
        let steps = micro_step_count(cfg.dt, cfg.h)?;
        let mut model = VehicleModel::new(cfg.model, params, tires);
        if !cfg.blend {
            model = model.unblended();
        }
        Ok(Self { cfg, model, steps })
    }

    pub fn micro_steps(&self) -> usize {
        self.steps
    }

    /// One prediction stage: `dt / h` integrator steps with the input,
    /// context and track curvature lookup held as given.
    pub fn stage_map(
        &self,
        x: &[f64; STATE_DIM],
        u: &RateInput,
        ctx: &ModelContext,
        track: &Track,
    ) -> Result<[f64; STATE_DIM]> {
        let f = |z: &[f64; STATE_DIM]| -> Result<[f64; STATE_DIM]> {
            let xs = CurvState::from_array(z);
            Ok(self
                .model
                .derivative(&xs, u, track.curvature_clamped(xs.s), ctx)?
                .to_array())
        };
        micro_step(&f, x, self.cfg.dt, self.cfg.h, self.cfg.integrator)
    }

    /// Per-stage contexts from a previous prediction: lateral acceleration
    /// and differential yaw moment evaluated stage by stage.
    pub fn precompute_contexts(&self, prev: &MpcSolution, track: &Track) -> Vec<ModelContext> {
        let mut ctx = prev.contexts.first().copied().unwrap_or_default();
        let mut out = Vec::with_capacity(self.cfg.horizon);
        for t in 0..self.cfg.horizon {
            let x = prev.states[t.min(prev.states.len() - 1)];
            let u = prev.inputs.get(t).copied().unwrap_or_default();
            let ay = match self
                .model
                .derivative(&x, &u, track.curvature_clamped(x.s), &ctx)
            {
                Ok(dx) => lateral_accel(&x, &dx),
                Err(_) => x.vx * x.r,
            };
            let probe = ModelContext {
                ay,
                m0_diff: ctx.m0_diff,
            };
            ctx = ModelContext {
                ay,
                m0_diff: self.model.m_diff(&x, &probe),
            };
            out.push(ctx);
        }
        out
    }

    /// Differential yaw-moment schedule from a previous prediction.
    pub fn precompute_m0diff(&self, prev: &MpcSolution, track: &Track) -> Vec<f64> {
        self.precompute_contexts(prev, track)
            .iter()
            .map(|c| c.m0_diff)
            .collect()
    }

    /// Load factor `g(vx)` scaling the ellipse semi-axes and `g'(vx)`.
    fn ellipse_scale(&self, vx: f64) -> (f64, f64) {
        if !self.cfg.ellipse_downforce {
            return (1.0, 0.0);
        }
        let p = &self.model.params;
        let k = (p.c_down_f + p.c_down_r) / (p.m * GRAVITY);
        (1.0 + k * vx * vx, 2.0 * k * vx)
    }

    fn ellipse(&self, x: &CurvState) -> f64 {
        let (g, _) = self.ellipse_scale(x.vx);
        let ax_lim = g * if x.d >= 0.0 {
            self.cfg.ellipse_ax_max
        } else {
            -self.cfg.ellipse_ax_min
        };
        let ay = x.vx * x.r;
        (x.d / ax_lim).powi(2) + (ay / (g * self.cfg.ellipse_ay_max)).powi(2)
    }

    fn bounds_at(&self, track: &Track, s: f64) -> (f64, f64) {
        let (wl, wr) = track.widths_clamped(s);
        let m = self.model.params.half_width + self.cfg.track_margin;
        (wl - m, wr - m)
    }

    fn track_violation(&self, track: &Track, x: &CurvState) -> f64 {
        let (left, right) = self.bounds_at(track, x.s);
        (x.n - left).max(-x.n - right).max(0.0)
    }

    /// Clips an input so the input box holds and the physical box is not
    /// left by the end of the stage.
    fn admissible_input(&self, x: &CurvState, u: &RateInput) -> RateInput {
        let c = &self.cfg;
        let back = 1e-12;
        let dt = c.dt;
        let dd_lo = ((c.d_min - x.d) / dt + back).max(-c.dd_max);
        let dd_hi = ((c.d_max - x.d) / dt - back).min(c.dd_max);
        let dl_lo = ((-c.delta_max - x.delta) / dt + back).max(-c.ddelta_max);
        let dl_hi = ((c.delta_max - x.delta) / dt - back).min(c.ddelta_max);
        RateInput {
            ddelta: if dl_lo <= dl_hi {
                u.ddelta.clamp(dl_lo, dl_hi)
            } else {
                0.0
            },
            dd: if dd_lo <= dd_hi {
                u.dd.clamp(dd_lo, dd_hi)
            } else {
                0.0
            },
        }
    }

    fn rollout(
        &self,
        x_hat: &CurvState,
        inputs: &[RateInput],
        contexts: &[ModelContext],
        v_ref: &[f64],
        track: &Track,
    ) -> Result<Rollout> {
        let t = self.cfg.horizon;
        let mut states = Vec::with_capacity(t + 1);
        let mut used = Vec::with_capacity(t);
        states.push(*x_hat);
        for k in 0..t {
            let u = self.admissible_input(&states[k], &inputs[k]);
            let next = self.stage_map(&states[k].to_array(), &u, &contexts[k], track)?;
            let mut xs = CurvState::from_array(&next);
            // the rate inputs integrate exactly; remove rounding so the box holds
            xs.delta = xs.delta.clamp(-self.cfg.delta_max, self.cfg.delta_max);
            xs.d = xs.d.clamp(self.cfg.d_min, self.cfg.d_max);
            states.push(xs);
            used.push(u);
        }
        let cost = evaluate_cost(&states, &used, v_ref, &self.cfg, &self.model.params);
        let track_slack = states
            .iter()
            .map(|x| self.track_violation(track, x))
            .collect();
        let ellipse_slack = states
            .iter()
            .map(|x| (self.ellipse(x) - 1.0).max(0.0))
            .collect();
        Ok(Rollout {
            states,
            inputs: used,
            cost,
            track_slack,
            ellipse_slack,
        })
    }

    fn stage_jacobians(
        &self,
        ro: &Rollout,
        contexts: &[ModelContext],
        track: &Track,
        previous: Option<&[(StateMat, InputMat)]>,
    ) -> Result<Vec<(StateMat, InputMat)>> {
        (0..self.cfg.horizon)
            .into_par_iter()
            .map(|k| {
                let f = |x: &[f64; STATE_DIM], u: &[f64; INPUT_DIM]| {
                    let xs = CurvState::from_array(x);
                    let us = RateInput::from_array(u);
                    Ok(self
                        .model
                        .derivative(&xs, &us, track.curvature_clamped(xs.s), &contexts[k])?
                        .to_array())
                };
                let x0 = ro.states[k].to_array();
                let u0 = ro.inputs[k].to_array();
                match discretize_stage(&f, &x0, &u0, self.cfg.dt, self.cfg.h, self.cfg.integrator) {
                    Ok((a, b, _)) => Ok((a, b)),
                    Err(e) => previous.map(|p| p[k]).ok_or(e),
                }
            })
            .collect()
    }

    fn build_qp(
        &self,
        ro: &Rollout,
        jac: &[(StateMat, InputMat)],
        v_ref: &[f64],
        track: &Track,
    ) -> QpBuilder {
        let c = &self.cfg;
        let t_h = c.horizon;
        let p = &self.model.params;
        let dx = |t: usize, i: usize| (t - 1) * STATE_DIM + i;
        let du = |t: usize, k: usize| STATE_DIM * t_h + INPUT_DIM * t + k;
        let sn = |t: usize| (STATE_DIM + INPUT_DIM) * t_h + (t - 1);
        let se = |t: usize| (STATE_DIM + INPUT_DIM + 1) * t_h + (t - 1);
        let mut qp = QpBuilder::new((STATE_DIM + INPUT_DIM + 2) * t_h);

        for t in 1..=t_h {
            let x = &ro.states[t];
            qp.add_square(&[(dx(t, 1), 1.0)], -x.n, 2.0 * c.q_n);
            qp.add_square(&[(dx(t, 2), 1.0)], -x.mu, 2.0 * c.q_mu);
            let vr = v_ref[t.min(v_ref.len() - 1)];
            qp.add_square(&[(dx(t, 3), 1.0)], vr - x.vx, 2.0 * c.q_v);
            qp.add_square(&[(dx(t, 5), 1.0)], -x.r, 2.0 * c.q_r);
            // rear slip angle, linearized
            let vx = x.vx.max(crate::models::LOW_SPEED_EPS);
            let w = (x.vy - p.lr * x.r) / vx;
            let g = 1.0 / (1.0 + w * w);
            let (_, alpha) = slip_angles(x, p);
            let dvx = if x.vx > crate::models::LOW_SPEED_EPS {
                -w / vx * g
            } else {
                0.0
            };
            qp.add_square(
                &[
                    (dx(t, 3), dvx),
                    (dx(t, 4), g / vx),
                    (dx(t, 5), -p.lr * g / vx),
                ],
                -alpha,
                2.0 * c.q_b,
            );
        }
        for t in 0..t_h {
            let u = &ro.inputs[t];
            qp.add_square(&[(du(t, 0), 1.0)], -u.ddelta, 2.0 * c.r_ddelta);
            qp.add_square(&[(du(t, 1), 1.0)], -u.dd, 2.0 * c.r_dd);
            qp.add_bounds(du(t, 0), -c.ddelta_max - u.ddelta, c.ddelta_max - u.ddelta);
            qp.add_bounds(du(t, 1), -c.dd_max - u.dd, c.dd_max - u.dd);
        }
        // dynamics in deviation form around the rollout
        for (t, (a, b)) in jac.iter().enumerate().take(t_h) {
            for i in 0..STATE_DIM {
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(1 + STATE_DIM + INPUT_DIM);
                row.push((dx(t + 1, i), 1.0));
                if t > 0 {
                    for j in 0..STATE_DIM {
                        row.push((dx(t, j), -a[(i, j)]));
                    }
                }
                for k in 0..INPUT_DIM {
                    row.push((du(t, k), -b[(i, k)]));
                }
                qp.add_eq(&row, 0.0);
            }
        }
        for t in 1..=t_h {
            let x = &ro.states[t];
            qp.add_bounds(dx(t, 6), -c.delta_max - x.delta, c.delta_max - x.delta);
            qp.add_bounds(dx(t, 7), c.d_min - x.d, c.d_max - x.d);
            let (left, right) = self.bounds_at(track, x.s);
            qp.add_le(&[(dx(t, 1), 1.0), (sn(t), -1.0)], left - x.n);
            qp.add_le(&[(dx(t, 1), -1.0), (sn(t), -1.0)], right + x.n);
            let (g, dg) = self.ellipse_scale(x.vx);
            let ax_lim = g * if x.d >= 0.0 {
                c.ellipse_ax_max
            } else {
                -c.ellipse_ax_min
            };
            let ay = g * c.ellipse_ay_max;
            let gd = 2.0 * x.d / (ax_lim * ax_lim);
            let gvx = 2.0 * x.vx * x.r * x.r / (ay * ay) - 2.0 * self.ellipse(x) * dg / g;
            let gr = 2.0 * x.vx * x.vx * x.r / (ay * ay);
            qp.add_le(
                &[
                    (dx(t, 7), gd),
                    (dx(t, 3), gvx),
                    (dx(t, 5), gr),
                    (se(t), -1.0),
                ],
                1.0 - self.ellipse(x),
            );
            qp.add_bounds(sn(t), 0.0, f64::INFINITY);
            qp.add_bounds(se(t), 0.0, f64::INFINITY);
            qp.add_linear(sn(t), c.slack_weight);
            qp.add_linear(se(t), c.slack_weight);
        }
        qp
    }

    fn finish(
        &self,
        ro: Rollout,
        contexts: Vec<ModelContext>,
        v_ref: &[f64],
        status: SolveStatus,
        iters: usize,
        t0: Instant,
    ) -> MpcSolution {
        let softened = ro
            .track_slack
            .iter()
            .chain(&ro.ellipse_slack)
            .any(|s| *s > 1e-6);
        let status = if softened && status != SolveStatus::Failed {
            SolveStatus::Softened
        } else {
            status
        };
        MpcSolution {
            cost: ro.cost,
            states: ro.states,
            inputs: ro.inputs,
            contexts,
            v_ref: v_ref.to_vec(),
            status,
            iterations: iters,
            track_slack: ro.track_slack,
            ellipse_slack: ro.ellipse_slack,
            solve_time: t0.elapsed().as_secs_f64(),
        }
    }

    /// Solves from `x_hat` with a warm start already aligned with the new
    /// horizon (see [`MpcSolution::shifted_by`]). `v_ref` holds one target
    /// speed per stage `0..=T`.
    pub fn solve(
        &self,
        x_hat: &CurvState,
        track: &Track,
        v_ref: &[f64],
        warm: &MpcSolution,
    ) -> MpcSolution {
        let t0 = Instant::now();
        let c = &self.cfg;
        let t_h = c.horizon;
        let mut v_ref = v_ref.to_vec();
        v_ref.resize(t_h + 1, *v_ref.last().unwrap_or(&x_hat.vx));
        let contexts = self.precompute_contexts(warm, track);
        let failed = |warm: &MpcSolution| MpcSolution {
            status: SolveStatus::Failed,
            solve_time: t0.elapsed().as_secs_f64(),
            ..warm.clone()
        };
        let mut inputs: Vec<RateInput> = warm.inputs.clone();
        inputs.resize(t_h, RateInput::default());
        let mut current = match self
            .rollout(x_hat, &inputs, &contexts, &v_ref, track)
            .or_else(|_| {
                self.rollout(
                    x_hat,
                    &vec![RateInput::default(); t_h],
                    &contexts,
                    &v_ref,
                    track,
                )
            }) {
            Ok(r) => r,
            Err(_) => return failed(warm),
        };
        let settings = QpSettings::default();
        let mut status = SolveStatus::MaxIter;
        let mut iters = 0;
        let mut last_jac: Option<Vec<(StateMat, InputMat)>> = None;
        for _ in 0..c.sqp_iterations {
            iters += 1;
            let jac = match self.stage_jacobians(&current, &contexts, track, last_jac.as_deref()) {
                Ok(j) => j,
                Err(_) => break,
            };
            let qp = self.build_qp(&current, &jac, &v_ref, track);
            last_jac = Some(jac);
            let sol = match qp.solve(&settings) {
                Ok(s) if matches!(s.status, QpStatus::Solved | QpStatus::Inaccurate) => s,
                _ => {
                    if iters == 1 && current.merit(c.slack_weight).is_nan() {
                        return failed(warm);
                    }
                    break;
                }
            };
            let du_off = STATE_DIM * t_h;
            let base_merit = current.merit(c.slack_weight);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..4 {
                let trial: Vec<RateInput> = (0..t_h)
                    .map(|k| RateInput {
                        ddelta: (current.inputs[k].ddelta + alpha * sol.x[du_off + 2 * k])
                            .clamp(-c.ddelta_max, c.ddelta_max),
                        dd: (current.inputs[k].dd + alpha * sol.x[du_off + 2 * k + 1])
                            .clamp(-c.dd_max, c.dd_max),
                    })
                    .collect();
                if let Ok(ro) = self.rollout(x_hat, &trial, &contexts, &v_ref, track) {
                    if ro.merit(c.slack_weight) < base_merit {
                        accepted = Some(ro);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some(next) = accepted else {
                status = SolveStatus::Converged;
                break;
            };
            let step = next
                .inputs
                .iter()
                .zip(&current.inputs)
                .map(|(a, b)| {
                    (a.ddelta - b.ddelta)
                        .abs()
                        .max((a.dd - b.dd).abs() / c.dd_max.max(1.0))
                })
                .fold(0.0, f64::max);
            current = next;
            if step < c.tolerance {
                status = SolveStatus::Converged;
                break;
            }
        }
        self.finish(current, contexts, &v_ref, status, iters, t0)
    }

    /// Re-simulates a solution's inputs and reports defects and violations.
    pub fn check_solution(&self, sol: &MpcSolution, track: &Track) -> Result<ViolationReport> {
        let c = &self.cfg;
        let mut rep = ViolationReport::default();
        let mut x = sol.states[0].to_array();
        for t in 0..sol.inputs.len() {
            x = self.stage_map(&x, &sol.inputs[t], &sol.contexts[t], track)?;
            let ref_state = sol.states[t + 1].to_array();
            let defect = SVector::<f64, STATE_DIM>::from_fn(|i, _| x[i] - ref_state[i]).amax();
            rep.max_dynamics_defect = rep.max_dynamics_defect.max(defect);
            x = ref_state;
            let u = &sol.inputs[t];
            rep.max_input_violation = rep
                .max_input_violation
                .max((u.ddelta.abs() - c.ddelta_max).max(0.0))
                .max((u.dd.abs() - c.dd_max).max(0.0));
        }
        for xs in &sol.states {
            rep.max_track_violation = rep.max_track_violation.max(self.track_violation(track, xs));
            rep.max_ellipse_violation = rep
                .max_ellipse_violation
                .max((self.ellipse(xs) - 1.0).max(0.0));
            rep.max_input_violation = rep
                .max_input_violation
                .max((xs.delta.abs() - c.delta_max).max(0.0))
                .max((xs.d - c.d_max).max(c.d_min - xs.d).max(0.0));
        }
        Ok(rep)
    }

    /// Nonlinear rollout of given inputs from `x0` with a context schedule.
    pub fn predict(
        &self,
        x0: &CurvState,
        inputs: &[RateInput],
        contexts: &[ModelContext],
        track: &Track,
    ) -> Result<Vec<CurvState>> {
        let mut out = vec![*x0];
        for (u, ctx) in inputs.iter().zip(contexts) {
            let next = self.stage_map(&out.last().unwrap().to_array(), u, ctx, track)?;
            out.push(CurvState::from_array(&next));
        }
        Ok(out)
    }
}
