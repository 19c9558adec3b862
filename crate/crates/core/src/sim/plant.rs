//! Double-track plant with a locked rear axle, used as ground truth.
//!
//! Four contact patches with load-dependent Pacejka forces, one rotational
//! speed shared by both rear wheels, longitudinal and lateral load transfer,
//! aero, a first-order rate-limited steering actuator and an engine driving
//! the axle through the gearbox. Not a validated model of any real car.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{combined_slip_weight, diff_yaw_moment, lateral_axle_force};
use crate::numerics::{step, IntegratorKind};
use crate::params::{TireParams, VehicleParams};

pub const FL: usize = 0;
pub const FR: usize = 1;
pub const RL: usize = 2;
pub const RR: usize = 3;

const PLANT_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub h: f64,
    /// Inertia of one wheel about its axle.
    pub wheel_inertia: f64,
    /// Speed floor in the slip-ratio denominator.
    pub slip_speed_floor: f64,
    /// Speed scale of the smooth brake-torque sign.
    pub brake_smoothing: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            h: 0.001,
            wheel_inertia: 1.2,
            slip_speed_floor: 3.0,
            brake_smoothing: 0.5,
        }
    }
}

/// Actuator commands held over one plant step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantInput {
    pub throttle: f64,
    /// Brake pressure in `[0, b_max]`.
    pub brake: f64,
    pub delta_cmd: f64,
    pub gear: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelOutputs {
    pub fz: [f64; 4],
    /// Longitudinal and lateral forces in each wheel's own frame.
    pub fx: [f64; 4],
    pub fy: [f64; 4],
    pub slip_angle: [f64; 4],
    /// Rear slip ratios (left, right).
    pub slip_ratio: [f64; 2],
    /// Some wheel load was clamped at zero.
    pub load_clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    /// Rotational speed of the locked rear axle.
    pub omega: f64,
    /// Actual road-wheel steering angle.
    pub delta: f64,
    pub input: PlantInput,
    /// Body accelerations of the last step, used for load transfer.
    pub ax: f64,
    pub ay: f64,
    pub rpm: f64,
    pub m_diff: f64,
    pub wheels: WheelOutputs,
}

impl PlantState {
    fn to_array(self) -> [f64; PLANT_DIM] {
        [
            self.x, self.y, self.psi, self.vx, self.vy, self.r, self.omega, self.delta,
        ]
    }

    fn set_array(&mut self, a: &[f64; PLANT_DIM]) {
        [
            self.x, self.y, self.psi, self.vx, self.vy, self.r, self.omega, self.delta,
        ] = *a;
    }

    /// Straight running at `speed` with the rear axle rolling freely.
    pub fn rolling(x: f64, y: f64, psi: f64, speed: f64, p: &VehicleParams) -> Self {
        Self {
            x,
            y,
            psi,
            vx: speed,
            omega: speed / p.r_w,
            ..Default::default()
        }
    }

    pub fn rear_loads(&self) -> (f64, f64) {
        (self.wheels.fz[RL], self.wheels.fz[RR])
    }

    pub fn axle_loads(&self) -> (f64, f64) {
        let f = &self.wheels.fz;
        (f[FL] + f[FR], f[RL] + f[RR])
    }
}

#[derive(Debug, Clone)]
pub struct Plant {
    pub params: VehicleParams,
    pub tires: TireParams,
    pub cfg: PlantConfig,
}

struct Eval {
    dx: [f64; PLANT_DIM],
    wheels: WheelOutputs,
    rpm: f64,
    m_diff: f64,
}

impl Plant {
    pub fn new(params: VehicleParams, tires: TireParams, cfg: PlantConfig) -> Result<Self> {
        params.validate()?;
        tires.validate()?;
        if !(cfg.h > 0.0 && cfg.wheel_inertia > 0.0 && cfg.slip_speed_floor > 0.0) {
            return Err(Error::Config(
                "plant h, wheel inertia and slip floor must be positive".into(),
            ));
        }
        Ok(Self { params, tires, cfg })
    }

    pub fn axle_inertia(&self) -> f64 {
        self.params.j0 + 2.0 * self.cfg.wheel_inertia
    }

    pub fn engine_rpm(&self, omega: f64, gear: usize) -> f64 {
        self.params
            .engine_rpm(omega, gear)
            .max(self.params.idle_rpm)
    }

    /// Drive torque at the axle for the given throttle.
    pub fn drive_torque(&self, omega: f64, input: &PlantInput) -> f64 {
        let p = &self.params;
        let rpm = self.engine_rpm(omega, input.gear);
        input.throttle.clamp(0.0, 1.0)
            * p.engine_max_torque(rpm)
            * p.overall_ratio(input.gear)
            * p.eta_t
    }

    fn evaluate(&self, z: &[f64; PLANT_DIM], input: &PlantInput, ax: f64, ay: f64) -> Eval {
        let p = &self.params;
        let t = &self.tires;
        let [_, _, psi, vx, vy, r, omega, delta] = *z;

        // vertical loads; drag acts at the CG height, so the pitch transfer
        // follows the tire forces rather than the net acceleration
        let transfer_x = (p.m * ax + p.drag(vx)) * p.h_cg / p.l;
        let axle_f = p.f0_zf + p.downforce_front(vx) - transfer_x;
        let axle_r = p.f0_zr + p.downforce_rear(vx) + transfer_x;
        let kf = (p.k_tot - p.k_r) / p.k_tot;
        let kr = p.k_r / p.k_tot;
        let d_f = p.m * ay * (p.lr / p.l) * p.h_f / p.tf + p.m * ay * p.q * kf / p.tf;
        let d_r = p.m * ay * (p.lf / p.l) * p.h_r / p.tr + p.m * ay * p.q * kr / p.tr;
        let raw = [
            0.5 * axle_f - d_f,
            0.5 * axle_f + d_f,
            0.5 * axle_r - d_r,
            0.5 * axle_r + d_r,
        ];
        let mut w = WheelOutputs {
            load_clamped: raw.iter().any(|f| *f < 0.0),
            fz: raw.map(|f| f.max(0.0)),
            ..Default::default()
        };

        // contact-patch velocities in the body frame
        let pos = [
            (p.lf, 0.5 * p.tf),
            (p.lf, -0.5 * p.tf),
            (-p.lr, 0.5 * p.tr),
            (-p.lr, -0.5 * p.tr),
        ];
        let vel = pos.map(|(px, py)| (vx - r * py, vy + r * px));

        // front: brakes only, forces in the wheel frame
        let brake = (input.brake / p.b_max).clamp(0.0, 1.0);
        for i in [FL, FR] {
            let (u, v) = vel[i];
            let alpha = (v / u.max(1.0)).atan() - delta;
            let ux = u * delta.cos() + v * delta.sin();
            let cap = t.front.mu * w.fz[i];
            let fx =
                (-0.5 * brake * p.c_bf * (ux / self.cfg.brake_smoothing).tanh()).clamp(-cap, cap);
            let g = combined_slip_weight(fx, w.fz[i], t.front.mu);
            w.slip_angle[i] = alpha;
            w.fx[i] = fx;
            w.fy[i] = lateral_axle_force(alpha, w.fz[i], g, &t.front);
        }
        // rear: locked axle, slip from the shared wheel speed
        let wheel_speed = omega * p.r_w;
        for (k, i) in [RL, RR].into_iter().enumerate() {
            let (u, v) = vel[i];
            let alpha = (v / u.max(1.0)).atan();
            let kappa = (wheel_speed - u) / u.abs().max(self.cfg.slip_speed_floor);
            let fx = t.rear_long.force(kappa, w.fz[i]);
            let g = combined_slip_weight(fx, w.fz[i], t.rear.mu);
            w.slip_angle[i] = alpha;
            w.slip_ratio[k] = kappa;
            w.fx[i] = fx;
            w.fy[i] = lateral_axle_force(alpha, w.fz[i], g, &t.rear);
        }

        let (sd, cd) = delta.sin_cos();
        let body = |i: usize| -> (f64, f64) {
            if i <= FR {
                (w.fx[i] * cd - w.fy[i] * sd, w.fx[i] * sd + w.fy[i] * cd)
            } else {
                (w.fx[i], w.fy[i])
            }
        };
        let f: Vec<(f64, f64)> = (0..4).map(body).collect();
        let sum_x: f64 = f.iter().map(|q| q.0).sum();
        let sum_y: f64 = f.iter().map(|q| q.1).sum();
        let m_diff = diff_yaw_moment(f[RL].0, f[RR].0, p.tr);
        let yaw = p.lf * (f[FL].1 + f[FR].1) - p.lr * (f[RL].1 + f[RR].1)
            + 0.5 * p.tf * (f[FR].0 - f[FL].0)
            + m_diff;

        let resist = p.drag(vx) + p.rolling(vx);
        let drive = self.drive_torque(omega, input);
        let brake_r = brake * p.c_br * p.r_w * (wheel_speed / self.cfg.brake_smoothing).tanh();
        let omega_dot = (drive - brake_r - p.r_w * (w.fx[RL] + w.fx[RR])) / self.axle_inertia();

        let delta_cmd = input.delta_cmd.clamp(-p.steer_max, p.steer_max);
        let mut delta_dot =
            ((delta_cmd - delta) / p.steer_tau).clamp(-p.steer_rate_max, p.steer_rate_max);
        if (delta >= p.steer_max && delta_dot > 0.0) || (delta <= -p.steer_max && delta_dot < 0.0) {
            delta_dot = 0.0;
        }
        let (sp, cp) = psi.sin_cos();
        let dx = [
            vx * cp - vy * sp,
            vx * sp + vy * cp,
            r,
            (sum_x - resist) / p.m + vy * r,
            sum_y / p.m - vx * r,
            yaw / p.iz,
            omega_dot,
            delta_dot,
        ];
        Eval {
            dx,
            wheels: w,
            rpm: self.engine_rpm(omega, input.gear),
            m_diff,
        }
    }

    /// Advances the plant by `dt` in RK4 steps of `cfg.h` with the inputs held.
    pub fn step(&self, state: &PlantState, input: &PlantInput, dt: f64) -> Result<PlantState> {
        let n = ((dt / self.cfg.h).round() as usize).max(1);
        let h = dt / n as f64;
        let mut s = *state;
        s.input = *input;
        for _ in 0..n {
            let (ax, ay) = (s.ax, s.ay);
            let f = |z: &[f64; PLANT_DIM]| -> Result<[f64; PLANT_DIM]> {
                Ok(self.evaluate(z, input, ax, ay).dx)
            };
            let z = step(&f, &s.to_array(), h, IntegratorKind::Rk4)?;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration(z.to_vec()));
            }
            s.set_array(&z);
            s.delta = s.delta.clamp(-self.params.steer_max, self.params.steer_max);
            let e = self.evaluate(&z, input, ax, ay);
            s.ax = e.dx[3] - s.vy * s.r;
            s.ay = e.dx[4] + s.vx * s.r;
            s.wheels = e.wheels;
            s.rpm = e.rpm;
            s.m_diff = e.m_diff;
        }
        Ok(s)
    }

    /// Refreshes the derived outputs of a state without advancing it.
    pub fn refresh(&self, state: &PlantState) -> PlantState {
        let mut s = *state;
        let e = self.evaluate(&s.to_array(), &s.input, s.ax, s.ay);
        s.wheels = e.wheels;
        s.rpm = e.rpm;
        s.m_diff = e.m_diff;
        s
    }

    pub fn kinetic_energy(&self, s: &PlantState) -> f64 {
        0.5 * self.params.m * (s.vx * s.vx + s.vy * s.vy)
            + 0.5 * self.params.iz * s.r * s.r
            + 0.5 * self.axle_inertia() * s.omega * s.omega
    }
}
