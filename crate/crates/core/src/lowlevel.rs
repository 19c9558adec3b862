//! Low-level longitudinal control: feedforward force, throttle map, brake
//! pressure and two PI loops.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{TireParams, VehicleParams};

/// Sign applied to the drag and rolling terms of the feedforward force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResistanceSign {
    /// Resistances are added so the request overcomes them.
    Compensate,
    /// Resistances are subtracted.
    Subtract,
}

/// How wheel force maps to engine torque.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TorqueForm {
    /// `F r_w / (tau_i tau_d eta_t)`.
    Divide,
    /// `F r_w tau_i tau_d / eta_t`.
    Multiply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowLevelConfig {
    /// Speed loop gains, in m/s^2 per m/s and per m.
    pub kp_v: f64,
    pub ki_v: f64,
    /// Acceleration loop gains, dimensionless and per s.
    pub kp_a: f64,
    pub ki_a: f64,
    /// Integral clamp, m/s^2.
    pub integral_limit: f64,
    /// Force band around zero in which the throttle/brake mode holds, N.
    pub hysteresis: f64,
    pub resistance_sign: ResistanceSign,
    pub torque_form: TorqueForm,
}

impl Default for LowLevelConfig {
    fn default() -> Self {
        Self {
            kp_v: 0.8,
            ki_v: 0.25,
            kp_a: 0.3,
            ki_a: 0.5,
            integral_limit: 3.0,
            hysteresis: 50.0,
            resistance_sign: ResistanceSign::Compensate,
            torque_form: TorqueForm::Divide,
        }
    }
}

impl LowLevelConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.kp_v,
            self.ki_v,
            self.kp_a,
            self.ki_a,
            self.integral_limit,
            self.hysteresis,
        ];
        if vals.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "lowlevel gains, clamp and hysteresis must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// `m a + J0 a / r_w^2` plus the drag and rolling terms with the chosen sign.
pub fn feedforward_force(
    v_ref: f64,
    a_ref: f64,
    vx: f64,
    p: &VehicleParams,
    sign: ResistanceSign,
) -> f64 {
    let resist = p.drag(v_ref) + p.rolling(vx);
    let s = match sign {
        ResistanceSign::Compensate => 1.0,
        ResistanceSign::Subtract => -1.0,
    };
    p.m * a_ref + s * resist + p.j0 * a_ref / (p.r_w * p.r_w)
}

/// Caps a traction request at the rear grip `mu_r * Fz_r`; braking passes.
pub fn traction_clip(f_ref: f64, fz_r: f64, tires: &TireParams) -> f64 {
    if f_ref >= 0.0 {
        f_ref.min(tires.rear_long.mu * fz_r.max(0.0))
    } else {
        f_ref
    }
}

pub fn torque_request(f: f64, gear: usize, p: &VehicleParams, form: TorqueForm) -> f64 {
    let ratio = p.overall_ratio(gear);
    match form {
        TorqueForm::Divide => f * p.r_w / (ratio * p.eta_t),
        TorqueForm::Multiply => f * p.r_w * ratio / p.eta_t,
    }
}

/// Brake pressure for a negative force request, limited first by the
/// grip of both axles and then by `b_max`.
pub fn brake_command(
    f_neg: f64,
    fz_f: f64,
    fz_r: f64,
    p: &VehicleParams,
    tires: &TireParams,
) -> f64 {
    if f_neg >= 0.0 {
        return 0.0;
    }
    let limit = tires.front.mu * fz_f.max(0.0) + tires.rear_long.mu * fz_r.max(0.0);
    let f_tar = f_neg.max(-limit);
    (f_tar.abs() / (p.c_bf + p.c_br) * p.b_max).clamp(0.0, p.b_max)
}

/// Engine throttle lookup over an `rpm x torque` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrottleMap {
    pub rpm: Vec<f64>,
    pub torque: Vec<f64>,
    /// `throttle[i][j]` at `rpm[i]`, `torque[j]`.
    pub throttle: Vec<Vec<f64>>,
}

fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    if x <= axis[0] {
        return (0, 0.0);
    }
    let n = axis.len();
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let i = axis.partition_point(|a| *a <= x) - 1;
    (i, (x - axis[i]) / (axis[i + 1] - axis[i]))
}

impl ThrottleMap {
    /// Throttle as requested torque over full-load torque.
    pub fn synthetic(p: &VehicleParams) -> Self {
        let rpm: Vec<f64> = (2..=16).map(|k| k as f64 * 500.0).collect();
        let torque: Vec<f64> = (0..=12).map(|k| k as f64 * 50.0).collect();
        let throttle = rpm
            .iter()
            .map(|&n| {
                let full = p.engine_max_torque(n.min(p.redline_rpm)).max(1.0);
                torque.iter().map(|&t| (t / full).clamp(0.0, 1.0)).collect()
            })
            .collect();
        Self {
            rpm,
            torque,
            throttle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ascending = |a: &[f64]| a.len() >= 2 && a.windows(2).all(|w| w[1] > w[0]);
        if !ascending(&self.rpm) || !ascending(&self.torque) {
            return Err(Error::Validation(
                "throttle map axes need >= 2 ascending points".into(),
            ));
        }
        if self.throttle.len() != self.rpm.len()
            || self.throttle.iter().any(|r| r.len() != self.torque.len())
        {
            return Err(Error::Validation("throttle map grid shape mismatch".into()));
        }
        for row in &self.throttle {
            if row.windows(2).any(|w| w[1] < w[0]) || row.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(Error::Validation(
                    "throttle must lie in [0, 1] and be non-decreasing in torque".into(),
                ));
            }
        }
        Ok(())
    }

    /// Bilinear interpolation, clamped outside the grid.
    pub fn throttle(&self, rpm: f64, torque: f64) -> f64 {
        let (i, u) = bracket(&self.rpm, rpm);
        let (j, w) = bracket(&self.torque, torque);
        let t = &self.throttle;
        let a = t[i][j] + w * (t[i][j + 1] - t[i][j]);
        let b = t[i + 1][j] + w * (t[i + 1][j + 1] - t[i + 1][j]);
        (a + u * (b - a)).clamp(0.0, 1.0)
    }

    /// Long-format CSV `rpm,torque,throttle`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["rpm", "torque", "throttle"])?;
        for (i, n) in self.rpm.iter().enumerate() {
            for (j, t) in self.torque.iter().enumerate() {
                w.write_record([
                    n.to_string(),
                    t.to_string(),
                    self.throttle[i][j].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.into(),
                })
        };
        let (ci, cj, ct) = (col("rpm")?, col("torque")?, col("throttle")?);
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let get = |c: usize| -> Result<f64> {
                rec.get(c)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        path: path.to_path_buf(),
                        line: k + 2,
                        msg: e.to_string(),
                    })
            };
            rows.push((get(ci)?, get(cj)?, get(ct)?));
        }
        let mut rpm: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut torque: Vec<f64> = rows.iter().map(|r| r.1).collect();
        rpm.sort_by(f64::total_cmp);
        rpm.dedup();
        torque.sort_by(f64::total_cmp);
        torque.dedup();
        let mut grid = vec![vec![f64::NAN; torque.len()]; rpm.len()];
        for (n, t, v) in rows {
            let i = rpm.partition_point(|x| *x < n);
            let j = torque.partition_point(|x| *x < t);
            grid[i][j] = v;
        }
        if grid.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Validation(format!(
                "{}: throttle grid is incomplete",
                path.display()
            )));
        }
        let map = Self {
            rpm,
            torque,
            throttle: grid,
        };
        map.validate()?;
        Ok(map)
    }
}

/// Gear after applying shift thresholds. A shift happens only if the engine
/// speed in the new gear stays `shift_hysteresis_rpm` inside the opposite
/// threshold, which prevents hunting.
pub fn select_gear(rpm: f64, gear: usize, p: &VehicleParams) -> usize {
    let top = p.gear_ratios.len() - 1;
    let ratio = |g: usize| p.gear_ratios[g];
    if gear < top && rpm >= p.upshift_rpm {
        let after = rpm * ratio(gear + 1) / ratio(gear);
        if after >= p.downshift_rpm + p.shift_hysteresis_rpm {
            return gear + 1;
        }
    }
    if gear > 0 && rpm <= p.downshift_rpm {
        let after = rpm * ratio(gear - 1) / ratio(gear);
        if after <= p.upshift_rpm - p.shift_hysteresis_rpm {
            return gear - 1;
        }
    }
    gear
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pedal {
    #[default]
    Throttle,
    Brake,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PiState {
    pub int_v: f64,
    pub int_a: f64,
    pub pedal: Pedal,
}

/// Measurements and targets for one low-level tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LowLevelInput {
    pub v_ref: f64,
    pub a_ref: f64,
    pub vx: f64,
    pub ax: f64,
    pub rpm: f64,
    pub gear: usize,
    pub fz_f: f64,
    pub fz_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LowLevelOutput {
    pub throttle: f64,
    pub brake: f64,
    pub force_ff: f64,
    pub force: f64,
    pub saturated: bool,
}

pub struct LowLevel {
    pub cfg: LowLevelConfig,
    pub params: VehicleParams,
    pub tires: TireParams,
    pub map: ThrottleMap,
}

impl LowLevel {
    pub fn new(
        cfg: LowLevelConfig,
        params: VehicleParams,
        tires: TireParams,
        map: ThrottleMap,
    ) -> Result<Self> {
        cfg.validate()?;
        map.validate()?;
        Ok(Self {
            cfg,
            params,
            tires,
            map,
        })
    }

    /// One control step; returns the pedal commands and the updated state.
    pub fn tick(&self, inp: &LowLevelInput, dt: f64, state: &PiState) -> (LowLevelOutput, PiState) {
        let c = &self.cfg;
        let p = &self.params;
        let e_v = inp.v_ref - inp.vx;
        let e_a = inp.a_ref - inp.ax;
        let ff = feedforward_force(inp.v_ref, inp.a_ref, inp.vx, p, c.resistance_sign);
        let correction = c.kp_v * e_v + state.int_v + c.kp_a * e_a + state.int_a;
        let force = ff + p.m * correction;

        let pedal = if force > c.hysteresis {
            Pedal::Throttle
        } else if force < -c.hysteresis {
            Pedal::Brake
        } else {
            state.pedal
        };
        let mut out = LowLevelOutput {
            force_ff: ff,
            force,
            ..Default::default()
        };
        // +1 when the actuator cannot deliver more force, -1 when it cannot deliver less
        let mut stuck = 0.0;
        match pedal {
            Pedal::Throttle => {
                let f = traction_clip(force.max(0.0), inp.fz_r, &self.tires);
                let torque = torque_request(f, inp.gear, p, c.torque_form);
                out.throttle = self.map.throttle(inp.rpm, torque);
                if out.throttle >= 1.0 || f < force {
                    stuck = 1.0;
                } else if out.throttle <= 0.0 && force < 0.0 {
                    stuck = -1.0;
                }
            }
            Pedal::Brake => {
                out.brake = brake_command(force.min(0.0), inp.fz_f, inp.fz_r, p, &self.tires);
                let limit = self.tires.front.mu * inp.fz_f.max(0.0)
                    + self.tires.rear_long.mu * inp.fz_r.max(0.0);
                if out.brake >= p.b_max || -force > limit {
                    stuck = -1.0;
                } else if out.brake <= 0.0 && force > 0.0 {
                    stuck = 1.0;
                }
            }
        }
        out.saturated = stuck != 0.0;
        let mut next = PiState { pedal, ..*state };
        let lim = c.integral_limit;
        if e_v * stuck <= 0.0 {
            next.int_v = (state.int_v + c.ki_v * e_v * dt).clamp(-lim, lim);
        }
        if e_a * stuck <= 0.0 {
            next.int_a = (state.int_a + c.ki_a * e_a * dt).clamp(-lim, lim);
        }
        (out, next)
    }
}
