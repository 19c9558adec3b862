//! Vehicle and tire parameter sets.
//!
//! The shipped defaults describe a plausible open-wheel race car, NOT the
//! AV-21: no published parameter table exists for that car, so every number
//! here is synthetic and only chosen to be physically coherent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Pacejka magic-formula macro-parameters of one axle characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacejkaAxle {
    pub b: f64,
    pub c: f64,
    pub mu: f64,
}

impl PacejkaAxle {
    /// `mu * fz * sin(c * atan(b * slip))`, the pure-slip characteristic.
    #[inline]
    pub fn force(&self, slip: f64, fz: f64) -> f64 {
        self.mu * fz * (self.c * (self.b * slip).atan()).sin()
    }

    /// Slope of the characteristic at zero slip, per unit load.
    pub fn stiffness_per_load(&self) -> f64 {
        self.mu * self.b * self.c
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.b > 0.0 && self.c > 0.0 && self.c <= 2.0 && self.mu > 0.0) {
            return Err(Error::Validation(format!(
                "tire `{name}` needs b > 0, 0 < c <= 2, mu > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireParams {
    /// Front axle effective lateral characteristic.
    pub front: PacejkaAxle,
    /// Rear lateral characteristic (per wheel, load-proportional peak).
    pub rear: PacejkaAxle,
    /// Rear longitudinal characteristic; `rear_long.mu` is the peak factor `mu_r`.
    pub rear_long: PacejkaAxle,
}

impl Default for TireParams {
    fn default() -> Self {
        Self {
            front: PacejkaAxle {
                b: 20.0,
                c: 1.5,
                mu: 1.6,
            },
            rear: PacejkaAxle {
                b: 20.0,
                c: 1.45,
                mu: 1.65,
            },
            rear_long: PacejkaAxle {
                b: 11.0,
                c: 1.55,
                mu: 1.6,
            },
        }
    }
}

impl TireParams {
    pub fn validate(&self) -> Result<()> {
        self.front.validate("front")?;
        self.rear.validate("rear")?;
        self.rear_long.validate("rear_long")
    }

    /// Copy with the rear lateral stiffness factor scaled, used for
    /// effective-axle calibration of the single-track model.
    pub fn with_rear_stiffness_scale(mut self, scale: f64) -> Self {
        self.rear.b *= scale;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub m: f64,
    pub iz: f64,
    pub lf: f64,
    pub lr: f64,
    pub l: f64,
    /// Front and rear track widths.
    pub tf: f64,
    pub tr: f64,
    pub h_cg: f64,
    /// Roll-axis heights at the front and rear axle.
    pub h_f: f64,
    pub h_r: f64,
    /// Vertical CoG-to-roll-axis distance.
    pub q: f64,
    pub k_r: f64,
    pub k_tot: f64,
    /// Drag force `c_drag * vx^2`.
    pub c_drag: f64,
    pub c_down_f: f64,
    pub c_down_r: f64,
    pub f0_zf: f64,
    pub f0_zr: f64,
    pub c_roll: f64,
    pub half_width: f64,
    /// Brake forces at full pressure `b_max`.
    pub c_bf: f64,
    pub c_br: f64,
    pub b_max: f64,
    pub r_w: f64,
    pub gear_ratios: Vec<f64>,
    pub final_drive: f64,
    pub eta_t: f64,
    /// Drivetrain rotational inertia reflected to the rear axle.
    pub j0: f64,
    /// Engine full-load curve as (rpm, N*m) pairs, ascending in rpm.
    pub engine_curve: Vec<[f64; 2]>,
    pub idle_rpm: f64,
    pub redline_rpm: f64,
    pub upshift_rpm: f64,
    pub downshift_rpm: f64,
    pub shift_hysteresis_rpm: f64,
    pub steer_tau: f64,
    pub steer_rate_max: f64,
    pub steer_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let m = 750.0;
        let lf = 1.7;
        let lr = 1.3;
        let l = lf + lr;
        Self {
            m,
            iz: 1000.0,
            lf,
            lr,
            l,
            tf: 1.55,
            tr: 1.5,
            h_cg: 0.30,
            h_f: 0.03,
            h_r: 0.05,
            q: 0.25,
            k_r: 55_000.0,
            k_tot: 100_000.0,
            c_drag: 0.75,
            c_down_f: 0.9,
            c_down_r: 1.2,
            f0_zf: m * GRAVITY * lr / l,
            f0_zr: m * GRAVITY * lf / l,
            c_roll: 0.015,
            half_width: 0.95,
            c_bf: 9000.0,
            c_br: 7000.0,
            b_max: 100.0,
            r_w: 0.3,
            gear_ratios: vec![2.9, 2.1, 1.65, 1.35, 1.15, 1.0],
            final_drive: 3.0,
            eta_t: 0.9,
            j0: 4.0,
            engine_curve: vec![
                [1000.0, 250.0],
                [3000.0, 420.0],
                [5000.0, 520.0],
                [6500.0, 550.0],
                [7500.0, 500.0],
                [7800.0, 480.0],
            ],
            idle_rpm: 1500.0,
            redline_rpm: 7800.0,
            upshift_rpm: 7400.0,
            downshift_rpm: 4200.0,
            shift_hysteresis_rpm: 300.0,
            steer_tau: 0.05,
            steer_rate_max: 1.0,
            steer_max: 0.3,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("iz", self.iz),
            ("lf", self.lf),
            ("lr", self.lr),
            ("l", self.l),
            ("tf", self.tf),
            ("tr", self.tr),
            ("h_cg", self.h_cg),
            ("k_r", self.k_r),
            ("k_tot", self.k_tot),
            ("r_w", self.r_w),
            ("final_drive", self.final_drive),
            ("eta_t", self.eta_t),
            ("j0", self.j0),
            ("b_max", self.b_max),
            ("half_width", self.half_width),
            ("steer_tau", self.steer_tau),
            ("steer_max", self.steer_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!(
                    "`{name}` must be positive, got {v}"
                )));
            }
        }
        if self.k_r > self.k_tot {
            return Err(Error::Validation("k_r must not exceed k_tot".into()));
        }
        if ((self.lf + self.lr) - self.l).abs() > 1e-9 * self.l {
            return Err(Error::Validation(format!(
                "lf + lr = {} differs from l = {}",
                self.lf + self.lr,
                self.l
            )));
        }
        let weight = self.m * GRAVITY;
        if ((self.f0_zf + self.f0_zr) - weight).abs() > 0.01 * weight
            || (self.f0_zf * self.lf - self.f0_zr * self.lr).abs() > 0.01 * weight * self.l
        {
            return Err(Error::Validation(format!(
                "static axle loads f0_zf = {}, f0_zr = {} do not balance m = {} at lf = {}, lr = {}",
                self.f0_zf, self.f0_zr, self.m, self.lf, self.lr
            )));
        }
        if self.gear_ratios.is_empty() || self.gear_ratios.iter().any(|g| *g <= 0.0) {
            return Err(Error::Validation(
                "gear_ratios must be non-empty and positive".into(),
            ));
        }
        if self.engine_curve.len() < 2 || self.engine_curve.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return Err(Error::Validation(
                "engine_curve needs >= 2 points with increasing rpm".into(),
            ));
        }
        Ok(())
    }

    pub fn drag(&self, vx: f64) -> f64 {
        self.c_drag * vx * vx.abs()
    }

    /// Rolling resistance: constant above 1 m/s, tapered linearly to zero below.
    pub fn rolling(&self, vx: f64) -> f64 {
        let taper = vx.abs().min(1.0);
        self.c_roll * self.m * GRAVITY * taper * vx.signum()
    }

    pub fn downforce_front(&self, vx: f64) -> f64 {
        self.c_down_f * vx * vx
    }

    pub fn downforce_rear(&self, vx: f64) -> f64 {
        self.c_down_r * vx * vx
    }

    pub fn brake_balance_front(&self) -> f64 {
        self.c_bf / (self.c_bf + self.c_br)
    }

    pub fn overall_ratio(&self, gear: usize) -> f64 {
        let g = self.gear_ratios[gear.min(self.gear_ratios.len() - 1)];
        g * self.final_drive
    }

    /// Engine speed for a rear-axle angular velocity in the given gear.
    pub fn engine_rpm(&self, axle_omega: f64, gear: usize) -> f64 {
        axle_omega * self.overall_ratio(gear) * 60.0 / (2.0 * std::f64::consts::PI)
    }

    /// Full-load engine torque; zero beyond the redline.
    pub fn engine_max_torque(&self, rpm: f64) -> f64 {
        if rpm > self.redline_rpm {
            return 0.0;
        }
        let curve = &self.engine_curve;
        let rpm = rpm.max(curve[0][0]);
        for w in curve.windows(2) {
            if rpm <= w[1][0] {
                let t = (rpm - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + t * (w[1][1] - w[0][1]);
            }
        }
        curve[curve.len() - 1][1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        VehicleParams::default().validate().unwrap();
        TireParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_inconsistent_wheelbase() {
        let p = VehicleParams {
            l: 3.5,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_roll_stiffness_order() {
        let p = VehicleParams {
            k_r: 2.0e5,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn rolling_resistance_tapers() {
        let p = VehicleParams::default();
        assert_eq!(p.rolling(0.0), 0.0);
        assert!((p.rolling(0.5) - 0.5 * p.rolling(5.0)).abs() < 1e-12);
        assert_eq!(p.rolling(2.0), p.rolling(30.0));
    }

    #[test]
    fn engine_curve_interpolates_and_cuts_at_redline() {
        let p = VehicleParams::default();
        assert_eq!(p.engine_max_torque(6500.0), 550.0);
        assert!((p.engine_max_torque(5750.0) - 535.0).abs() < 1e-9);
        assert_eq!(p.engine_max_torque(9000.0), 0.0);
    }
}
