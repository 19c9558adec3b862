use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowlevel::{LowLevelConfig, ThrottleMap};
use crate::mpc::MpcConfig;
use crate::params::{TireParams, VehicleParams};
use crate::planner::{AccelLimits, LmpcConfig, SpeedProfile};
use crate::track::Track;
use crate::trackgen::NamedSegment;

use super::plant::{PlantConfig, PlantState};

/// Loop rates and run control for the closed-loop runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Base tick; every other period must be an integer multiple of it.
    pub tick: f64,
    pub mpc_period: f64,
    pub lmpc_period: f64,
    pub lowlevel_period: f64,
    pub duration: f64,
    /// Laps to complete on a closed track; open tracks run to the end.
    pub laps: f64,
    pub off_track_margin: f64,
    /// Throttle multiplier per tick while the MPC is failing.
    pub failure_throttle_decay: f64,
    pub record_timing: bool,
    pub start_s: f64,
    /// Initial speed as a fraction of the profile speed at the start.
    pub start_speed_fraction: f64,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub perturbation: Perturbation,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick: 0.01,
            mpc_period: 0.04,
            lmpc_period: 0.05,
            lowlevel_period: 0.01,
            duration: 600.0,
            laps: 1.0,
            off_track_margin: 2.0,
            failure_throttle_decay: 0.9,
            record_timing: false,
            start_s: 0.0,
            start_speed_fraction: 1.0,
            seed: 0,
            noise: NoiseConfig::default(),
            perturbation: Perturbation::default(),
        }
    }
}

/// Gaussian measurement noise; all zero by default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub n_std: f64,
    pub mu_std: f64,
    pub vx_std: f64,
    pub r_std: f64,
}

impl NoiseConfig {
    pub fn is_off(&self) -> bool {
        self.n_std == 0.0 && self.mu_std == 0.0 && self.vx_std == 0.0 && self.r_std == 0.0
    }
}

/// Multiplicative plant-parameter perturbation relative to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub mass: f64,
    pub yaw_inertia: f64,
    pub friction: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            mass: 1.0,
            yaw_inertia: 1.0,
            friction: 1.0,
        }
    }
}

impl Perturbation {
    pub fn apply(&self, p: &VehicleParams, t: &TireParams) -> (VehicleParams, TireParams) {
        let mut p = p.clone();
        let mut t = *t;
        p.m *= self.mass;
        p.f0_zf *= self.mass;
        p.f0_zr *= self.mass;
        p.iz *= self.yaw_inertia;
        for axle in [&mut t.front, &mut t.rear, &mut t.rear_long] {
            axle.mu *= self.friction;
        }
        (p, t)
    }
}

fn multiple_of(period: f64, tick: f64) -> Option<usize> {
    let k = (period / tick).round();
    (k >= 1.0 && (period - k * tick).abs() <= 1e-9 * period.max(1.0)).then_some(k as usize)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return Err(Error::Config(format!(
                "sim.tick must be positive, got {}",
                self.tick
            )));
        }
        for (name, p) in [
            ("mpc_period", self.mpc_period),
            ("lmpc_period", self.lmpc_period),
            ("lowlevel_period", self.lowlevel_period),
        ] {
            if multiple_of(p, self.tick).is_none() {
                return Err(Error::Config(format!(
                    "sim.{name} = {p} is not an integer multiple of the tick {}",
                    self.tick
                )));
            }
        }
        if !(self.duration > 0.0 && self.laps > 0.0 && self.off_track_margin >= 0.0) {
            return Err(Error::Config(
                "sim.duration, sim.laps must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.failure_throttle_decay) {
            return Err(Error::Config(
                "sim.failure_throttle_decay must be in [0, 1]".into(),
            ));
        }
        if !(self.start_speed_fraction >= 0.0) {
            return Err(Error::Config(
                "sim.start_speed_fraction must be >= 0".into(),
            ));
        }
        let n = &self.noise;
        if [n.n_std, n.mu_std, n.vx_std, n.r_std]
            .iter()
            .any(|s| !(*s >= 0.0))
        {
            return Err(Error::Config(
                "sim.noise standard deviations must be >= 0".into(),
            ));
        }
        let q = &self.perturbation;
        if [q.mass, q.yaw_inertia, q.friction]
            .iter()
            .any(|f| !(0.5..=1.5).contains(f))
        {
            return Err(Error::Config(
                "sim.perturbation factors must be in [0.5, 1.5]".into(),
            ));
        }
        Ok(())
    }

    /// Ticks per `(mpc, lmpc, lowlevel)` period.
    pub fn divisors(&self) -> (usize, usize, usize) {
        let d = |p| multiple_of(p, self.tick).unwrap_or(1);
        (
            d(self.mpc_period),
            d(self.lmpc_period),
            d(self.lowlevel_period),
        )
    }
}

/// Everything needed for one deterministic closed-loop run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub track: Track,
    pub segments: Vec<NamedSegment>,
    pub limits: AccelLimits,
    pub profile: SpeedProfile,
    /// Parameters the controllers believe in.
    pub params: VehicleParams,
    pub tires: TireParams,
    pub mpc: MpcConfig,
    pub lmpc: LmpcConfig,
    pub lowlevel: LowLevelConfig,
    pub throttle_map: ThrottleMap,
    pub plant: PlantConfig,
    pub sim: SimConfig,
    /// Overrides the on-centerline start derived from `sim.start_s`.
    pub initial: Option<PlantState>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.mpc.validate()?;
        self.lmpc.validate()?;
        self.lowlevel.validate()?;
        self.params.validate()?;
        self.tires.validate()?;
        self.throttle_map.validate()?;
        self.limits.validate()
    }

    /// On the centerline at `sim.start_s`, aligned with the track and at
    /// the scaled profile speed.
    pub fn initial_state(&self) -> Result<PlantState> {
        if let Some(s) = self.initial {
            return Ok(s);
        }
        let s0 = self.track.clamp_s(self.sim.start_s);
        let (x, y, psi) = self.track.centerline_at(s0)?;
        let v = self.sim.start_speed_fraction * self.profile.speed_at(s0);
        Ok(PlantState::rolling(x, y, psi, v, &self.params))
    }
}
