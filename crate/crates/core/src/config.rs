//! Layered run configuration: TOML file, then `TRICYCLE_SET`, then
//! `--set key=value` overrides addressed by dotted paths.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::lowlevel::{LowLevelConfig, ThrottleMap};
use crate::models::{ModelKind, VehicleModel};
use crate::mpc::MpcConfig;
use crate::numerics::IntegratorKind;
use crate::params::{TireParams, VehicleParams};
use crate::planner::{AccelLimits, LmpcConfig, SpeedProfile};
use crate::sim::open_loop::{calibrate_single_track, record_replay, CompareModel, ReplayConfig};
use crate::sim::{run_open_loop_compare, CompareReport, Plant, PlantConfig, Scenario, SimConfig};
use crate::track::Track;
use crate::trackgen::NamedSegment;

/// Environment variable holding `key=value` overrides separated by `;`.
pub const ENV_SET: &str = "TRICYCLE_SET";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Sample spacing of the offline profile.
    pub ds: f64,
    /// Fraction of the tire grip the synthetic limits assume.
    pub grip_scale: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            ds: 1.0,
            grip_scale: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub models: Vec<ModelKind>,
    pub methods: Vec<IntegratorKind>,
    pub steps: Vec<f64>,
    pub speeds: Vec<f64>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Tricycle, ModelKind::SingleTrack],
            methods: vec![IntegratorKind::Euler, IntegratorKind::Rk4],
            steps: vec![0.04, 0.02, 0.008, 0.004, 0.002],
            speeds: (3..=40).map(f64::from).collect(),
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty()
            || self.methods.is_empty()
            || self.steps.is_empty()
            || self.speeds.is_empty()
        {
            return Err(Error::Config(
                "stability models, methods, steps and speeds must be non-empty".into(),
            ));
        }
        if self
            .steps
            .iter()
            .chain(&self.speeds)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::Config(
                "stability steps and speeds must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a CLI run can be configured with.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub vehicle: VehicleParams,
    pub tires: TireParams,
    pub mpc: MpcConfig,
    pub lmpc: LmpcConfig,
    pub lowlevel: LowLevelConfig,
    pub plant: PlantConfig,
    pub sim: SimConfig,
    pub planner: PlannerConfig,
    pub replay: ReplayConfig,
    pub stability: StabilityConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Validation(m) => Error::Config(m),
            other => other,
        };
        self.vehicle.validate().map_err(wrap)?;
        self.tires.validate().map_err(wrap)?;
        self.mpc.validate()?;
        self.lmpc.validate()?;
        self.lowlevel.validate()?;
        self.sim.validate()?;
        self.replay.validate()?;
        self.stability.validate()?;
        if !(self.planner.ds > 0.0
            && self.planner.grip_scale > 0.0
            && self.planner.grip_scale <= 1.0)
        {
            return Err(Error::Config(
                "planner.ds must be > 0 and grip_scale in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the built-in defaults when `None`) and applies the
    /// overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides).map_err(|e| match (e, path) {
            (Error::Config(m), Some(p)) => Error::Config(format!("{}: {m}", p.display())),
            (e, _) => e,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Limits derived from the tire model at `planner.grip_scale`.
    pub fn synthetic_limits(&self) -> AccelLimits {
        AccelLimits::synthetic(&self.vehicle, &self.tires, self.planner.grip_scale)
    }

    pub fn scenario(
        &self,
        track: Track,
        segments: Vec<NamedSegment>,
        limits: AccelLimits,
        profile: SpeedProfile,
        throttle_map: ThrottleMap,
    ) -> Scenario {
        Scenario {
            track,
            segments,
            limits,
            profile,
            params: self.vehicle.clone(),
            tires: self.tires,
            mpc: self.mpc.clone(),
            lmpc: self.lmpc.clone(),
            lowlevel: self.lowlevel.clone(),
            throttle_map,
            plant: self.plant.clone(),
            sim: self.sim.clone(),
            initial: None,
        }
    }

    /// Records a plant replay, calibrates the single-track rear stiffness
    /// on it and compares plant, tricycle and single-track rollouts.
    pub fn open_loop_compare(
        &self,
        track: &Track,
        segments: &[NamedSegment],
        profile: &SpeedProfile,
        map: &ThrottleMap,
    ) -> Result<CompareReport> {
        let replay = record_replay(
            track,
            profile,
            &self.vehicle,
            &self.tires,
            &self.plant,
            &self.lowlevel,
            map,
            &self.replay,
        )?;
        let scale = calibrate_single_track(
            &replay,
            segments,
            &self.vehicle,
            &self.tires,
            &self.replay,
            (0.5, 2.0),
        )?;
        let models = [
            CompareModel::Plant(Plant::new(
                self.vehicle.clone(),
                self.tires,
                self.plant.clone(),
            )?),
            CompareModel::Vehicle(VehicleModel::new(
                ModelKind::Tricycle,
                self.vehicle.clone(),
                self.tires,
            )),
            CompareModel::Vehicle(VehicleModel::new(
                ModelKind::SingleTrack,
                self.vehicle.clone(),
                self.tires.with_rear_stiffness_scale(scale),
            )),
        ];
        let mut report = run_open_loop_compare(
            &models,
            &replay,
            track,
            segments,
            self.replay.horizon,
            self.replay.h,
        )?;
        report.single_track_rear_scale = Some(scale);
        Ok(report)
    }
}

/// Splits the `TRICYCLE_SET` value into individual overrides.
pub fn env_overrides(value: &str) -> Vec<String> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets `a.b.c = value` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!(
            "override `{spec}` has an empty key segment"
        )));
    }
    let mut cur = table;
    for seg in &path[..path.len() - 1] {
        let entry = cur
            .entry(seg.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{spec}`: `{seg}` is not a table")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), parse_value(raw));
    Ok(())
}
