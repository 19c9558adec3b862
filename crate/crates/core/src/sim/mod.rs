//! Closed-loop and open-loop simulation against the double-track plant.

pub mod closed_loop;
pub mod metrics;
pub mod open_loop;
pub mod plant;
pub mod scenario;
pub mod telemetry;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::VehicleParams;
use crate::track::{CurvPose, Track};

pub use closed_loop::{run_closed_loop, run_closed_loop_with_sink};
pub use metrics::{compute_metrics, MetricsReport, SegmentMetrics};
pub use open_loop::{run_open_loop_compare, CompareReport, CompareRow};
pub use plant::{Plant, PlantConfig, PlantInput, PlantState};
pub use scenario::{NoiseConfig, Perturbation, Scenario, SimConfig};
pub use telemetry::{Telemetry, TelemetryRecord, TelemetrySink, Termination};

/// What the controllers are allowed to see of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Measurement {
    pub pose: CurvPose,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub ax: f64,
    pub ay: f64,
    pub rpm: f64,
    pub ambiguous: bool,
}

/// Perfect-state measurement: projection onto the track plus body
/// velocities, accelerations and engine speed.
pub fn measure(state: &PlantState, track: &Track, seed: Option<f64>) -> Result<Measurement> {
    let proj = track.cartesian_to_curvilinear(state.x, state.y, state.psi, seed)?;
    Ok(Measurement {
        pose: proj.pose,
        vx: state.vx,
        vy: state.vy,
        r: state.r,
        ax: state.ax,
        ay: state.ay,
        rpm: state.rpm,
        ambiguous: proj.ambiguous,
    })
}

/// Lowest gear whose engine speed at `omega` is below the upshift point.
pub fn initial_gear(omega: f64, p: &VehicleParams) -> usize {
    (0..p.gear_ratios.len())
        .find(|&g| p.engine_rpm(omega, g) < p.upshift_rpm - p.shift_hysteresis_rpm)
        .unwrap_or(p.gear_ratios.len() - 1)
}
