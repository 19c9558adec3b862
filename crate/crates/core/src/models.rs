//! Continuous-time vehicle models over the shared curvilinear state:
//! kinematic single-track, dynamic single-track and the locked-differential
//! tricycle, plus the tire and load-transfer pieces they are built from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{PacejkaAxle, TireParams, VehicleParams};

pub const STATE_DIM: usize = 8;
pub const INPUT_DIM: usize = 2;

/// Below this speed slip quantities are not evaluated.
pub const LOW_SPEED_EPS: f64 = 0.5;
/// Yaw rates below this are treated as straight running (infinite radius).
pub const YAW_RATE_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurvState {
    pub s: f64,
    pub n: f64,
    pub mu: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub delta: f64,
    /// Commanded longitudinal acceleration.
    pub d: f64,
}

impl CurvState {
    pub fn to_array(self) -> [f64; STATE_DIM] {
        [
            self.s, self.n, self.mu, self.vx, self.vy, self.r, self.delta, self.d,
        ]
    }

    pub fn from_array(a: &[f64; STATE_DIM]) -> Self {
        Self {
            s: a[0],
            n: a[1],
            mu: a[2],
            vx: a[3],
            vy: a[4],
            r: a[5],
            delta: a[6],
            d: a[7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateInput {
    pub ddelta: f64,
    pub dd: f64,
}

impl RateInput {
    pub fn to_array(self) -> [f64; INPUT_DIM] {
        [self.ddelta, self.dd]
    }

    pub fn from_array(a: &[f64; INPUT_DIM]) -> Self {
        Self {
            ddelta: a[0],
            dd: a[1],
        }
    }
}

/// Quantities held fixed over one derivative evaluation: the lagged lateral
/// acceleration and the differential yaw moment of the previous evaluation,
/// both used only for rear load transfer.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelContext {
    pub ay: f64,
    pub m0_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Kinematic,
    SingleTrack,
    Tricycle,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kinematic" => Ok(Self::Kinematic),
            "single-track" | "single_track" => Ok(Self::SingleTrack),
            "tricycle" => Ok(Self::Tricycle),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Kinematic => "kinematic",
            Self::SingleTrack => "single-track",
            Self::Tricycle => "tricycle",
        })
    }
}

/// Speed band over which kinematic and dynamic derivatives are mixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendBand {
    pub lo: f64,
    pub hi: f64,
}

impl Default for BlendBand {
    fn default() -> Self {
        Self { lo: 3.0, hi: 8.0 }
    }
}

impl BlendBand {
    /// Weight of the dynamic model.
    pub fn lambda(&self, vx: f64) -> f64 {
        ((vx - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// Pacejka lateral force of one axle or wheel opposing the slip angle.
pub fn lateral_axle_force(slip_angle: f64, fz: f64, g: f64, tire: &PacejkaAxle) -> f64 {
    -g * tire.force(slip_angle, fz.max(0.0))
}

/// Friction-ellipse reduction of the lateral capacity under a longitudinal force.
pub fn combined_slip_weight(fx: f64, fz: f64, mu_peak: f64) -> f64 {
    if fz <= 0.0 {
        return 0.0;
    }
    let ratio = fx / (mu_peak * fz);
    (1.0 - ratio * ratio).max(0.0).sqrt()
}

/// Signed turning radius `vx / r`; infinite below the yaw-rate guard.
pub fn turning_radius(vx: f64, r: f64) -> f64 {
    if r.abs() < YAW_RATE_EPS {
        f64::INFINITY
    } else {
        vx / r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipRatios {
    pub k_rl: f64,
    pub k_rr: f64,
    pub low_speed: bool,
}

/// Slip ratios of the two rear wheels on a rigid axle. The wheel path
/// speeds are `r * (R -+ tr/2)`, larger on the outer wheel. With an infinite
/// radius both wheels run at `vx`.
pub fn locked_axle_slip_ratios(vx: f64, r: f64, radius: f64, tr: f64) -> SlipRatios {
    if vx <= LOW_SPEED_EPS {
        return SlipRatios {
            k_rl: 0.0,
            k_rr: 0.0,
            low_speed: true,
        };
    }
    let (v_rl, v_rr) = if radius.is_finite() {
        (r * (radius - 0.5 * tr), r * (radius + 0.5 * tr))
    } else {
        (vx, vx)
    };
    SlipRatios {
        k_rl: (vx - v_rl) / vx,
        k_rr: (vx - v_rr) / vx,
        low_speed: false,
    }
}

/// Slip ratios from the yaw rate directly: `r * (R -+ tr/2)` with
/// `R = vx / r` is `vx -+ r * tr / 2`, which stays defined as `r -> 0`.
pub fn locked_axle_slip_from_yaw(vx: f64, r: f64, tr: f64) -> SlipRatios {
    if vx <= LOW_SPEED_EPS {
        return locked_axle_slip_ratios(vx, r, f64::INFINITY, tr);
    }
    let k = r * tr / (2.0 * vx);
    SlipRatios {
        k_rl: k,
        k_rr: -k,
        low_speed: false,
    }
}

pub fn coast_longitudinal_force(k: f64, fz: f64, tires: &TireParams) -> f64 {
    tires.rear_long.force(k, fz.max(0.0))
}

pub fn diff_yaw_moment(fx_rl: f64, fx_rr: f64, tr: f64) -> f64 {
    0.5 * (fx_rr - fx_rl) * tr
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandForces {
    pub fx_f: f64,
    pub fx_rl: f64,
    pub fx_rr: f64,
}

impl CommandForces {
    pub fn rear(&self) -> f64 {
        self.fx_rl + self.fx_rr
    }
}

/// Splits `m * D` between the axles and the rear wheels. Traction goes to
/// the rear axle only; braking follows the brake balance. The rear share is
/// divided in proportion to the wheel loads.
pub fn command_force_split(d: f64, p: &VehicleParams, fz_rl: f64, fz_rr: f64) -> CommandForces {
    let total = p.m * d;
    let (front, rear) = if d >= 0.0 {
        (0.0, total)
    } else {
        let bf = p.brake_balance_front();
        (bf * total, (1.0 - bf) * total)
    };
    let fz = fz_rl + fz_rr;
    let share_l = if fz > 0.0 { fz_rl / fz } else { 0.5 };
    CommandForces {
        fx_f: front,
        fx_rl: rear * share_l,
        fx_rr: rear * (1.0 - share_l),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RearLoads {
    pub fz_rl: f64,
    pub fz_rr: f64,
    /// Axle load before any clamping.
    pub fz_r: f64,
    pub clamped: bool,
}

pub fn rear_axle_load(vx: f64, d: f64, p: &VehicleParams) -> f64 {
    p.f0_zr + p.downforce_rear(vx) + p.m * d * p.h_cg / p.l
}

pub fn front_axle_load(vx: f64, d: f64, p: &VehicleParams) -> f64 {
    p.f0_zf + p.downforce_front(vx) - p.m * d * p.h_cg / p.l
}

/// Rear lateral load transfer from the roll-axis model.
pub fn rear_lateral_transfer(ay: f64, m0_diff: f64, p: &VehicleParams) -> f64 {
    let fy_r = (p.m * ay * p.lf + m0_diff) / p.l;
    let my = p.m * ay * p.q;
    fy_r * p.h_r / p.tr + (my / p.tr) * (p.k_r / p.k_tot)
}

/// Per-wheel rear loads; positive `ay` (left turn) loads the right wheel.
pub fn rear_vertical_loads(x: &CurvState, ctx: &ModelContext, p: &VehicleParams) -> RearLoads {
    let fz_r = rear_axle_load(x.vx, x.d, p);
    let dfz = rear_lateral_transfer(ctx.ay, ctx.m0_diff, p);
    let rl = 0.5 * fz_r - dfz;
    let rr = 0.5 * fz_r + dfz;
    RearLoads {
        fz_rl: rl.max(0.0),
        fz_rr: rr.max(0.0),
        fz_r,
        clamped: rl < 0.0 || rr < 0.0,
    }
}

/// Rear-axle force breakdown of the tricycle model at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RearWheelState {
    pub loads: RearLoads,
    pub slip: SlipRatios,
    pub coast_rl: f64,
    pub coast_rr: f64,
    pub cmd: CommandForces,
    /// Total longitudinal force per wheel (coast + command).
    pub fx_rl: f64,
    pub fx_rr: f64,
    pub m_diff: f64,
}

impl RearWheelState {
    fn evaluate(
        x: &CurvState,
        ctx: &ModelContext,
        p: &VehicleParams,
        t: &TireParams,
        coast: bool,
    ) -> Self {
        let loads = rear_vertical_loads(x, ctx, p);
        let slip = locked_axle_slip_from_yaw(x.vx, x.r, p.tr);
        let (coast_rl, coast_rr) = if coast {
            (
                coast_longitudinal_force(slip.k_rl, loads.fz_rl, t),
                coast_longitudinal_force(slip.k_rr, loads.fz_rr, t),
            )
        } else {
            (0.0, 0.0)
        };
        let cmd = command_force_split(x.d, p, loads.fz_rl, loads.fz_rr);
        let fx_rl = coast_rl + cmd.fx_rl;
        let fx_rr = coast_rr + cmd.fx_rr;
        Self {
            loads,
            slip,
            coast_rl,
            coast_rr,
            cmd,
            fx_rl,
            fx_rr,
            m_diff: diff_yaw_moment(fx_rl, fx_rr, p.tr),
        }
    }
}

pub fn rear_wheel_state(
    x: &CurvState,
    ctx: &ModelContext,
    p: &VehicleParams,
    t: &TireParams,
) -> RearWheelState {
    RearWheelState::evaluate(x, ctx, p, t, true)
}

/// Front and rear slip angles; the speed is floored at the low-speed guard.
pub fn slip_angles(x: &CurvState, p: &VehicleParams) -> (f64, f64) {
    let vx = x.vx.max(LOW_SPEED_EPS);
    (
        ((x.vy + p.lf * x.r) / vx).atan() - x.delta,
        ((x.vy - p.lr * x.r) / vx).atan(),
    )
}

/// Curvilinear pose rates `(s_dot, n_dot, mu_dot)`.
pub fn curvilinear_rates(x: &CurvState, rho: f64) -> Result<(f64, f64, f64)> {
    let denom = 1.0 - x.n * rho;
    if denom <= 0.0 {
        return Err(Error::Singularity(denom));
    }
    let (sm, cm) = x.mu.sin_cos();
    let s_dot = (x.vx * cm - x.vy * sm) / denom;
    let n_dot = x.vx * sm + x.vy * cm;
    Ok((s_dot, n_dot, x.r - rho * s_dot))
}

fn assemble(
    x: &CurvState,
    u: &RateInput,
    rho: f64,
    dvx: f64,
    dvy: f64,
    dr: f64,
) -> Result<CurvState> {
    let (s_dot, n_dot, mu_dot) = curvilinear_rates(x, rho)?;
    Ok(CurvState {
        s: s_dot,
        n: n_dot,
        mu: mu_dot,
        vx: dvx,
        vy: dvy,
        r: dr,
        delta: u.ddelta,
        d: u.dd,
    })
}

fn front_lateral(x: &CurvState, p: &VehicleParams, t: &TireParams, fx_f: f64) -> f64 {
    let (alpha_f, _) = slip_angles(x, p);
    let fz_f = front_axle_load(x.vx, x.d, p);
    let g = combined_slip_weight(fx_f, fz_f, t.front.mu);
    lateral_axle_force(alpha_f, fz_f, g, &t.front)
}

fn rigid_body(
    x: &CurvState,
    p: &VehicleParams,
    fx_r: f64,
    fx_f: f64,
    fyf: f64,
    fyr: f64,
    m_diff: f64,
) -> (f64, f64, f64) {
    let (sd, cd) = x.delta.sin_cos();
    let dvx =
        (fx_r - p.drag(x.vx) - p.rolling(x.vx) - fyf * sd + fx_f * cd + p.m * x.vy * x.r) / p.m;
    let dvy = (fyr + fyf * cd + fx_f * sd - p.m * x.vx * x.r) / p.m;
    let dr = (m_diff + p.lf * (fyf * cd + fx_f * sd) - p.lr * fyr) / p.iz;
    (dvx, dvy, dr)
}

fn tricycle_impl(
    x: &CurvState,
    u: &RateInput,
    rho: f64,
    ctx: &ModelContext,
    p: &VehicleParams,
    t: &TireParams,
    locked_axle: bool,
) -> Result<CurvState> {
    let rw = RearWheelState::evaluate(x, ctx, p, t, locked_axle);
    let m_diff = if locked_axle { rw.m_diff } else { 0.0 };
    let (_, alpha_r) = slip_angles(x, p);
    let g_rl = combined_slip_weight(rw.fx_rl, rw.loads.fz_rl, t.rear.mu);
    let g_rr = combined_slip_weight(rw.fx_rr, rw.loads.fz_rr, t.rear.mu);
    let fyr = lateral_axle_force(alpha_r, rw.loads.fz_rl, g_rl, &t.rear)
        + lateral_axle_force(alpha_r, rw.loads.fz_rr, g_rr, &t.rear);
    let fyf = front_lateral(x, p, t, rw.cmd.fx_f);
    let (dvx, dvy, dr) = rigid_body(x, p, rw.cmd.rear(), rw.cmd.fx_f, fyf, fyr, m_diff);
    assemble(x, u, rho, dvx, dvy, dr)
}

/// Locked-differential tricycle model.
pub fn tricycle_derivative(
    x: &CurvState,
    u: &RateInput,
    rho: f64,
    ctx: &ModelContext,
    p: &VehicleParams,
    t: &TireParams,
) -> Result<CurvState> {
    tricycle_impl(x, u, rho, ctx, p, t, true)
}

/// Dynamic single-track model: axle-level rear force, no yaw moment from
/// the rear axle.
pub fn single_track_derivative(
    x: &CurvState,
    u: &RateInput,
    rho: f64,
    p: &VehicleParams,
    t: &TireParams,
) -> Result<CurvState> {
    let fz_r = rear_axle_load(x.vx, x.d, p).max(0.0);
    let cmd = command_force_split(x.d, p, 0.5 * fz_r, 0.5 * fz_r);
    let (_, alpha_r) = slip_angles(x, p);
    let g_r = combined_slip_weight(cmd.rear(), fz_r, t.rear.mu);
    let fyr = lateral_axle_force(alpha_r, fz_r, g_r, &t.rear);
    let fyf = front_lateral(x, p, t, cmd.fx_f);
    let (dvx, dvy, dr) = rigid_body(x, p, cmd.rear(), cmd.fx_f, fyf, fyr, 0.0);
    assemble(x, u, rho, dvx, dvy, dr)
}

/// Kinematic single-track model in the dynamic state layout. `vy` and `r`
/// follow their kinematic values, differentiated in time, and relax onto
/// them with time constant `tau`.
pub fn kinematic_derivative(
    x: &CurvState,
    u: &RateInput,
    rho: f64,
    p: &VehicleParams,
    tau: f64,
) -> Result<CurvState> {
    let tan_d = x.delta.tan();
    let sec2 = 1.0 + tan_d * tan_d;
    let r_k = x.vx * tan_d / p.l;
    let dr_k = (x.d * tan_d + x.vx * sec2 * u.ddelta) / p.l;
    let dr = dr_k + (r_k - x.r) / tau;
    let dvy = p.lr * dr_k + (p.lr * r_k - x.vy) / tau;
    assemble(x, u, rho, x.d, dvy, dr)
}

/// A model together with its parameters.
#[derive(Debug, Clone)]
pub struct VehicleModel {
    pub kind: ModelKind,
    /// Mix in the kinematic model at low speed.
    pub blend: Option<BlendBand>,
    pub kinematic_tau: f64,
    pub params: VehicleParams,
    pub tires: TireParams,
}

impl VehicleModel {
    pub fn new(kind: ModelKind, params: VehicleParams, tires: TireParams) -> Self {
        Self {
            kind,
            blend: Some(BlendBand::default()),
            kinematic_tau: 0.15,
            params,
            tires,
        }
    }

    pub fn unblended(mut self) -> Self {
        self.blend = None;
        self
    }

    fn dynamic(
        &self,
        x: &CurvState,
        u: &RateInput,
        rho: f64,
        ctx: &ModelContext,
    ) -> Result<CurvState> {
        match self.kind {
            ModelKind::Kinematic => {
                kinematic_derivative(x, u, rho, &self.params, self.kinematic_tau)
            }
            ModelKind::SingleTrack => single_track_derivative(x, u, rho, &self.params, &self.tires),
            ModelKind::Tricycle => tricycle_derivative(x, u, rho, ctx, &self.params, &self.tires),
        }
    }

    /// Time derivative of the state, blended if a band is configured.
    pub fn derivative(
        &self,
        x: &CurvState,
        u: &RateInput,
        rho: f64,
        ctx: &ModelContext,
    ) -> Result<CurvState> {
        let lambda = match (self.kind, self.blend) {
            (ModelKind::Kinematic, _) | (_, None) => 1.0,
            (_, Some(band)) => band.lambda(x.vx),
        };
        let out = if lambda >= 1.0 {
            self.dynamic(x, u, rho, ctx)?
        } else if lambda <= 0.0 {
            kinematic_derivative(x, u, rho, &self.params, self.kinematic_tau)?
        } else {
            let dy = self.dynamic(x, u, rho, ctx)?.to_array();
            let ki = kinematic_derivative(x, u, rho, &self.params, self.kinematic_tau)?.to_array();
            let mut mix = [0.0; STATE_DIM];
            for i in 0..STATE_DIM {
                mix[i] = (1.0 - lambda) * ki[i] + lambda * dy[i];
            }
            CurvState::from_array(&mix)
        };
        if out.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration(x.to_array().to_vec()));
        }
        Ok(out)
    }

    /// Differential yaw moment at a state; zero for models without a locked axle.
    pub fn m_diff(&self, x: &CurvState, ctx: &ModelContext) -> f64 {
        match self.kind {
            ModelKind::Tricycle => rear_wheel_state(x, ctx, &self.params, &self.tires).m_diff,
            _ => 0.0,
        }
    }
}

/// Lateral acceleration `vy_dot + vx * r` from a state and its derivative.
pub fn lateral_accel(x: &CurvState, dx: &CurvState) -> f64 {
    dx.vy + x.vx * x.r
}
