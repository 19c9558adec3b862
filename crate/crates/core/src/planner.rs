//! Offline speed profile and online longitudinal (double-integrator) planner.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{TireParams, VehicleParams, GRAVITY};
use crate::qp::{QpBuilder, QpSettings, QpStatus};
use crate::track::Track;

/// Speed-dependent acceleration limits, linearly interpolated and clamped
/// at the table ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelLimits {
    /// `(vx, ay_max)` rows, ascending in vx.
    pub ay: Vec<[f64; 2]>,
    /// `(vx, ax_max, ax_min)` rows, ascending in vx.
    pub ax: Vec<[f64; 3]>,
    pub v_top: f64,
    pub source: String,
}

fn interp(rows: impl Iterator<Item = (f64, f64)> + Clone, v: f64) -> f64 {
    let mut prev: Option<(f64, f64)> = None;
    for (x, y) in rows.clone() {
        if v <= x {
            return match prev {
                None => y,
                Some((x0, y0)) => y0 + (v - x0) / (x - x0) * (y - y0),
            };
        }
        prev = Some((x, y));
    }
    prev.map(|p| p.1).unwrap_or(0.0)
}

impl AccelLimits {
    pub fn new(
        ay: Vec<[f64; 2]>,
        ax: Vec<[f64; 3]>,
        v_top: f64,
        source: impl Into<String>,
    ) -> Result<Self> {
        let lim = Self {
            ay,
            ax,
            v_top,
            source: source.into(),
        };
        lim.validate()?;
        Ok(lim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ay.is_empty() || self.ax.is_empty() {
            return Err(Error::Config(
                "acceleration tables must not be empty".into(),
            ));
        }
        if self.ay.windows(2).any(|w| w[1][0] <= w[0][0])
            || self.ax.windows(2).any(|w| w[1][0] <= w[0][0])
        {
            return Err(Error::Config(
                "acceleration tables must be strictly ascending in vx".into(),
            ));
        }
        if self.ay.iter().any(|r| !(r[1] > 0.0)) {
            return Err(Error::Config("ay_max must be positive everywhere".into()));
        }
        if self.ax.iter().any(|r| !(r[2] < 0.0 && r[1] > 0.0)) {
            return Err(Error::Config("tables need ax_min < 0 < ax_max".into()));
        }
        if !(self.v_top > 0.0) {
            return Err(Error::Config("v_top must be positive".into()));
        }
        Ok(())
    }

    pub fn ay_max(&self, v: f64) -> f64 {
        interp(self.ay.iter().map(|r| (r[0], r[1])), v)
    }

    pub fn ax_max(&self, v: f64) -> f64 {
        interp(self.ax.iter().map(|r| (r[0], r[1])), v)
    }

    pub fn ax_min(&self, v: f64) -> f64 {
        interp(self.ax.iter().map(|r| (r[0], r[2])), v)
    }

    /// Synthetic tables from the vehicle parameters: grip with downforce,
    /// engine power over the gears, brake capacity and drag, all scaled by
    /// `grip_scale`. Stands in for ramp-steer and braking-diagram data.
    pub fn synthetic(p: &VehicleParams, t: &TireParams, grip_scale: f64) -> Self {
        let mu = 0.5 * (t.front.mu + t.rear.mu);
        let mut ay = Vec::new();
        let mut ax = Vec::new();
        let mut v_top = 0.0;
        let mut v = 0.0;
        while v <= 90.0 {
            let down = p.downforce_front(v) + p.downforce_rear(v);
            let resist = p.drag(v) + p.rolling(v);
            ay.push([v, grip_scale * mu * (p.m * GRAVITY + down) / p.m]);
            let traction = grip_scale * t.rear_long.mu * (p.f0_zr + p.downforce_rear(v));
            let omega = v / p.r_w;
            let engine = (0..p.gear_ratios.len())
                .map(|g| {
                    let rpm = p.engine_rpm(omega, g).max(p.idle_rpm);
                    p.engine_max_torque(rpm) * p.overall_ratio(g) * p.eta_t / p.r_w
                })
                .fold(0.0, f64::max);
            let a_plus = (traction.min(engine) - resist) / p.m;
            let brake = grip_scale * (mu * (p.m * GRAVITY + down)).min(p.c_bf + p.c_br);
            let a_minus = -(brake + resist) / p.m;
            if a_plus <= 0.3 {
                break;
            }
            ax.push([v, a_plus, a_minus]);
            v_top = v;
            v += 2.5;
        }
        ay.truncate(ax.len());
        Self {
            ay,
            ax,
            v_top,
            source: format!("synthetic from vehicle parameters, grip scale {grip_scale}"),
        }
    }

    pub fn load(ay_path: &Path, ax_path: &Path) -> Result<Self> {
        let ay_rows = read_table(ay_path, &["vx", "ay_max"])?;
        let ax_rows = read_table(ax_path, &["vx", "ax_max", "ax_min"])?;
        let ay: Vec<[f64; 2]> = ay_rows.iter().map(|r| [r[0], r[1]]).collect();
        let ax: Vec<[f64; 3]> = ax_rows.iter().map(|r| [r[0], r[1], r[2]]).collect();
        let v_top = ay
            .last()
            .map(|r| r[0])
            .unwrap_or(0.0)
            .min(ax.last().map(|r| r[0]).unwrap_or(0.0));
        Self::new(
            ay,
            ax,
            v_top,
            format!("{} + {}", ay_path.display(), ax_path.display()),
        )
    }

    pub fn write(&self, ay_path: &Path, ax_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(ay_path)?;
        w.write_record(["vx", "ay_max"])?;
        for r in &self.ay {
            w.write_record([r[0].to_string(), r[1].to_string()])?;
        }
        w.flush().map_err(|e| Error::io(ay_path, e))?;
        let mut w = csv::Writer::from_path(ax_path)?;
        w.write_record(["vx", "ax_max", "ax_min"])?;
        for r in &self.ax {
            w.write_record([r[0].to_string(), r[1].to_string(), r[2].to_string()])?;
        }
        w.flush().map_err(|e| Error::io(ax_path, e))
    }
}

fn read_table(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == *c)
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: c.to_string(),
                })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        let row = idx
            .iter()
            .map(|&i| {
                rec.get(i)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("column {}: {e}", headers.get(i).unwrap_or("?")),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Longitudinal limits shrunk by the lateral acceleration in use:
/// `(ax_min, ax_max) * sqrt(1 - (ay / ay_max)^2)`.
pub fn friction_ellipse_bounds(vx: f64, ay: f64, limits: &AccelLimits) -> (f64, f64) {
    let w = (1.0 - (ay / limits.ay_max(vx)).powi(2)).max(0.0).sqrt();
    (limits.ax_min(vx) * w, limits.ax_max(vx) * w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    /// Curvature used at each sample.
    #[serde(default)]
    pub kappa: Vec<f64>,
    pub closed: bool,
    pub length: f64,
}

impl SpeedProfile {
    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.s.len();
        let s = if self.closed {
            s.rem_euclid(self.length)
        } else {
            s.clamp(self.s[0], self.s[n - 1])
        };
        let i = match self.s.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let i = i.min(n - 1);
        let (s0, s1) = if i + 1 < n {
            (self.s[i], self.s[i + 1])
        } else if self.closed {
            (self.s[i], self.length)
        } else {
            return (i, 0.0);
        };
        (i, ((s - s0) / (s1 - s0)).clamp(0.0, 1.0))
    }

    fn lerp(&self, values: &[f64], s: f64) -> f64 {
        let (i, w) = self.locate(s);
        let j = if i + 1 < values.len() {
            i + 1
        } else if self.closed {
            0
        } else {
            i
        };
        values[i] + w * (values[j] - values[i])
    }

    pub fn speed_at(&self, s: f64) -> f64 {
        self.lerp(&self.v, s)
    }

    pub fn accel_at(&self, s: f64) -> f64 {
        self.lerp(&self.a, s)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["s", "v", "a"])?;
        for i in 0..self.s.len() {
            w.write_record([
                self.s[i].to_string(),
                self.v[i].to_string(),
                self.a[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads an `s,v,a` file; closure and curvature come from `track`.
    pub fn load_csv(path: &Path, track: &Track) -> Result<Self> {
        let rows = read_table(path, &["s", "v", "a"])?;
        if rows.len() < 2 {
            return Err(Error::Validation(format!(
                "{}: profile needs >= 2 rows",
                path.display()
            )));
        }
        let s: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "{}: s must be strictly increasing",
                path.display()
            )));
        }
        let kappa = s.iter().map(|&x| track.curvature_clamped(x)).collect();
        Ok(Self {
            v: rows.iter().map(|r| r[1]).collect(),
            a: rows.iter().map(|r| r[2]).collect(),
            s,
            kappa,
            closed: track.is_closed(),
            length: track.total_length(),
        })
    }
}

/// Largest speed in `[0, v_top]` with `v^2 |rho| <= ay_max(v)`.
pub fn lateral_speed_cap(rho: f64, limits: &AccelLimits) -> f64 {
    let rho = rho.abs();
    let ok = |v: f64| v * v * rho <= limits.ay_max(v);
    if ok(limits.v_top) {
        return limits.v_top;
    }
    let grid = 256;
    let mut hi = limits.v_top;
    let mut lo = 0.0;
    for k in (0..grid).rev() {
        let v = limits.v_top * k as f64 / grid as f64;
        if ok(v) {
            lo = v;
            break;
        }
        hi = v;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn accel_budget(v: f64, rho: f64, limits: &AccelLimits) -> (f64, f64) {
    friction_ellipse_bounds(v, v * v * rho.abs(), limits)
}

/// Pair limits of consecutive samples: `(v1^2 - v0^2) / (2 ds)` must lie in
/// `[ax_min_eff(v1, rho1), ax_max_eff(v0, rho0)]`.
fn pair_bounds(v0: f64, rho0: f64, v1: f64, rho1: f64, limits: &AccelLimits) -> (f64, f64) {
    (
        accel_budget(v1, rho1, limits).0,
        accel_budget(v0, rho0, limits).1,
    )
}

/// Three-pass speed profile: lateral cap, forward acceleration pass and
/// backward braking pass, iterated to a periodic fixed point on closed
/// tracks.
pub fn generate_speed_profile(
    track: &Track,
    limits: &AccelLimits,
    ds: f64,
) -> Result<SpeedProfile> {
    limits.validate()?;
    if !(ds > 0.0) {
        return Err(Error::Config(format!(
            "profile ds must be positive, got {ds}"
        )));
    }
    if track.samples().len() < 2 || track.total_length() <= 0.0 {
        return Err(Error::Config("empty track".into()));
    }
    let length = track.total_length();
    let segments = ((length / ds).round() as usize).max(1);
    let step = length / segments as f64;
    let count = if track.is_closed() {
        segments
    } else {
        segments + 1
    };
    let s: Vec<f64> = (0..count).map(|i| i as f64 * step).collect();
    let kappa: Vec<f64> = s.iter().map(|&x| track.curvature_clamped(x)).collect();
    let mut v: Vec<f64> = kappa
        .iter()
        .map(|&k| lateral_speed_cap(k, limits))
        .collect();

    let pairs: Vec<(usize, usize)> = if track.is_closed() {
        (0..count).map(|i| (i, (i + 1) % count)).collect()
    } else {
        (0..count - 1).map(|i| (i, i + 1)).collect()
    };
    let rounds = if track.is_closed() { 8 } else { 1 };
    for _ in 0..rounds {
        let before = v.clone();
        for &(i, j) in &pairs {
            let hi = accel_budget(v[i], kappa[i], limits).1;
            let cap = (v[i] * v[i] + 2.0 * step * hi).max(0.0).sqrt();
            if v[j] > cap {
                v[j] = cap;
            }
        }
        for &(i, j) in pairs.iter().rev() {
            let lo = accel_budget(v[j], kappa[j], limits).0;
            let cap = (v[j] * v[j] - 2.0 * step * lo).max(0.0).sqrt();
            if v[i] > cap {
                v[i] = cap;
            }
        }
        let change = v
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < 1e-9 {
            break;
        }
    }
    let mut a = vec![0.0; count];
    for &(i, j) in &pairs {
        a[i] = (v[j] * v[j] - v[i] * v[i]) / (2.0 * step);
    }
    Ok(SpeedProfile {
        s,
        v,
        a,
        kappa,
        closed: track.is_closed(),
        length,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditViolation {
    pub index: usize,
    /// Amount by which a constraint is exceeded (m/s^2, or m/s for the cap).
    pub excess: f64,
    pub kind: AuditKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    Lateral,
    Accel,
    Brake,
}

/// Checks every sample and consecutive pair of a profile against the
/// limits; returns all violations above `tol`.
pub fn audit_profile(
    profile: &SpeedProfile,
    limits: &AccelLimits,
    tol: f64,
) -> Vec<AuditViolation> {
    let n = profile.s.len();
    let mut out = Vec::new();
    for i in 0..n {
        let v = profile.v[i];
        let rho = profile.kappa[i].abs();
        let excess = v * v * rho - limits.ay_max(v);
        if excess > tol {
            out.push(AuditViolation {
                index: i,
                excess,
                kind: AuditKind::Lateral,
            });
        }
        let j = if i + 1 < n {
            i + 1
        } else if profile.closed {
            0
        } else {
            continue;
        };
        let ds = if j == 0 {
            profile.length - profile.s[i]
        } else {
            profile.s[j] - profile.s[i]
        };
        let a = (profile.v[j].powi(2) - v * v) / (2.0 * ds);
        let (lo, hi) = pair_bounds(v, profile.kappa[i], profile.v[j], profile.kappa[j], limits);
        if a - hi > tol {
            out.push(AuditViolation {
                index: i,
                excess: a - hi,
                kind: AuditKind::Accel,
            });
        }
        if lo - a > tol {
            out.push(AuditViolation {
                index: i,
                excess: lo - a,
                kind: AuditKind::Brake,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmpcConfig {
    pub horizon: usize,
    pub ts: f64,
    pub q_v: f64,
    pub q_a: f64,
    pub r_j: f64,
    /// Terminal weight as a multiple of the stage weight.
    pub terminal_scale: f64,
    pub j_max: f64,
    /// Desired lateral acceleration as a fraction of the table value.
    pub ay_fraction: f64,
    pub curvature_eps: f64,
    pub slack_weight: f64,
}

impl Default for LmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            ts: 0.05,
            q_v: 1.0,
            q_a: 0.02,
            r_j: 1e-4,
            terminal_scale: 10.0,
            j_max: 60.0,
            ay_fraction: 0.97,
            curvature_eps: 1e-4,
            slack_weight: 1e4,
        }
    }
}

impl LmpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || !(self.ts > 0.0) || !(self.j_max > 0.0) {
            return Err(Error::Config(
                "lmpc horizon, ts and j_max must be positive".into(),
            ));
        }
        if !(self.ay_fraction > 0.0 && self.ay_fraction <= 1.0) {
            return Err(Error::Config("lmpc ay_fraction must lie in (0, 1]".into()));
        }
        if [
            self.q_v,
            self.q_a,
            self.r_j,
            self.terminal_scale,
            self.slack_weight,
        ]
        .iter()
        .any(|w| !(*w >= 0.0))
        {
            return Err(Error::Config("lmpc weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-stage data for one longitudinal plan, indexed `0..=T`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LmpcPreview {
    pub rho: Vec<f64>,
    pub v_ref: Vec<f64>,
    pub a_ref: Vec<f64>,
    /// Predicted speeds used for the lateral-acceleration estimate.
    pub v_hat: Vec<f64>,
    /// Lateral acceleration caps for the speed bound.
    pub ay_cap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LonPlan {
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub j: Vec<f64>,
    pub ts: f64,
    /// Per-stage speed bound and acceleration bounds used.
    pub v_max: Vec<f64>,
    pub ax_lo: Vec<f64>,
    pub ax_hi: Vec<f64>,
    /// Speed-cap slack was needed.
    pub softened: bool,
    pub status: QpStatus,
}

impl LonPlan {
    /// Plan value at time `t` after the plan start, linear between stages.
    pub fn sample(&self, values: &[f64], t: f64) -> f64 {
        let pos = (t / self.ts).max(0.0);
        let k = pos.floor() as usize;
        if k + 1 >= values.len() {
            return *values.last().unwrap();
        }
        let w = pos - k as f64;
        values[k] + w * (values[k + 1] - values[k])
    }
}

/// Speed bound from curvature and lateral cap.
pub fn curvature_speed_bound(ay_cap: f64, rho: f64, eps: f64) -> f64 {
    (ay_cap / rho.abs().max(eps)).sqrt()
}

/// Solves the longitudinal LMPC over jerk from `(v0, a0)`.
pub fn lmpc_solve(
    x_hat: (f64, f64),
    preview: &LmpcPreview,
    limits: &AccelLimits,
    cfg: &LmpcConfig,
) -> Result<LonPlan> {
    cfg.validate()?;
    let t_h = cfg.horizon;
    for (name, len) in [
        ("rho", preview.rho.len()),
        ("v_ref", preview.v_ref.len()),
        ("a_ref", preview.a_ref.len()),
        ("v_hat", preview.v_hat.len()),
        ("ay_cap", preview.ay_cap.len()),
    ] {
        if len != t_h + 1 {
            return Err(Error::Config(format!(
                "lmpc preview `{name}` has {len} stages, expected {}",
                t_h + 1
            )));
        }
    }
    let ts = cfg.ts;
    let (v0, a0) = x_hat;
    let mut v_max = vec![f64::INFINITY; t_h + 1];
    let mut ax_lo = vec![f64::NEG_INFINITY; t_h + 1];
    let mut ax_hi = vec![f64::INFINITY; t_h + 1];
    for t in 1..=t_h {
        v_max[t] = curvature_speed_bound(preview.ay_cap[t], preview.rho[t], cfg.curvature_eps);
        let ay_hat = preview.rho[t] * preview.v_hat[t].powi(2);
        let (lo, hi) = friction_ellipse_bounds(preview.v_hat[t], ay_hat, limits);
        ax_lo[t] = lo;
        ax_hi[t] = hi;
    }
    // condensed: v_t = v0 + t ts a0 + sum_k cv[t][k] j_k, a_t = a0 + ts sum_{k<t} j_k
    let cv = |t: usize, k: usize| -> f64 {
        if k < t {
            ts * ts * (0.5 + (t - 1 - k) as f64)
        } else {
            0.0
        }
    };
    let nj = t_h;
    let slack = |t: usize| nj + t - 1;
    let mut qp = QpBuilder::new(nj + t_h);
    for t in 1..=t_h {
        let w = if t == t_h { cfg.terminal_scale } else { 1.0 };
        let vrow: Vec<(usize, f64)> = (0..t).map(|k| (k, cv(t, k))).collect();
        let arow: Vec<(usize, f64)> = (0..t).map(|k| (k, ts)).collect();
        let v_free = v0 + t as f64 * ts * a0;
        qp.add_square(&vrow, preview.v_ref[t] - v_free, 2.0 * w * cfg.q_v);
        qp.add_square(&arow, preview.a_ref[t] - a0, 2.0 * w * cfg.q_a);
        let mut cap = vrow.clone();
        cap.push((slack(t), -1.0));
        qp.add_le(&cap, v_max[t] - v_free);
        qp.add_bounds(slack(t), 0.0, f64::INFINITY);
        qp.add_linear(slack(t), cfg.slack_weight);
        qp.add_le(&arow, ax_hi[t] - a0);
        let neg: Vec<(usize, f64)> = arow.iter().map(|&(k, c)| (k, -c)).collect();
        qp.add_le(&neg, a0 - ax_lo[t]);
    }
    for k in 0..nj {
        qp.add_square(&[(k, 1.0)], 0.0, 2.0 * cfg.r_j);
        qp.add_bounds(k, -cfg.j_max, cfg.j_max);
    }
    let sol = qp.solve(&QpSettings {
        max_iter: 200,
        tol: 1e-9,
    })?;
    if !matches!(sol.status, QpStatus::Solved | QpStatus::Inaccurate) {
        return Err(Error::Qp(format!("longitudinal plan {:?}", sol.status)));
    }
    let j: Vec<f64> = sol.x[..nj]
        .iter()
        .map(|x| x.clamp(-cfg.j_max, cfg.j_max))
        .collect();
    let mut v = vec![v0];
    let mut a = vec![a0];
    for t in 0..t_h {
        v.push(v[t] + ts * a[t] + 0.5 * ts * ts * j[t]);
        a.push(a[t] + ts * j[t]);
    }
    let softened = sol.x[nj..].iter().any(|s| *s > 1e-6);
    Ok(LonPlan {
        v,
        a,
        j,
        ts,
        v_max,
        ax_lo,
        ax_hi,
        softened,
        status: sol.status,
    })
}

/// Online longitudinal planner bound to a track and offline profile.
#[derive(Debug, Clone)]
pub struct LonPlanner {
    pub cfg: LmpcConfig,
    pub limits: AccelLimits,
    pub profile: SpeedProfile,
    prev: Option<LonPlan>,
}

impl LonPlanner {
    pub fn new(cfg: LmpcConfig, limits: AccelLimits, profile: SpeedProfile) -> Result<Self> {
        cfg.validate()?;
        limits.validate()?;
        Ok(Self {
            cfg,
            limits,
            profile,
            prev: None,
        })
    }

    pub fn last_plan(&self) -> Option<&LonPlan> {
        self.prev.as_ref()
    }

    /// Builds the preview along the track from progress `s` and the previous
    /// plan (shifted by `elapsed`), then solves.
    pub fn preview(&self, s: f64, v0: f64, elapsed: f64, track: &Track) -> LmpcPreview {
        let t_h = self.cfg.horizon;
        let ts = self.cfg.ts;
        let mut pos = s;
        let mut p = LmpcPreview::default();
        for t in 0..=t_h {
            let v_hat = match &self.prev {
                Some(plan) => plan.sample(&plan.v, elapsed + t as f64 * ts),
                None => {
                    if t == 0 {
                        v0
                    } else {
                        self.profile.speed_at(pos)
                    }
                }
            }
            .max(0.0);
            let rho = track.curvature_clamped(pos);
            p.rho.push(rho);
            p.v_ref.push(self.profile.speed_at(pos));
            p.a_ref.push(self.profile.accel_at(pos));
            p.v_hat.push(v_hat);
            p.ay_cap
                .push(self.cfg.ay_fraction * self.limits.ay_max(v_hat));
            pos += v_hat * ts;
            if !track.is_closed() {
                pos = pos.min(track.total_length());
            }
        }
        p
    }

    pub fn plan(
        &mut self,
        s: f64,
        v0: f64,
        a0: f64,
        elapsed: f64,
        track: &Track,
    ) -> Result<LonPlan> {
        let preview = self.preview(s, v0, elapsed, track);
        let plan = lmpc_solve((v0, a0), &preview, &self.limits, &self.cfg)?;
        self.prev = Some(plan.clone());
        Ok(plan)
    }
}
