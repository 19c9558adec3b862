//! C ABI over `tricycle-core`.
//!
//! Objects are opaque handles created by `*_new`, `*_load` or
//! `tricycle_simulate` and released with the matching `*_free`. Fallible
//! calls return a [`TricycleStatus`]; the message of the last failure on the
//! calling thread is available from [`tricycle_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tricycle_core::config::Config;
use tricycle_core::lowlevel::ThrottleMap;
use tricycle_core::models::{CurvState, ModelContext, ModelKind, RateInput, VehicleModel};
use tricycle_core::numerics::{model_stability_scan, IntegratorKind};
use tricycle_core::planner::generate_speed_profile;
use tricycle_core::sim::{compute_metrics, run_closed_loop, Telemetry, Termination};
use tricycle_core::track::load_track;
use tricycle_core::trackgen::{load_segments, monza_like, NamedSegment, SegmentKind};
use tricycle_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TricycleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Bad configuration or unreadable input file.
    Config = 3,
    /// The computation itself failed.
    Domain = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TricycleModelKind {
    Kinematic = 0,
    SingleTrack = 1,
    Tricycle = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TricycleIntegrator {
    Euler = 0,
    Rk4 = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TricycleTermination {
    Completed = 0,
    TimeLimit = 1,
    OffTrack = 2,
    Lost = 3,
    NonFinite = 4,
}

/// Curvilinear vehicle state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TricycleState {
    pub s: f64,
    pub n: f64,
    pub mu: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub delta: f64,
    pub d: f64,
}

/// Steering and drive-command rates.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TricycleInput {
    pub ddelta: f64,
    pub dd: f64,
}

/// Subset of one telemetry tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TricycleRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub s: f64,
    pub e_y: f64,
    pub e_psi_deg: f64,
    pub delta: f64,
    pub delta_cmd: f64,
    pub throttle: f64,
    pub brake: f64,
}

pub struct TricycleConfig(Config);

pub struct TricycleModel(VehicleModel);

pub struct TricycleRun {
    telemetry: Telemetry,
    metrics_json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn from_core(e: Error) -> TricycleStatus {
    set_error(e.to_string());
    if e.is_config() {
        TricycleStatus::Config
    } else {
        TricycleStatus::Domain
    }
}

fn guard(f: impl FnOnce() -> TricycleStatus) -> TricycleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            TricycleStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("`", stringify!($p), "` is null"));
            return TricycleStatus::NullPointer;
        })+
    };
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, TricycleStatus> {
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("`{name}` is not valid UTF-8"));
        TricycleStatus::InvalidArgument
    })
}

impl From<TricycleModelKind> for ModelKind {
    fn from(k: TricycleModelKind) -> Self {
        match k {
            TricycleModelKind::Kinematic => ModelKind::Kinematic,
            TricycleModelKind::SingleTrack => ModelKind::SingleTrack,
            TricycleModelKind::Tricycle => ModelKind::Tricycle,
        }
    }
}

impl From<TricycleIntegrator> for IntegratorKind {
    fn from(k: TricycleIntegrator) -> Self {
        match k {
            TricycleIntegrator::Euler => IntegratorKind::Euler,
            TricycleIntegrator::Rk4 => IntegratorKind::Rk4,
        }
    }
}

impl From<TricycleState> for CurvState {
    fn from(x: TricycleState) -> Self {
        CurvState {
            s: x.s,
            n: x.n,
            mu: x.mu,
            vx: x.vx,
            vy: x.vy,
            r: x.r,
            delta: x.delta,
            d: x.d,
        }
    }
}

impl From<CurvState> for TricycleState {
    fn from(x: CurvState) -> Self {
        TricycleState {
            s: x.s,
            n: x.n,
            mu: x.mu,
            vx: x.vx,
            vy: x.vy,
            r: x.r,
            delta: x.delta,
            d: x.d,
        }
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tricycle_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Built-in default configuration.
#[no_mangle]
pub extern "C" fn tricycle_config_new() -> *mut TricycleConfig {
    Box::into_raw(Box::new(TricycleConfig(Config::default())))
}

/// Loads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tricycle_config_load(
    path: *const c_char,
    out: *mut *mut TricycleConfig,
) -> TricycleStatus {
    non_null!(path, out);
    guard(|| {
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Config::load(Some(Path::new(path)), &[]) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(TricycleConfig(cfg)));
                TricycleStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Applies one `section.key=value` override; the config is unchanged on error.
///
/// # Safety
/// `cfg` must come from this library and `spec` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tricycle_config_set(
    cfg: *mut TricycleConfig,
    spec: *const c_char,
) -> TricycleStatus {
    non_null!(cfg, spec);
    guard(|| {
        let spec = match str_arg(spec, "spec") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let cfg = &mut *cfg;
        let updated = cfg
            .0
            .to_toml()
            .and_then(|text| Config::from_toml_str(&text, &[spec.to_string()]));
        match updated {
            Ok(c) => {
                cfg.0 = c;
                TricycleStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `cfg` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tricycle_config_free(cfg: *mut TricycleConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Prediction model built from the vehicle and tire sections of `cfg`.
///
/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tricycle_model_new(
    cfg: *const TricycleConfig,
    kind: TricycleModelKind,
    out: *mut *mut TricycleModel,
) -> TricycleStatus {
    non_null!(cfg, out);
    guard(|| {
        let c = &(*cfg).0;
        let model = VehicleModel::new(kind.into(), c.vehicle.clone(), c.tires);
        *out = Box::into_raw(Box::new(TricycleModel(model)));
        TricycleStatus::Ok
    })
}

/// State derivative at curvature `rho` with the given lateral acceleration
/// and differential-moment context.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tricycle_model_derivative(
    model: *const TricycleModel,
    state: *const TricycleState,
    input: *const TricycleInput,
    rho: f64,
    ay: f64,
    m0_diff: f64,
    out: *mut TricycleState,
) -> TricycleStatus {
    non_null!(model, state, input, out);
    guard(|| {
        let u = RateInput {
            ddelta: (*input).ddelta,
            dd: (*input).dd,
        };
        let ctx = ModelContext { ay, m0_diff };
        match (*model).0.derivative(&(*state).into(), &u, rho, &ctx) {
            Ok(dx) => {
                *out = dx.into();
                TricycleStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Locked-axle yaw moment of the rear wheels; zero for models without one.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tricycle_model_m_diff(
    model: *const TricycleModel,
    state: *const TricycleState,
    ay: f64,
    m0_diff: f64,
    out: *mut f64,
) -> TricycleStatus {
    non_null!(model, state, out);
    guard(|| {
        *out = (*model)
            .0
            .m_diff(&(*state).into(), &ModelContext { ay, m0_diff });
        TricycleStatus::Ok
    })
}

/// Smallest speed of `speeds` from which the linearized lateral dynamics
/// stay stable under `method` with step `h`. Returns `Domain` when no
/// grid speed qualifies.
///
/// # Safety
/// `speeds` must point to `n` values; all pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tricycle_min_stable_speed(
    model: *const TricycleModel,
    method: TricycleIntegrator,
    h: f64,
    speeds: *const f64,
    n: usize,
    out: *mut f64,
) -> TricycleStatus {
    non_null!(model, speeds, out);
    if n == 0 || h.is_nan() || h <= 0.0 {
        set_error("need at least one speed and h > 0");
        return TricycleStatus::InvalidArgument;
    }
    guard(|| {
        let grid = std::slice::from_raw_parts(speeds, n);
        match model_stability_scan(&(*model).0, h, method.into(), grid).min_stable_speed {
            Some(v) => {
                *out = v;
                TricycleStatus::Ok
            }
            None => {
                set_error("no stable speed on the grid");
                TricycleStatus::Domain
            }
        }
    })
}

/// # Safety
/// `model` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tricycle_model_free(model: *mut TricycleModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn whole_track(length: f64) -> Vec<NamedSegment> {
    vec![NamedSegment {
        name: "track".into(),
        s_start: 0.0,
        s_end: length,
        kind: SegmentKind::Straight,
        radius: f64::INFINITY,
    }]
}

fn simulate(
    cfg: &Config,
    track: Option<&str>,
    segments: Option<&str>,
) -> tricycle_core::Result<TricycleRun> {
    let (track, segs) = match track {
        Some(p) => {
            let t = load_track(Path::new(p))?;
            let segs = match segments {
                Some(s) => load_segments(Path::new(s))?,
                None => whole_track(t.total_length()),
            };
            (t, segs)
        }
        None => {
            let g = monza_like(1.0)?;
            (g.track, g.segments)
        }
    };
    let limits = cfg.synthetic_limits();
    let profile = generate_speed_profile(&track, &limits, cfg.planner.ds)?;
    let map = ThrottleMap::synthetic(&cfg.vehicle);
    let scn = cfg.scenario(track, segs.clone(), limits, profile, map);
    let telemetry = run_closed_loop(&scn)?;
    let json = compute_metrics(&telemetry, &segs).to_json()?;
    Ok(TricycleRun {
        telemetry,
        metrics_json: CString::new(json).unwrap_or_default(),
    })
}

/// Closed-loop run. `track_path` null selects the built-in Monza-like
/// track; `segments_path` may be null. Off-track runs still return `Ok`
/// with the partial telemetry; check `tricycle_run_termination`.
///
/// # Safety
/// `cfg` and `out` must be valid; the paths null or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn tricycle_simulate(
    cfg: *const TricycleConfig,
    track_path: *const c_char,
    segments_path: *const c_char,
    out: *mut *mut TricycleRun,
) -> TricycleStatus {
    non_null!(cfg, out);
    guard(|| {
        let opt = |p: *const c_char, name: &str| {
            if p.is_null() {
                Ok(None)
            } else {
                str_arg(p, name).map(Some)
            }
        };
        let track = match opt(track_path, "track_path") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let segments = match opt(segments_path, "segments_path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match simulate(&(*cfg).0, track, segments) {
            Ok(run) => {
                *out = Box::into_raw(Box::new(run));
                TricycleStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `run` must come from `tricycle_simulate`.
#[no_mangle]
pub unsafe extern "C" fn tricycle_run_termination(run: *const TricycleRun) -> TricycleTermination {
    match (*run).telemetry.termination {
        Termination::Completed => TricycleTermination::Completed,
        Termination::TimeLimit => TricycleTermination::TimeLimit,
        Termination::OffTrack { .. } => TricycleTermination::OffTrack,
        Termination::Lost { .. } => TricycleTermination::Lost,
        Termination::NonFinite { .. } => TricycleTermination::NonFinite,
    }
}

/// Number of telemetry ticks.
///
/// # Safety
/// `run` must come from `tricycle_simulate` or be null, which yields 0.
#[no_mangle]
pub unsafe extern "C" fn tricycle_run_len(run: *const TricycleRun) -> usize {
    match run.as_ref() {
        Some(run) => run.telemetry.records.len(),
        None => 0,
    }
}

/// # Safety
/// `run` must come from `tricycle_simulate` and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn tricycle_run_record(
    run: *const TricycleRun,
    index: usize,
    out: *mut TricycleRecord,
) -> TricycleStatus {
    non_null!(run, out);
    let run = &*run;
    let Some(r) = run.telemetry.records.get(index) else {
        set_error(format!("record {index} out of range"));
        return TricycleStatus::InvalidArgument;
    };
    *out = TricycleRecord {
        t: r.t,
        x: r.x,
        y: r.y,
        psi: r.psi,
        vx: r.vx,
        s: r.s,
        e_y: r.e_y,
        e_psi_deg: r.e_psi_deg,
        delta: r.delta,
        delta_cmd: r.delta_cmd,
        throttle: r.throttle,
        brake: r.brake,
    };
    TricycleStatus::Ok
}

/// Metrics report as JSON; valid until the run is freed.
///
/// # Safety
/// `run` must come from `tricycle_simulate`.
#[no_mangle]
pub unsafe extern "C" fn tricycle_run_metrics_json(run: *const TricycleRun) -> *const c_char {
    (*run).metrics_json.as_ptr()
}

/// # Safety
/// `run` must be null or come from `tricycle_simulate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tricycle_run_free(run: *mut TricycleRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
