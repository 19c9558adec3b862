//! `tricycle` command line: stability scans, speed profiles, closed-loop
//! simulation, open-loop model comparison and data export.
//!
//! Exit codes: 0 success, 1 domain failure, 2 configuration or input error.
//! Every path flag also reads a `TRICYCLE_*` environment variable; extra
//! `key=value` overrides come from `TRICYCLE_SET` (`;`-separated) and are
//! applied before `--set`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{env_overrides, Config, ENV_SET};
use crate::error::{Error, Result};
use crate::lowlevel::ThrottleMap;
use crate::models::{ModelKind, VehicleModel};
use crate::numerics::{model_stability_scan, IntegratorKind, StabilityReport};
use crate::planner::{
    audit_profile, generate_speed_profile, lateral_speed_cap, AccelLimits, SpeedProfile,
};
use crate::plot::{stability_boundary, Plot, Series, Style};
use crate::sim::metrics::check_partition;
use crate::sim::{
    compute_metrics, run_closed_loop_with_sink, MetricsReport, Telemetry, TelemetrySink,
};
use crate::track::{load_track, Track};
use crate::trackgen::{load_segments, monza_like, write_segments, NamedSegment, SegmentKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Tolerance of the profile audit in m/s^2.
const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(
    name = "tricycle",
    version,
    about = "Locked-differential tricycle MPC toolkit"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Track centerline CSV; defaults to the built-in Monza-like track.
    #[arg(long, global = true, env = "TRICYCLE_TRACK")]
    pub track: Option<PathBuf>,
    /// Named-segment CSV for the track.
    #[arg(long, global = true, env = "TRICYCLE_SEGMENTS")]
    pub segments: Option<PathBuf>,
    /// Full TOML configuration (vehicle, tires, controllers, simulation).
    #[arg(long, global = true, env = "TRICYCLE_VEHICLE")]
    pub vehicle: Option<PathBuf>,
    /// Directory holding `ay.csv` and `ax.csv` acceleration limits.
    #[arg(long, global = true, env = "TRICYCLE_LIMITS")]
    pub limits: Option<PathBuf>,
    /// Speed profile CSV; generated from the limits when absent.
    #[arg(long, global = true, env = "TRICYCLE_PROFILE")]
    pub profile: Option<PathBuf>,
    /// Engine map CSV in long format (rpm, torque, throttle).
    #[arg(long, global = true, env = "TRICYCLE_THROTTLE_MAP")]
    pub throttle_map: Option<PathBuf>,
    #[arg(long, global = true, env = "TRICYCLE_OUT", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, env = "TRICYCLE_SEED")]
    pub seed: Option<u64>,
    /// Prediction model of the MPC (`tricycle`, `single-track`, `kinematic`).
    #[arg(long, global = true, env = "TRICYCLE_CONTROLLER_MODEL")]
    pub controller_model: Option<ModelKind>,
    /// Integrator of the MPC prediction (`euler`, `rk4`).
    #[arg(long, global = true, env = "TRICYCLE_INTEGRATOR")]
    pub integrator: Option<IntegratorKind>,
    /// Integration step inside each MPC stage [s].
    #[arg(long, global = true, env = "TRICYCLE_H")]
    pub h: Option<f64>,
    /// MPC stage length [s].
    #[arg(long, global = true, env = "TRICYCLE_DT")]
    pub dt: Option<f64>,
    /// Configuration override `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalue stability of the prediction models over speed, method and step.
    Stability {
        /// Restrict the speed grid; repeatable.
        #[arg(long)]
        speed: Vec<f64>,
        /// Restrict the integration methods; repeatable.
        #[arg(long)]
        method: Vec<IntegratorKind>,
    },
    /// Offline minimum-time speed profile.
    Profile,
    /// Closed-loop run against the double-track plant.
    Simulate {
        /// Also stream telemetry as JSON lines.
        #[arg(long)]
        jsonl: bool,
    },
    /// Open-loop prediction errors of each model against a plant replay.
    Compare,
    /// Write the built-in track, limits, throttle map and effective config.
    Export,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_DOMAIN
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let c = &cli.common;
    match &cli.command {
        Command::Stability { speed, method } => {
            let cfg = load_config(c, false)?;
            cmd_stability(c, &cfg, speed, method)
        }
        Command::Profile => {
            let cfg = load_config(c, true)?;
            let inputs = Inputs::load(c, &cfg)?;
            cmd_profile(c, &cfg, inputs)
        }
        Command::Simulate { jsonl } => {
            let cfg = load_config(c, true)?;
            let inputs = Inputs::load(c, &cfg)?;
            cmd_simulate(c, &cfg, inputs, *jsonl)
        }
        Command::Compare => {
            let cfg = load_config(c, true)?;
            let inputs = Inputs::load(c, &cfg)?;
            cmd_compare(c, &cfg, inputs)
        }
        Command::Export => {
            let cfg = load_config(c, true)?;
            let inputs = Inputs::load(c, &cfg)?;
            cmd_export(c, &cfg, inputs)
        }
    }
}

/// Layers the config file, `TRICYCLE_SET`, `--set` and the dedicated flags.
/// `controller_flags` routes the MPC flags into the config; the stability
/// scan uses them as filters instead.
pub fn load_config(c: &Common, controller_flags: bool) -> Result<Config> {
    if let Some(p) = &c.vehicle {
        if !p.is_file() {
            return Err(Error::Config(format!(
                "vehicle config {} not found",
                p.display()
            )));
        }
    }
    let mut overrides = std::env::var(ENV_SET)
        .map(|v| env_overrides(&v))
        .unwrap_or_default();
    overrides.extend(c.set.iter().cloned());
    if let Some(seed) = c.seed {
        overrides.push(format!("sim.seed={seed}"));
    }
    if controller_flags {
        if let Some(m) = c.controller_model {
            overrides.push(format!("mpc.model=\"{m}\""));
        }
        if let Some(k) = c.integrator {
            overrides.push(format!("mpc.integrator=\"{k}\""));
        }
        if let Some(h) = c.h {
            overrides.push(format!("mpc.h={h:?}"));
        }
        if let Some(dt) = c.dt {
            overrides.push(format!("mpc.dt={dt:?}"));
        }
    }
    Config::load(c.vehicle.as_deref(), &overrides)
}

/// File inputs of the track-based commands, loaded before any computation.
pub struct Inputs {
    pub track: Track,
    pub segments: Vec<NamedSegment>,
    pub limits: AccelLimits,
    pub profile: Option<SpeedProfile>,
    pub map: ThrottleMap,
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "input file {} not found",
            path.display()
        )))
    }
}

impl Inputs {
    pub fn load(c: &Common, cfg: &Config) -> Result<Self> {
        for p in [&c.track, &c.segments, &c.profile, &c.throttle_map]
            .into_iter()
            .flatten()
        {
            require(p)?;
        }
        let (track, builtin_segments) = match &c.track {
            Some(p) => (load_track(p)?, None),
            None => {
                let g = monza_like(1.0)?;
                (g.track, Some(g.segments))
            }
        };
        let segments = match (&c.segments, builtin_segments) {
            (Some(p), _) => load_segments(p)?,
            (None, Some(s)) => s,
            (None, None) => vec![whole_track_segment(&track)],
        };
        check_partition(&segments, track.total_length()).map_err(|e| match &c.segments {
            Some(p) => Error::Config(format!("{}: {e}", p.display())),
            None => e,
        })?;
        let limits = match &c.limits {
            Some(dir) => {
                let (ay, ax) = (dir.join("ay.csv"), dir.join("ax.csv"));
                require(&ay)?;
                require(&ax)?;
                AccelLimits::load(&ay, &ax)?
            }
            None => cfg.synthetic_limits(),
        };
        let profile = match &c.profile {
            Some(p) => Some(SpeedProfile::load_csv(p, &track)?),
            None => None,
        };
        let map = match &c.throttle_map {
            Some(p) => ThrottleMap::load_csv(p)?,
            None => ThrottleMap::synthetic(&cfg.vehicle),
        };
        Ok(Self {
            track,
            segments,
            limits,
            profile,
            map,
        })
    }

    fn profile_or_generate(&mut self, cfg: &Config) -> Result<SpeedProfile> {
        if self.profile.is_none() {
            self.profile = Some(generate_speed_profile(
                &self.track,
                &self.limits,
                cfg.planner.ds,
            )?);
        }
        Ok(self.profile.clone().unwrap())
    }
}

fn whole_track_segment(track: &Track) -> NamedSegment {
    let k_max = track
        .samples()
        .iter()
        .map(|s| s.kappa.abs())
        .fold(0.0, f64::max);
    let (kind, radius) = if k_max < 1e-4 {
        (SegmentKind::Straight, f64::INFINITY)
    } else {
        (SegmentKind::from_radius(1.0 / k_max), 1.0 / k_max)
    };
    NamedSegment {
        name: "track".into(),
        s_start: 0.0,
        s_end: track.total_length(),
        kind,
        radius,
    }
}

fn out_dir(c: &Common) -> Result<&Path> {
    fs::create_dir_all(&c.out).map_err(|e| Error::io(&c.out, e))?;
    Ok(&c.out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_stability(
    c: &Common,
    cfg: &Config,
    speeds: &[f64],
    methods: &[IntegratorKind],
) -> Result<i32> {
    let mut st = cfg.stability.clone();
    if !speeds.is_empty() {
        st.speeds = speeds.to_vec();
    }
    if !methods.is_empty() {
        st.methods = methods.to_vec();
    } else if let Some(k) = c.integrator {
        st.methods = vec![k];
    }
    if let Some(h) = c.h {
        st.steps = vec![h];
    }
    if let Some(m) = c.controller_model {
        st.models = vec![m];
    }
    st.validate()?;
    let out = out_dir(c)?;
    let mut reports: Vec<StabilityReport> = Vec::new();
    for &kind in &st.models {
        let model = VehicleModel::new(kind, cfg.vehicle.clone(), cfg.tires);
        for &method in &st.methods {
            for &h in &st.steps {
                reports.push(model_stability_scan(&model, h, method, &st.speeds));
            }
        }
    }
    write_text(
        &out.join("stability.json"),
        &serde_json::to_string_pretty(&reports)?,
    )?;
    let mut table = format!(
        "{:<14}{:<8}{:>8}  {}\n",
        "model", "method", "h [s]", "min stable speed [m/s]"
    );
    for r in &reports {
        let v = r
            .min_stable_speed
            .map_or("none".to_string(), |v| format!("{v}"));
        let _ = writeln!(
            table,
            "{:<14}{:<8}{:>8}  {v}",
            r.model,
            r.method.to_string(),
            r.h
        );
    }
    print!("{table}");
    for &method in &st.methods {
        let mut plot = Plot::new(
            &format!("Poles times h, {method}"),
            "Re(lambda h)",
            "Im(lambda h)",
        );
        plot.equal_aspect = true;
        plot = plot.with(Series::new(
            format!("{method} region"),
            stability_boundary(method, 360),
            Style::Line,
        ));
        for r in reports.iter().filter(|r| r.method == method) {
            let pts: Vec<(f64, f64)> = r
                .speeds
                .iter()
                .flat_map(|v| v.eigenvalues.iter().map(|e| (e[0] * r.h, e[1] * r.h)))
                .collect();
            plot = plot.with(Series::new(
                format!("{} h={}", r.model, r.h),
                pts,
                Style::Points,
            ));
        }
        plot.write(&out.join(format!("stability_poles_{method}.svg")))?;
    }
    Ok(EXIT_OK)
}

fn cmd_profile(c: &Common, cfg: &Config, mut inputs: Inputs) -> Result<i32> {
    let profile = inputs.profile_or_generate(cfg)?;
    let out = out_dir(c)?;
    profile.write_csv(&out.join("profile.csv"))?;
    let cap: Vec<(f64, f64)> = inputs
        .track
        .samples()
        .iter()
        .map(|s| (s.s, lateral_speed_cap(s.kappa, &inputs.limits)))
        .collect();
    let v: Vec<(f64, f64)> = profile
        .s
        .iter()
        .zip(&profile.v)
        .map(|(&s, &v)| (s, v))
        .collect();
    Plot::new("Speed profile", "s [m]", "v [m/s]")
        .with(Series::new("lateral cap", cap, Style::Dashed))
        .with(Series::new("profile", v, Style::Line))
        .write(&out.join("profile.svg"))?;
    let violations = audit_profile(&profile, &inputs.limits, AUDIT_TOL);
    let v_min = profile.v.iter().copied().fold(f64::INFINITY, f64::min);
    let v_max = profile.v.iter().copied().fold(0.0, f64::max);
    println!(
        "{} samples, v in [{v_min:.2}, {v_max:.2}] m/s",
        profile.s.len()
    );
    if violations.is_empty() {
        println!("audit: ok");
        Ok(EXIT_OK)
    } else {
        write_text(
            &out.join("audit.json"),
            &serde_json::to_string_pretty(&violations)?,
        )?;
        println!("audit: {} violations (see audit.json)", violations.len());
        Ok(EXIT_DOMAIN)
    }
}

fn cmd_simulate(c: &Common, cfg: &Config, mut inputs: Inputs, jsonl: bool) -> Result<i32> {
    let profile = inputs.profile_or_generate(cfg)?;
    let out = out_dir(c)?.to_path_buf();
    let segments = inputs.segments.clone();
    let scn = cfg.scenario(
        inputs.track,
        inputs.segments,
        inputs.limits,
        profile,
        inputs.map,
    );
    let sink = if jsonl {
        Some(TelemetrySink::jsonl(&out.join("telemetry.jsonl"), 1024)?)
    } else {
        None
    };
    let tel = run_closed_loop_with_sink(&scn, sink.as_ref())?;
    if let Some(s) = sink {
        s.finish()?;
    }
    tel.write_csv(&out.join("telemetry.csv"))?;
    let metrics = compute_metrics(&tel, &segments);
    write_text(&out.join("metrics.json"), &metrics.to_json()?)?;
    write_sim_plots(&out, &tel)?;
    print!("{}", render_metrics(&metrics));
    Ok(if tel.termination.is_failure() {
        EXIT_DOMAIN
    } else {
        EXIT_OK
    })
}

fn series(
    tel: &Telemetry,
    y: impl Fn(&crate::sim::TelemetryRecord) -> f64,
    x_is_s: bool,
) -> Vec<(f64, f64)> {
    tel.records
        .iter()
        .map(|r| (if x_is_s { r.progress } else { r.t }, y(r)))
        .collect()
}

fn write_sim_plots(out: &Path, tel: &Telemetry) -> Result<()> {
    Plot::new("Lateral error", "progress [m]", "e_y [m]")
        .with(Series::new(
            "e_y",
            series(tel, |r| r.e_y, true),
            Style::Line,
        ))
        .write(&out.join("e_y.svg"))?;
    Plot::new("Speed", "progress [m]", "v [m/s]")
        .with(Series::new(
            "profile",
            series(tel, |r| r.v_profile, true),
            Style::Dashed,
        ))
        .with(Series::new("vx", series(tel, |r| r.vx, true), Style::Line))
        .write(&out.join("speed.svg"))?;
    Plot::new("Steering", "t [s]", "delta [rad]")
        .with(Series::new(
            "commanded",
            series(tel, |r| r.delta_cmd, false),
            Style::Dashed,
        ))
        .with(Series::new(
            "actual",
            series(tel, |r| r.delta, false),
            Style::Line,
        ))
        .write(&out.join("steering.svg"))
}

pub fn render_metrics(m: &MetricsReport) -> String {
    let mut s = format!("termination: {:?}\n", m.termination);
    if let Some(t) = m.lap_time {
        let _ = writeln!(s, "lap time: {t:.2} s");
    }
    let _ = writeln!(
        s,
        "{:<16}{:>10}{:>10}{:>12}{:>12}{:>10}",
        "segment", "mean e_y", "max e_y", "mean e_psi", "max e_psi", "mean dv"
    );
    for seg in std::iter::once(&m.overall).chain(&m.segments) {
        if seg.samples == 0 {
            continue;
        }
        let _ = writeln!(
            s,
            "{:<16}{:>10.3}{:>10.3}{:>12.3}{:>12.3}{:>10.3}",
            seg.name,
            seg.mean_abs_e_y,
            seg.max_abs_e_y,
            seg.mean_abs_e_psi_deg,
            seg.max_abs_e_psi_deg,
            seg.mean_abs_speed_error
        );
    }
    s
}

fn cmd_compare(c: &Common, cfg: &Config, mut inputs: Inputs) -> Result<i32> {
    let profile = inputs.profile_or_generate(cfg)?;
    let report = cfg.open_loop_compare(&inputs.track, &inputs.segments, &profile, &inputs.map)?;
    let out = out_dir(c)?;
    report.write_csv(&out.join("compare.csv"))?;
    let mut text = format!("horizon {} s", report.horizon);
    if let Some(k) = report.single_track_rear_scale {
        let _ = write!(text, ", single-track rear stiffness scale {k:.4}");
    }
    text.push('\n');
    text.push_str(&report.render_text());
    write_text(&out.join("compare.txt"), &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}

fn cmd_export(c: &Common, cfg: &Config, inputs: Inputs) -> Result<i32> {
    let out = out_dir(c)?;
    inputs.track.write_csv(&out.join("track.csv"))?;
    write_segments(&inputs.segments, &out.join("segments.csv"))?;
    let limits = out.join("limits");
    fs::create_dir_all(&limits).map_err(|e| Error::io(&limits, e))?;
    inputs
        .limits
        .write(&limits.join("ay.csv"), &limits.join("ax.csv"))?;
    inputs.map.write_csv(&out.join("throttle_map.csv"))?;
    write_text(&out.join("config.toml"), &cfg.to_toml()?)?;
    println!(
        "wrote track, segments, limits, throttle map and config to {}",
        out.display()
    );
    Ok(EXIT_OK)
}
