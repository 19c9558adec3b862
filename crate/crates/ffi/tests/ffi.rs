use std::ffi::{CStr, CString};
use std::ptr;

use tricycle_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe {
        tricycle_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn config_overrides_and_errors() {
    unsafe {
        let cfg = tricycle_config_new();
        let ok = CString::new("mpc.horizon=40").unwrap();
        assert_eq!(tricycle_config_set(cfg, ok.as_ptr()), TricycleStatus::Ok);
        let bad = CString::new("mpc.h=0.007").unwrap();
        assert_eq!(
            tricycle_config_set(cfg, bad.as_ptr()),
            TricycleStatus::Config
        );
        assert!(last_error().contains("0.007"));
        assert_eq!(
            tricycle_config_set(cfg, ptr::null()),
            TricycleStatus::NullPointer
        );
        tricycle_config_free(cfg);

        let mut out = ptr::null_mut();
        let missing = CString::new("/no/such/config.toml").unwrap();
        assert_eq!(
            tricycle_config_load(missing.as_ptr(), &mut out),
            TricycleStatus::Config
        );
        assert!(out.is_null());
        assert!(last_error().contains("/no/such/config.toml"));
    }
}

#[test]
fn model_derivative_and_moment() {
    unsafe {
        let cfg = tricycle_config_new();
        let mut model = ptr::null_mut();
        assert_eq!(
            tricycle_model_new(cfg, TricycleModelKind::Tricycle, &mut model),
            TricycleStatus::Ok
        );
        let x = TricycleState {
            vx: 15.0,
            r: 0.6,
            delta: 0.12,
            ..Default::default()
        };
        let u = TricycleInput {
            ddelta: 0.0,
            dd: 0.0,
        };
        let mut dx = TricycleState::default();
        assert_eq!(
            tricycle_model_derivative(model, &x, &u, 0.04, 9.0, 0.0, &mut dx),
            TricycleStatus::Ok
        );
        assert!((dx.s - 15.0).abs() < 1.0);
        let mut m = 0.0;
        assert_eq!(
            tricycle_model_m_diff(model, &x, 9.0, 0.0, &mut m),
            TricycleStatus::Ok
        );
        assert!(m < 0.0, "locked axle resists a left turn: {m}");

        let singular = TricycleState {
            n: 30.0,
            vx: 10.0,
            ..Default::default()
        };
        assert_eq!(
            tricycle_model_derivative(model, &singular, &u, 0.05, 0.0, 0.0, &mut dx),
            TricycleStatus::Domain
        );

        let speeds: Vec<f64> = (3..=40).map(f64::from).collect();
        let mut v = 0.0;
        let st = tricycle_min_stable_speed(
            model,
            TricycleIntegrator::Euler,
            0.008,
            speeds.as_ptr(),
            speeds.len(),
            &mut v,
        );
        assert_eq!(st, TricycleStatus::Ok);
        assert!(v <= 8.0);
        assert_eq!(
            tricycle_min_stable_speed(
                model,
                TricycleIntegrator::Euler,
                0.0,
                speeds.as_ptr(),
                speeds.len(),
                &mut v
            ),
            TricycleStatus::InvalidArgument
        );
        tricycle_model_free(model);
        tricycle_config_free(cfg);
    }
}

#[test]
fn short_simulation_round_trip() {
    unsafe {
        let cfg = tricycle_config_new();
        let dur = CString::new("sim.duration=1.0").unwrap();
        assert_eq!(tricycle_config_set(cfg, dur.as_ptr()), TricycleStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(
            tricycle_simulate(cfg, ptr::null(), ptr::null(), &mut run),
            TricycleStatus::Ok
        );
        assert_eq!(
            tricycle_run_termination(run),
            TricycleTermination::TimeLimit
        );
        let n = tricycle_run_len(run);
        assert!(n >= 100);
        let mut rec = TricycleRecord::default();
        assert_eq!(
            tricycle_run_record(run, n - 1, &mut rec),
            TricycleStatus::Ok
        );
        assert!(rec.vx > 10.0 && rec.t > 0.9);
        assert_eq!(
            tricycle_run_record(run, n, &mut rec),
            TricycleStatus::InvalidArgument
        );
        let json = CStr::from_ptr(tricycle_run_metrics_json(run))
            .to_str()
            .unwrap();
        assert!(json.contains("\"overall\""));
        tricycle_run_free(run);

        let bad = CString::new("/no/track.csv").unwrap();
        assert_eq!(
            tricycle_simulate(cfg, bad.as_ptr(), ptr::null(), &mut run),
            TricycleStatus::Config
        );
        tricycle_config_free(cfg);
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/tricycle_ffi.h")).unwrap();
    for name in [
        "tricycle_config_new",
        "tricycle_config_set",
        "tricycle_model_derivative",
        "tricycle_min_stable_speed",
        "tricycle_simulate",
        "tricycle_run_free",
        "TRICYCLE_STATUS_CONFIG",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let src = std::env::temp_dir().join(format!("tricycle_ffi_check_{}.c", std::process::id()));
    std::fs::write(&src, "#include \"tricycle_ffi.h\"\nint main(void) { TricycleConfig *c = tricycle_config_new(); tricycle_config_free(c); return 0; }\n").unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status();
    let _ = std::fs::remove_file(&src);
    match status {
        Ok(s) => assert!(s.success(), "header does not compile as C99"),
        Err(_) => eprintln!("no C compiler found; syntax check skipped"),
    }
}
