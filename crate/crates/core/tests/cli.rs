use std::path::Path;
use std::process::{Command, Output};

fn tricycle(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tricycle"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("TRICYCLE_SET")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn missing_vehicle_config_is_exit_2_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = tricycle(
        &["stability", "--vehicle", "no/such/vehicle.toml"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/vehicle.toml"));
}

#[test]
fn bad_override_and_bad_step_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&tricycle(&["profile", "--set", "planner.ds"], dir.path())),
        2
    );
    assert_eq!(
        code(&tricycle(
            &["profile", "--set", "mpc.no_such_key=1"],
            dir.path()
        )),
        2
    );
    assert_eq!(
        code(&tricycle(&["simulate", "--h", "0.007"], dir.path())),
        2
    );
    assert_eq!(code(&tricycle(&["frobnicate"], dir.path())), 2);
    assert_eq!(
        code(&tricycle(
            &["profile", "--track", "missing.csv"],
            dir.path()
        )),
        2
    );
}

#[test]
fn malformed_config_file_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[vehicle]\nm = \"heavy\"\n").unwrap();
    let o = tricycle(
        &["stability", "--vehicle", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml"));
}

#[test]
fn stability_at_paper_step_is_stable_at_8() {
    let dir = tempfile::tempdir().unwrap();
    let o = tricycle(
        &[
            "stability",
            "--h",
            "0.008",
            "--method",
            "euler",
            "--speed",
            "8",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stability.json")).unwrap())
            .unwrap();
    let reports = json.as_array().unwrap();
    assert!(!reports.is_empty());
    for r in reports {
        assert_eq!(r["speeds"][0]["stable"], true);
        assert_eq!(r["min_stable_speed"], 8.0);
    }
    assert!(dir.path().join("stability_poles_euler.svg").is_file());
}

#[test]
fn default_stability_report_covers_every_triple() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tricycle(&["stability"], dir.path())), 0);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stability.json")).unwrap())
            .unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2 * 2 * 5);
    assert!(json[0].get("min_stable_speed").is_some());
}

#[test]
fn profile_is_reproducible_and_audited() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&tricycle(&["profile"], a.path())), 0);
    assert_eq!(code(&tricycle(&["profile"], b.path())), 0);
    let pa = std::fs::read(a.path().join("profile.csv")).unwrap();
    assert_eq!(pa, std::fs::read(b.path().join("profile.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.path().join("profile.svg")).unwrap(),
        std::fs::read(b.path().join("profile.svg")).unwrap()
    );

    // a profile that is too fast everywhere fails the audit
    let text = String::from_utf8(pa).unwrap();
    let mut fast = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            fast.push_str(line);
        } else {
            let f: Vec<&str> = line.split(',').collect();
            fast.push_str(&format!("{},{},{}", f[0], 90.0, 0.0));
        }
        fast.push('\n');
    }
    let bad = a.path().join("fast.csv");
    std::fs::write(&bad, fast).unwrap();
    let o = tricycle(&["profile", "--profile", bad.to_str().unwrap()], b.path());
    assert_eq!(code(&o), 1);
    assert!(b.path().join("audit.json").is_file());
}

#[test]
fn compare_has_a_row_per_segment_and_model() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tricycle(&["compare"], dir.path())), 0);
    let csv = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 15 * 3);
    let text = std::fs::read_to_string(dir.path().join("compare.txt")).unwrap();
    assert!(text.contains("variante-1") && text.contains("single-track"));
}

#[test]
fn env_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tricycle"))
        .args(["export", "--out"])
        .arg(dir.path())
        .env("TRICYCLE_SET", "mpc.horizon=40; sim.seed=9")
        .env("TRICYCLE_CONTROLLER_MODEL", "single-track")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let cfg = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(cfg.contains("horizon = 40"));
    assert!(cfg.contains("seed = 9"));
    assert!(cfg.contains("model = \"single-track\""));
}

#[test]
fn off_track_exits_1_with_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = tricycle(
        &[
            "simulate",
            "--set",
            "sim.start_s=450",
            "--set",
            "sim.duration=10",
            "--set",
            "sim.perturbation.friction=0.5",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("OffTrack"));
    for f in [
        "telemetry.csv",
        "metrics.json",
        "e_y.svg",
        "speed.svg",
        "steering.svg",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}
