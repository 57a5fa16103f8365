use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reefseed::scenario::preset;

fn reefseed(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reefseed")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = reefseed(&["run", "loomis-coverage", "--out", "res"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("On-board model"));
    let run = dir.path().join("res/loomis-coverage-seed1");
    for f in ["events.ndjson", "report.json", "report.txt", "trajectory.csv", "overlay.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["area_covered"], 890.0);
    let dots: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(run.join("overlay.json")).unwrap()).unwrap();
    assert_eq!(dots.len() as u64, report["events"].as_u64().unwrap());
    let csv = fs::read_to_string(run.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,heading,battery,gauge,decision,released\n"));
}

#[test]
fn runs_are_byte_identical_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let log = |out: &str, seed: &str| {
        let o = reefseed(&["run", "watson-gated", "--seed", seed, "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.path().join(out).join(format!("watson-gated-seed{seed}/events.ndjson"))).unwrap()
    };
    assert_eq!(log("a", "4"), log("b", "4"));
    assert_ne!(log("a", "4"), log("c", "5"));
}

#[test]
fn tick_rate_override_changes_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = reefseed(&["run", "loomis-coverage", "--tick-rate", "4", "--out", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("r/loomis-coverage-seed1/trajectory.csv")).unwrap();
    let second = csv.lines().nth(1).unwrap();
    assert!(second.starts_with("0.25,"), "{second}");
}

#[test]
fn report_verb_recomputes_the_same_numbers() {
    let dir = tempfile::tempdir().unwrap();
    assert!(reefseed(&["run", "loomis-gated", "--out", "r"], dir.path()).status.success());
    let run = dir.path().join("r/loomis-gated-seed1");
    let o = reefseed(&["report", "--json", run.join("events.ndjson").to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let recomputed: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let written: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(recomputed, written);

    let table = reefseed(&["report", run.join("events.ndjson").to_str().unwrap()], dir.path());
    assert_eq!(
        stdout(&table),
        fs::read_to_string(run.join("report.txt"))
            .unwrap()
            .replace("loomis-gated (seed 1)", run.join("events.ndjson").to_str().unwrap())
    );

    let broken = dir.path().join("broken.ndjson");
    let text = fs::read_to_string(run.join("events.ndjson")).unwrap();
    fs::write(&broken, text.replacen("\"cell_area\"", "\"area\"", 1)).unwrap();
    let o = reefseed(&["report", broken.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("cell_area"), "{}", stderr(&o));
}

#[test]
fn sweeps_write_a_mean_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = reefseed(&["run", "loomis-gated", "--seeds", "3", "--out", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("mean of 3 seeds"));
    let mean: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/loomis-gated-mean.json")).unwrap()).unwrap();
    assert_eq!(mean["seeds"], serde_json::json!([1, 2, 3]));
    assert_eq!(mean["mean"]["runs"], 3);
}

#[test]
fn compare_reports_the_wasted_delta() {
    let dir = tempfile::tempdir().unwrap();
    let o = reefseed(&["compare", "loomis-gated", "--out", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("Constant pump"));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/loomis-gated-compare.json")).unwrap()).unwrap();
    let delta = doc["wasted_delta"].as_f64().unwrap();
    assert!((delta - 53.06).abs() < 0.5, "{delta}");
}

#[test]
fn validate_accepts_presets_and_names_bad_fields() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, preset("watson-constant").unwrap().to_toml()).unwrap();
    let o = reefseed(&["validate", good.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok: watson-constant"));

    let mut s = preset("watson-constant").unwrap();
    s.tick_rate_hz = 0.0;
    s.dispersal.swath_width = -1.0;
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, s.to_toml()).unwrap();
    let o = reefseed(&["validate", bad.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("tick_rate_hz") && err.contains("dispersal"), "{err}");

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, format!("colour = 1\n{}", preset("loomis-gated").unwrap().to_toml())).unwrap();
    let o = reefseed(&["validate", typo.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn watchdog_expiry_fails_but_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = preset("loomis-gated").unwrap();
    s.name = "slow".into();
    s.guidance.cruise_thrust = 0.2;
    s.duration_limit_s = 30_000.0;
    let path = dir.path().join("slow.toml");
    fs::write(&path, s.to_toml()).unwrap();
    let o = reefseed(&["run", path.to_str().unwrap(), "--out", "r"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("watchdog"), "{}", stderr(&o));
    let events = fs::read_to_string(dir.path().join("r/slow-seed1/events.ndjson")).unwrap();
    assert!(events.lines().count() > 1);
    assert!(dir.path().join("r/slow-seed1/trajectory.csv").is_file());
}

#[test]
fn zero_duration_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = preset("loomis-gated").unwrap();
    s.duration_limit_s = 0.0;
    let path = dir.path().join("zero.toml");
    fs::write(&path, s.to_toml()).unwrap();
    let o = reefseed(&["run", path.to_str().unwrap(), "--out", "r"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn unknown_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!reefseed(&["run", "no-such-preset"], dir.path()).status.success());
    assert!(!reefseed(&["launch"], dir.path()).status.success());
    assert!(!reefseed(&["report", "missing.ndjson"], dir.path()).status.success());
    assert!(!reefseed(&["fleet", "--vehicles", "8", "--duration", "0"], dir.path()).status.success());
}

#[test]
fn fleet_serves_and_stops() {
    let dir = tempfile::tempdir().unwrap();
    let o = reefseed(
        &[
            "fleet",
            "--port",
            "0",
            "--bind",
            "127.0.0.1",
            "-n",
            "2",
            "--autostart",
            "--speedup",
            "200",
            "--duration",
            "1",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("dispatched 2 vehicles"), "{out}");
    assert!(out.contains("asv-1:") && out.contains("asv-2:"), "{out}");
}
