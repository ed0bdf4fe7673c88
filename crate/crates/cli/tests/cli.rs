use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn optomech(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optomech"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"{
    "parameter_set": "set1",
    "target": "fock1",
    "n_slots": 4,
    "init": "random",
    "tau": "5 ns",
    "restarts": 2,
    "seed": 7,
    "stage_a": {"max_iter": 3},
    "stage_b": {"max_iter": 3}
}"#;

#[test]
fn derive_set1_reports_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = optomech(&["derive", "--preset", "set1", "--out-dir", "d", "--check"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("sideband-resolved (Om/kappa > 1): 15.9000"));
    let report = json(&dir.path().join("d/derive.json"));
    assert!((report["diagnostics"]["sideband_resolution"].as_f64().unwrap() - 15.9).abs() < 1e-9);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn derive_set2_drive_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let o = optomech(&["derive", "--preset", "set2", "--out-dir", "d"], dir.path());
    assert!(o.status.success());
    let e = json(&dir.path().join("d/derive.json"))["frame"]["e_drive"].as_f64().unwrap();
    assert!((e / 1e3 - 3.82).abs() / 3.82 < 0.01, "{e}");
}

#[test]
fn manifest_lists_every_output_with_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = optomech(&["derive", "--out-dir", "d"], dir.path());
    assert!(o.status.success());
    let m = json(&dir.path().join("d/manifest.json"));
    assert_eq!(m["command"], "derive");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let listed: Vec<String> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap().to_string())
        .collect();
    let mut on_disk: Vec<String> = fs::read_dir(dir.path().join("d"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, on_disk);
    for f in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(dir.path().join("d").join(f["path"].as_str().unwrap())).unwrap();
        use sha2_check::digest;
        assert_eq!(f["sha256"].as_str().unwrap(), digest(&bytes));
    }
}

mod sha2_check {
    /// Hash via the system tool, independent of the binary's own code.
    pub fn digest(bytes: &[u8]) -> String {
        use std::io::Write;
        let mut child = std::process::Command::new("sha256sum")
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .spawn()
            .expect("sha256sum available");
        child.stdin.take().unwrap().write_all(bytes).unwrap();
        let out = child.wait_with_output().unwrap();
        String::from_utf8(out.stdout).unwrap().split_whitespace().next().unwrap().to_string()
    }
}

#[test]
fn regime_warning_when_not_sideband_resolved() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"params": {"name": "wide", "wa_min": "9 GHz", "wa_max": "13.5 GHz", "wc": "10.188 GHz",
        "Om": "15.9 MHz", "g_ac": "12.5 MHz", "g_co": "12 kHz", "kappa_a": "1 MHz", "kappa": "15.9 MHz",
        "gamma": "150 Hz", "temperature": "25 mK", "s": 100, "R_max": "32 MHz"}}"#;
    fs::write(dir.path().join("wide.json"), cfg).unwrap();
    let o = optomech(&["derive", "--config", "wide.json", "--out-dir", "d"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("regime condition not met: sideband-resolved"), "{}", stderr(&o));
}

#[test]
fn malformed_config_names_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), "{\n  \"parameter_set\": \"set1\",\n  \"tau\": \"5\",\n  \"n_slots\": 4\n}").unwrap();
    let o = optomech(&["derive", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("tau") && err.contains("line 3"), "{err}");
}

#[test]
fn missing_inputs_name_their_producer() {
    let dir = tempfile::tempdir().unwrap();
    let o = optomech(&["propagate", "--sequence", "nope.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("produce it with `optomech optimize`"), "{}", stderr(&o));
    let o = optomech(&["analyze", "--states", "nope.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("optomech propagate"));
}

#[test]
fn steady_matches_reference_populations() {
    let dir = tempfile::tempdir().unwrap();
    let o = optomech(&["steady", "--out-dir", "s", "--check"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let r = json(&dir.path().join("s/steady.json"));
    assert!((r["populations"]["cavity"][1].as_f64().unwrap() - 0.0078).abs() <= 0.002);
    assert!(r["relaxation_trace_distance"].as_f64().unwrap() <= 1e-5);
}

#[test]
fn zero_sequence_leaves_no_negativity() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("slot,t_start_us,tau_us,u_detuning,u_atomX,u_atomY\n");
    for k in 0..10 {
        csv.push_str(&format!("{k},{},0.005,0,0,0\n", k as f64 * 0.005));
    }
    fs::write(dir.path().join("zeros.csv"), csv).unwrap();
    let o = optomech(&["propagate", "--sequence", "zeros.csv", "--out-dir", "p"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = optomech(&["analyze", "--states", "p/states.json", "--out-dir", "a"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&dir.path().join("a/analysis.json"));
    assert_eq!(r["summary"]["oscillator_mana"]["clamped"].as_f64().unwrap(), 0.0);
    let o = optomech(&["analyze", "--sequence", "zeros.csv", "--out-dir", "b"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r2 = json(&dir.path().join("b/analysis.json"));
    assert_eq!(r["fidelity"], r2["fidelity"]);
}

#[test]
fn optimize_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    for out in ["r1", "r2"] {
        let o = optomech(
            &["optimize", "--config", "tiny.json", "--out-dir", out, "--verify-dim", "4", "--workers", "1"],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["result.json", "sequence.csv", "trajectory.csv", "wigner.csv", "config.json"] {
        let a = fs::read(dir.path().join("r1").join(f)).unwrap();
        let b = fs::read(dir.path().join("r2").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
    let r = json(&dir.path().join("r1/result.json"));
    assert_eq!(r["runs"].as_array().unwrap().len(), 2);
    assert_eq!(r["verification"]["dims"], 4);
    assert!(r["best"].get("wall_time").is_none());
    let m1 = json(&dir.path().join("r1/manifest.json"));
    let m2 = json(&dir.path().join("r2/manifest.json"));
    assert_eq!(m1["config_hash"], m2["config_hash"]);
    assert!(dir.path().join("r1/timings.json").is_file());
}

#[test]
fn check_mode_exits_4_on_band_miss() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    let o = optomech(&["optimize", "--config", "tiny.json", "--out-dir", "r", "--check"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL set1 fock1 smoke fidelity"));
}

#[test]
fn seed_flag_changes_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    let mut hashes = Vec::new();
    for seed in ["1", "2"] {
        let o = optomech(
            &["optimize", "--config", "tiny.json", "--seed", seed, "--restarts", "1", "--out-dir", seed],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        hashes.push(json(&dir.path().join(seed).join("manifest.json"))["config_hash"].clone());
    }
    assert_ne!(hashes[0], hashes[1]);
}
