use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use teleport_core::quantum::MatrixRecord;
use teleport_core::{CountsTable, DensityMatrix};

fn teleport(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleport"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = teleport(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_every_config_key_with_units() {
    let help = ok(&["teleport", "--help"]);
    for key in [
        "seed",
        "shots",
        "exact",
        "fock_cutoff",
        "leakage_budget",
        "phase_offset",
        "calibration_input",
        "calibration_grid",
        "inputs",
        "output_dir",
        "mode",
        "standby_wait_us",
        "rephase_wait_us",
        "spin_echo",
        "tomography_inputs",
        "bootstrap_resamples",
        "mesh_resolution",
        "workers",
        "noise.detuning_sigma_sd",
        "noise.detuning_mean_sd",
        "noise.dephasing_ratio_h",
        "noise.correlated_dephasing",
        "noise.amplitude_error_sigma",
        "noise.depolarizing_per_pulse",
        "noise.detection_error",
        "noise.quadrature_order",
        "noise.pulse_durations.carrier_pi_us",
        "noise.pulse_durations.sideband_pi_us",
        "noise.pulse_durations.hide_pi_us",
        "noise.pulse_durations.detection_us",
    ] {
        assert!(help.contains(&format!("  {key} ")), "missing {key}");
    }
    assert!(help.contains("rad/us") && help.contains("microseconds") && help.contains("radians"));
    for flag in [
        "--config",
        "--seed",
        "--shots",
        "--out",
        "--workers",
        "--exact",
    ] {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn config_errors_point_at_the_line_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"seed\": 1,\n  \"shotz\": 5\n}\n");
    let out = teleport(&["baseline", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("config.json:3:") && err.contains("shotz"),
        "{err}"
    );

    let cfg = write_config(dir.path(), r#"{"mode": "calibrate"}"#);
    let out = teleport(&["baseline", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(dir.path(), r#"{"noise": {"detection_error": 1.5}}"#);
    let out = teleport(&["teleport", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn leakage_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"fock_cutoff": 2}"#);
    let out = teleport(&[
        "teleport",
        "--config",
        s(&cfg),
        "--exact",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn noiseless_teleport_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let stdout = ok(&[
        "teleport",
        "--config",
        s(&preset("noiseless.json")),
        "--shots",
        "500",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("classical baseline"));
    let mut reader = csv::Reader::from_path(out.join("fidelities.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec![
            "input_label",
            "theta_chi",
            "phi_chi",
            "f_exact",
            "f_sampled",
            "stderr"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        assert!(row[3].parse::<f64>().unwrap() >= 1.0 - 1e-9);
        assert_eq!(row[4].parse::<f64>().unwrap(), 1.0);
    }
    let report = json(&out.join("teleport_report.json"));
    assert!(report["mean_fidelity_exact"].as_f64().unwrap() >= 1.0 - 1e-9);
    assert_eq!(report["classical_baseline"].as_f64().unwrap(), 2.0 / 3.0);
    assert_eq!(report["exceeds_classical"], Value::Bool(true));
    assert!(out.join("fidelity_bars.csv").exists());
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"shots": 50, "seed": 3, "output_dir": "{}"}}"#,
            s(&dir.path().join("from-file"))
        ),
    );
    let out = dir.path().join("from-flag");
    ok(&[
        "teleport",
        "--config",
        s(&cfg),
        "--shots",
        "20",
        "--seed",
        "4",
        "--workers",
        "1",
        "--out",
        s(&out),
    ]);
    let report = json(&out.join("teleport_report.json"));
    assert_eq!(report["shots"], 20);
    assert_eq!(report["seed"], 4);
    assert!(!dir.path().join("from-file").exists());
}

#[test]
fn exact_state_tomography_recovers_every_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&["state-tomo", "--exact", "--out", s(&out)]);
    let report = json(&out.join("state_tomo_report.json"));
    for st in report["states"].as_array().unwrap() {
        assert!(st["trace_distance"].as_f64().unwrap() <= 1e-6, "{st}");
        let label = st["label"].as_str().unwrap();
        // The written matrix parses back into a valid state, bit for bit.
        let text = fs::read_to_string(out.join(format!("rho_{label}.json"))).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        let record: MatrixRecord = serde_json::from_value(doc["rho"].clone()).unwrap();
        let rho = DensityMatrix::new(record.to_matrix().unwrap()).unwrap();
        assert_eq!(MatrixRecord::from(rho.matrix()), record);
        let counts =
            CountsTable::read_csv(fs::File::open(out.join(format!("counts_{label}.csv"))).unwrap())
                .unwrap();
        assert!((counts.total() - 3.0).abs() < 1e-12);
        assert_eq!(
            fs::read_to_string(out.join(format!("rho_bars_{label}.csv")))
                .unwrap()
                .lines()
                .count(),
            5
        );
    }
}

#[test]
fn sampled_state_tomography_of_s() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"shots": 10000, "inputs": [{"label": "s", "theta_chi": 0.0, "phi_chi": 0.0}]}"#,
    );
    let out = dir.path().join("o");
    ok(&["state-tomo", "--config", s(&cfg), "--out", s(&out)]);
    let st = json(&out.join("rho_s.json"));
    assert!(st["trace_distance"].as_f64().unwrap() <= 0.02, "{st}");
}

#[test]
fn noiseless_process_tomography_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&["proc-tomo", "--exact", "--out", s(&out)]);
    let report = json(&out.join("proc_tomo_report.json"));
    assert!(report["chi_ii"].as_f64().unwrap() >= 0.999);
    assert_eq!(report["bootstrap"], Value::Null);
    let chi = json(&out.join("chi.json"));
    assert_eq!(chi["process"]["chi"]["rows"], 4);
    let abs = fs::read_to_string(out.join("chi_abs.csv")).unwrap();
    assert!(abs.starts_with("row,col,abs,re,im\nI,I,"));
    assert_eq!(abs.lines().count(), 17);
    let mesh = fs::read_to_string(out.join("ellipsoid.csv")).unwrap();
    assert_eq!(mesh.lines().count(), 1 + 25 * 24);
    assert!(out.join("affine.json").exists() && out.join("bloch_points.csv").exists());
}

#[test]
fn sampled_process_tomography_reports_both_routes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"shots": 2000, "bootstrap_resamples": 10, "fock_cutoff": 6, "leakage_budget": 1e-6,
            "noise": {"depolarizing_per_pulse": 0.02, "quadrature_order": 4}}"#,
    );
    let out = dir.path().join("o");
    ok(&["proc-tomo", "--config", s(&cfg), "--out", s(&out)]);
    let r = json(&out.join("proc_tomo_report.json"));
    let f_proc = r["f_proc"].as_f64().unwrap();
    assert!((r["f_avg_from_f_proc"].as_f64().unwrap() - (2.0 * f_proc + 1.0) / 3.0).abs() < 1e-12);
    assert!(r["route_difference"].as_f64().unwrap() <= 0.02);
    assert_eq!(r["routes_agree"], Value::Bool(true));
    assert_eq!(r["bootstrap"]["resamples"], 10);
    assert!(r["bootstrap"]["chi_ii"].as_f64().unwrap() > 0.0);
    assert_eq!(
        json(&out.join("input_states.json"))
            .as_array()
            .unwrap()
            .len(),
        6
    );
}

#[test]
fn noiseless_calibration_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&["calibrate", "--out", s(&out)]);
    let cal = json(&out.join("calibration.json"));
    assert!((cal["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let mut reader = csv::Reader::from_path(out.join("phase_sweep.csv")).unwrap();
    let rows: Vec<(f64, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    let max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    assert!((max - 1.0).abs() < 1e-9);
    assert!((rows[0].1 - rows.last().unwrap().1).abs() < 1e-9);
    assert!((rows.last().unwrap().0 - 2.0 * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn baseline_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let stdout = ok(&["baseline", "--out", s(&out)]);
    assert!(stdout.contains("0.666667"));
    let b = json(&out.join("baseline.json"));
    let per: Vec<f64> = b["per_input"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["fidelity"].as_f64().unwrap())
        .collect();
    // Z eigenstates are resent perfectly, equator states half the time.
    for (f, want) in per.iter().zip([1.0, 1.0, 0.5, 0.5, 0.5, 0.5]) {
        assert!((f - want).abs() < 1e-12);
    }
}

#[test]
fn sequence_listing_matches_the_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let stdout = ok(&["export-sequence", "--out", s(&out)]);
    let golden = include_str!("golden/sequence_psi1.txt");
    assert_eq!(stdout, golden);
    assert_eq!(
        fs::read_to_string(out.join("sequence.txt")).unwrap(),
        golden
    );

    let y = ok(&[
        "export-sequence",
        "--input",
        "psi3",
        "--basis",
        "Y",
        "--out",
        s(&out),
    ]);
    assert!(y.contains("R^C_1(π/2, π)") && y.contains("Tomography pre-rotation (Y basis)"));
    let bad = teleport(&["export-sequence", "--input", "nope", "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn shipped_presets_parse() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["paper.json", "noiseless.json"] {
        ok(&[
            "baseline",
            "--config",
            s(&preset(name)),
            "--out",
            s(&dir.path().join("o")),
        ]);
    }
}
