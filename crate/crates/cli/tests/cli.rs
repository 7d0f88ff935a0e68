use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn adlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adlab"))
        .args(args)
        .env("ADLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn check_accepts_shipped_scenarios() {
    for name in ["product.toml", "rho.toml", "v_only.toml", "n3_m2.toml", "elliptic_chart.toml"] {
        let out = adlab(&["check", "--scenario", scenario(name).to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn check_rejects_positivity_and_unknown_keys() {
    let out = adlab(&["check", "--scenario", scenario("not_positive.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("minimum eigenvalue"));

    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "n = 2\nm = 1\nsamples = 16\n");
    let out = adlab(&["check", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(adlab(&["check", "--scenario", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn solve_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = adlab(&[
        "--out",
        out_dir.to_str().unwrap(),
        "solve",
        "--scenario",
        scenario("product.toml").to_str().unwrap(),
        "--t",
        "0.25",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert!(report["solve"]["final_residual"].as_f64().unwrap() <= 1e-9);
    assert!(report["solve"].get("wall_time").is_none());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["command"], "solve");
}

#[test]
fn solver_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("rho.toml")).unwrap() + "\n[solver]\nmax_iter = 1\n";
    let spec = write(dir.path(), "tight.toml", &text);
    let run = dir.path().join("run");
    let out = adlab(&[
        "--out",
        run.to_str().unwrap(),
        "solve",
        "--scenario",
        spec.to_str().unwrap(),
        "--t",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

const KEYS: [&str; 15] = [
    "t",
    "residual",
    "iterations",
    "schwarz_sup",
    "schwarz_inf",
    "env_total_min",
    "env_total_max",
    "env_fiber_min",
    "env_fiber_max",
    "s_fiber",
    "osc",
    "vol_ratio",
    "sup_phi",
    "limit_diff_c0",
    "limit_diff_c1",
];

#[test]
fn sweep_outputs_are_sorted_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let rho = scenario("rho.toml");
    let args = [
        "--out",
        out_dir.to_str().unwrap(),
        "sweep",
        "--scenario",
        rho.to_str().unwrap(),
        "--t-start",
        "1",
        "--t-factor",
        "0.5",
        "--steps",
        "8",
    ];
    let out = adlab(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(out_dir.join("sweep.json")).unwrap();
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let rows: Vec<serde_json::Value> = serde_json::from_str(&json).unwrap();
    assert_eq!(rows.len(), 9);
    for row in &rows {
        for key in KEYS {
            assert!(row.get(key).is_some(), "missing {key}");
        }
    }
    let ts: Vec<f64> = rows.iter().map(|r| r["t"].as_f64().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] > w[1]));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], KEYS.join(","));
    assert_eq!(lines.len(), 10);

    let fits: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("fits.json")).unwrap()).unwrap();
    assert!((fits["osc"]["slope"].as_f64().unwrap() - 1.0).abs() <= 0.05);
    assert!(out_dir.join("plots/osc.svg").exists());

    assert!(adlab(&args).status.success());
    assert_eq!(std::fs::read_to_string(out_dir.join("sweep.json")).unwrap(), json);
    assert_eq!(std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap(), csv);

    std::fs::remove_file(out_dir.join("sweep.csv")).unwrap();
    let re = adlab(&["report", "--from", out_dir.to_str().unwrap()]);
    assert!(re.status.success());
    assert_eq!(std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap(), csv);
}

#[test]
fn report_needs_records() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "sweep.json", "[]");
    assert_eq!(adlab(&["report", "--from", dir.path().to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn limit_and_wp_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("limit");
    let out = adlab(&[
        "--out",
        out_dir.to_str().unwrap(),
        "limit",
        "--scenario",
        scenario("v_only.toml").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let limit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("limit.json")).unwrap()).unwrap();
    assert!(limit["ke_intermediate_sup"].as_f64().unwrap() <= 1e-8);

    let wp_dir = dir.path().join("wp");
    let out = adlab(&[
        "--out",
        wp_dir.to_str().unwrap(),
        "wp",
        "--scenario",
        scenario("elliptic_chart.toml").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let wp: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(wp_dir.join("wp.json")).unwrap()).unwrap();
    assert!((wp["chart"]["value_at_origin"].as_f64().unwrap() - 0.01).abs() <= 1e-8);
    assert_eq!(wp["product"]["passed"], true);
}
