use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn nvforge(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("NVFORGE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = nvforge(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_wall_time(mut v: Value) -> Value {
    if let Some(meta) = v.get_mut("meta").and_then(Value::as_object_mut) {
        meta.remove("wall_time_s");
    }
    v
}

#[test]
fn unknown_figure_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = nvforge(&["reproduce", "fig2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn implant_without_beam_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        nvforge(&["implant", "--ions", "5"], dir.path())
            .status
            .code(),
        Some(2)
    );
    let out = nvforge(&["implant", "--config", "absent.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_physics_input_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let out = nvforge(&["bk-gain", "--bare", "0", "--enhanced", "0.3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = nvforge(&["hom", "--fwhm-mhz", "5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[beam]\nion = \"12C\"\nenergy_kev = 12.0\n\n[target]\ned_ev = 37.5\n\n[run]\nions = 40\nseed = 9\n",
    )
    .unwrap();
    ok(
        &[
            "implant", "--config", "run.toml", "--ions", "25", "--out", "r.json",
        ],
        dir.path(),
    );
    let v = json_file(&dir.path().join("r.json"));
    assert_eq!(v["meta"]["n_ions"], 25);
    assert_eq!(v["meta"]["seed"], 9);
    assert_eq!(v["meta"]["ion"], "12C");
    let edges = v["ions"]["bin_edges_nm"].as_array().unwrap();
    assert!((edges[1].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(
        edges.len(),
        v["ions"]["counts"].as_array().unwrap().len() + 1
    );
}

#[test]
fn implant_is_reproducible_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let base = [
        "implant",
        "--ion",
        "15N",
        "--energy-kev",
        "50",
        "--ions",
        "40",
        "--seed",
        "4",
    ];
    let mut one = base.to_vec();
    one.extend(["--threads", "1", "--out", "a.json"]);
    let mut two = base.to_vec();
    two.extend(["--threads", "2", "--out", "b.json"]);
    ok(&one, dir.path());
    ok(&two, dir.path());
    let a = without_wall_time(json_file(&dir.path().join("a.json")));
    let b = without_wall_time(json_file(&dir.path().join("b.json")));
    assert_eq!(a, b);
    assert!(a["meta"]["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn analyze_compares_two_runs() {
    let dir = TempDir::new().unwrap();
    for (ion, file) in [("12C", "c.json"), ("15N", "n.json")] {
        ok(
            &[
                "implant",
                "--ion",
                ion,
                "--energy-kev",
                "12",
                "--ions",
                "60",
                "--seed",
                "1",
                "--out",
                file,
            ],
            dir.path(),
        );
    }
    let out = ok(
        &[
            "analyze",
            "--in",
            "c.json",
            "--compare",
            "n.json",
            "--out",
            "-",
        ],
        dir.path(),
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    let cmp = &v["comparison"];
    let n_peak = runs[1]["ion_peak_nm"].as_f64().unwrap();
    let c_peak = runs[0]["ion_peak_nm"].as_f64().unwrap();
    let rel = cmp["ion_relative"].as_f64().unwrap();
    assert!((rel - (n_peak - c_peak).abs() / n_peak).abs() < 1e-12);
    let ratio = runs[0]["vacancies_per_ion"].as_f64().unwrap()
        / runs[1]["vacancies_per_ion"].as_f64().unwrap();
    assert!((cmp["yield_ratio"].as_f64().unwrap() - ratio).abs() < 1e-12);
}

#[test]
fn photon_commands_report_known_values() {
    let dir = TempDir::new().unwrap();
    let v: Value = serde_json::from_slice(
        &ok(
            &["bk-gain", "--bare", "0.03", "--enhanced", "0.3"],
            dir.path(),
        )
        .stdout,
    )
    .unwrap();
    assert!((v["gain"].as_f64().unwrap() - 100.0).abs() < 1e-9);
    let v: Value = serde_json::from_slice(
        &ok(
            &[
                "hom",
                "--invert",
                "--target-v",
                "0.9",
                "--t1-ns",
                "12",
                "--window-ps",
                "300",
            ],
            dir.path(),
        )
        .stdout,
    )
    .unwrap();
    let bound = v["max_fwhm_mhz"].as_f64().unwrap();
    assert!((120.0..=180.0).contains(&bound), "{bound}");
    let v: Value =
        serde_json::from_slice(&ok(&["hom", "--fwhm-mhz", "13.263"], dir.path()).stdout).unwrap();
    assert!(v["visibility"].as_f64().unwrap() > 0.999);
}

#[test]
fn synthesized_spectrum_round_trips_through_etalon() {
    let dir = TempDir::new().unwrap();
    ok(&["reproduce", "fig3a", "--out-dir", "f"], dir.path());
    assert!(dir.path().join("f/spectrum.csv.manifest.json").exists());
    ok(
        &[
            "etalon",
            "--in",
            "f/spectrum.csv",
            "--n",
            "2.41",
            "--dmin",
            "1",
            "--dmax",
            "10",
            "--out",
            "fit.json",
        ],
        dir.path(),
    );
    let d = json_file(&dir.path().join("fit.json"))["thickness_um"]
        .as_f64()
        .unwrap();
    assert!((d - 5.4).abs() < 0.108, "{d}");
}

#[test]
fn ple_scan_feeds_ple_fit() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("emitter.toml"),
        "homogeneous_fwhm_mhz = 20.0\njump_sigma_mhz = 30.0\nsaturation = 1.0\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("scan.toml"),
        "n_scans = 20\ndetuning = { start_mhz = -200.0, stop_mhz = 200.0, points = 41 }\n",
    )
    .unwrap();
    ok(
        &[
            "ple",
            "--emitter",
            "emitter.toml",
            "--scan",
            "scan.toml",
            "--seed",
            "5",
            "--out",
            "scan.csv",
        ],
        dir.path(),
    );
    let csv = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("detuning_MHz,counts"));
    assert_eq!(csv.lines().count(), 42);
    let manifest = json_file(&dir.path().join("scan.csv.manifest.json"));
    assert_eq!(manifest["subcommand"], "ple");
    assert_eq!(manifest["seed"], 5);
    ok(
        &["ple-fit", "--in", "scan.csv", "--out", "fit.json"],
        dir.path(),
    );
    let w = json_file(&dir.path().join("fit.json"))["fwhm_mhz"]
        .as_f64()
        .unwrap();
    assert!(w > 40.0 && w < 120.0, "{w}");
}

#[test]
fn unknown_emitter_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("e.toml"), "linewidth = 3.0\n").unwrap();
    let out = nvforge(&["ple", "--emitter", "e.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_summarizes_linewidth_table() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("fwhm_mhz,thickness_um,sample,region\n");
    for (i, w) in [90.0, 120.0, 140.0, 160.0, 200.0, 260.0].iter().enumerate() {
        let region = if i < 3 { "thin" } else { "thick" };
        let t = if i < 3 { 2.0 } else { 4.0 };
        csv.push_str(&format!("{w},{t},A,{region}\n"));
    }
    csv.push_str("100,3.0,B,lonely\n");
    std::fs::write(dir.path().join("lw.csv"), csv).unwrap();
    ok(
        &[
            "stats",
            "--in",
            "lw.csv",
            "--threshold",
            "150",
            "--out",
            "s.json",
        ],
        dir.path(),
    );
    let v = json_file(&dir.path().join("s.json"));
    assert!((v["pooled"]["fraction_below"].as_f64().unwrap() - 4.0 / 7.0).abs() < 1e-12);
    let rows = v["thickness_table"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["region"], "thin");
    assert_eq!(v["thickness_table"]["excluded"][0][0], "lonely");
    assert_eq!(v["pooled"]["ecdf"]["x"].as_array().unwrap().len(), 7);
}

#[test]
fn reproduce_threshold_writes_passing_report() {
    let dir = TempDir::new().unwrap();
    ok(&["reproduce", "threshold", "--out-dir", "t"], dir.path());
    let report = json_file(&dir.path().join("t/report.json"));
    let checks = report["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["pass"] == true), "{checks:?}");
    assert!(dir.path().join("t/threshold.json").exists());
}

#[test]
fn thread_count_is_read_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nvforge"))
        .args([
            "implant",
            "--ion",
            "12C",
            "--energy-kev",
            "12",
            "--ions",
            "10",
        ])
        .current_dir(dir.path())
        .env("NVFORGE_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let bad = Command::new(env!("CARGO_BIN_EXE_nvforge"))
        .args(["bk-gain", "--bare", "0.1", "--enhanced", "0.2"])
        .current_dir(dir.path())
        .env("NVFORGE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn reproduce_fig1b_writes_all_runs_and_report() {
    let dir = TempDir::new().unwrap();
    ok(
        &["reproduce", "fig1b", "--ions", "30", "--out-dir", "f"],
        dir.path(),
    );
    let report = json_file(&dir.path().join("f/report.json"));
    let artifacts: Vec<&str> = report["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_str().unwrap())
        .collect();
    for name in [
        "implant_12C_12keV.json",
        "implant_15N_50keV.json",
        "species_difference_50keV.json",
    ] {
        assert!(artifacts.contains(&name), "{artifacts:?}");
        assert!(dir.path().join("f").join(name).exists());
    }
    let checks = report["checks"].as_array().unwrap();
    assert!(checks
        .iter()
        .any(|c| c["quantity"] == "relative vacancy depth difference at 12 keV"));
    assert_eq!(report["meta"]["seed"], 1);
}
