//! End-to-end tests of the `weakgrid` binary: exit codes, output schemas,
//! determinism, and the bundled case files staying in sync with their
//! builders.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_weakgrid")
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn ieee39_path() -> PathBuf {
    repo_root().join("cases/ieee39.json")
}

fn demo_path() -> PathBuf {
    repo_root().join("cases/demo.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("weakgrid-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn bundled_case_files_match_builders() {
    let on_disk = std::fs::read_to_string(ieee39_path()).unwrap();
    assert_eq!(on_disk, weakgrid::cases::ieee39().to_json(), "cases/ieee39.json is stale");
    let on_disk = std::fs::read_to_string(demo_path()).unwrap();
    assert_eq!(on_disk, weakgrid::cases::demo().to_json(), "cases/demo.json is stale");
}

#[test]
fn gscr_reports_bundled_value_and_sweep() {
    let out = tmpdir("gscr");
    let cfg = ieee39_path();
    let r = run(&[
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "gscr", "--sweep", "0.5:1.0:11",
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("gscr = 1.68"), "stdout: {stdout}");

    // Report re-parses.
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("gscr_report.json")).unwrap())
            .unwrap();
    assert!((report["gscr"].as_f64().unwrap() - 1.6828).abs() < 1e-3);

    // Sweep CSV: 11 rows per tag, gscr strictly decreasing.
    let csv = std::fs::read_to_string(out.join("damping_loci.csv")).unwrap();
    let full_rows: Vec<&str> = csv.lines().filter(|l| l.ends_with(",full")).collect();
    assert_eq!(full_rows.len(), 11);
    let gscrs: Vec<f64> = full_rows
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    for w in gscrs.windows(2) {
        assert!(w[1] < w[0], "gscr column must be strictly decreasing");
    }
}

#[test]
fn malformed_config_exits_2_and_names_the_branch() {
    let out = tmpdir("badcfg");
    let mut cfg = weakgrid::cases::ieee39();
    cfg.network.branches[3].to = "ghost_bus".into();
    let path = out.join("bad.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let r = run(&["--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "gscr"]);
    assert_eq!(r.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("ghost_bus"), "stderr must name the bad branch: {stderr}");
}

#[test]
fn unknown_keys_rejected() {
    let out = tmpdir("unknown");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ieee39_path()).unwrap()).unwrap();
    doc["surprise"] = serde_json::json!(1);
    let path = out.join("unknown.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let r = run(&["--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "gscr"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("surprise"));
}

#[test]
fn cgscr_no_statcom_baseline() {
    let out = tmpdir("cgscr");
    let cfg = ieee39_path();
    let r = run(&[
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "cgscr", "--no-statcom",
    ]);
    assert!(r.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cgscr_report.json")).unwrap())
            .unwrap();
    let cgscr = report["cgscr"].as_f64().unwrap();
    assert!((cgscr - 1.94).abs() < 0.2, "no-STATCOM CgSCR {cgscr}");
}

#[test]
fn cgscr_iq_ordering_around_baseline() {
    let cfg = ieee39_path();
    let value = |args: &[&str]| -> f64 {
        let out = tmpdir(&format!("cgscriq{}", args.len() + args.last().map_or(0, |s| s.len())));
        let mut full: Vec<&str> = vec![
            "--config", cfg.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "cgscr",
        ];
        full.extend_from_slice(args);
        let r = run(&full);
        assert!(r.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&r.stderr));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("cgscr_report.json")).unwrap())
                .unwrap();
        report["cgscr"].as_f64().unwrap()
    };
    let minus = value(&["--iq", "-0.5"]);
    let plus = value(&["--iq", "0.5"]);
    let bare = value(&["--no-statcom"]);
    assert!(minus < bare, "capacitive dispatch must lower the boundary: {minus} vs {bare}");
    assert!(plus > bare, "inductive dispatch must raise the boundary: {plus} vs {bare}");
}

#[test]
fn synthesize_demo_is_deterministic_and_reparses() {
    let cfg = demo_path();
    let run_once = |tag: &str| -> (Option<i32>, String) {
        let out = tmpdir(tag);
        let r = run(&[
            "--config", cfg.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--seed", "9",
            "synthesize", "--m", "2", "--no-verify",
        ]);
        let text = std::fs::read_to_string(out.join("schedule.json")).unwrap();
        (r.status.code(), text)
    };
    let (code_a, text_a) = run_once("synth-a");
    let (code_b, text_b) = run_once("synth-b");
    assert_eq!(code_a, code_b);
    assert!(matches!(code_a, Some(0) | Some(3)));
    assert_eq!(text_a, text_b, "identical config + seed must give identical bytes");
    let sched: weakgrid::synthesis::GainSchedule = serde_json::from_str(&text_a).unwrap();
    assert_eq!(sched.m, 2);
}

#[test]
fn simulate_writes_traces_and_manifest() {
    let out = tmpdir("sim");
    let cfg = demo_path();
    let r = run(&[
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "simulate", "--power-scale", "0.6", "--horizon", "2.0",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("traces.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("time,dp_"));
    assert_eq!(header.split(',').count(), 1 + 3, "three IBR trace columns");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    assert!(manifest["classification"].is_string());
    assert!(manifest["timestamp_unix"].is_u64());
}

#[test]
fn dispatch_replay_logs_decisions() {
    let out = tmpdir("replay");
    let cfg = demo_path();
    // Hand-written certified schedule for the replay contract.
    let schedule = serde_json::json!({
        "m": 2,
        "intervals": [
            { "lo": -1.0, "hi": 0.0, "k_acps": 1.0, "k_acis": 5.0, "k_pllps": 20.0,
              "k_pllis": 5000.0, "objective": -0.2, "certified": true, "feasible": true,
              "worst_real_part": -0.2 },
            { "lo": 0.0, "hi": 1.0, "k_acps": 1.0, "k_acis": 5.0, "k_pllps": 10.0,
              "k_pllis": 4000.0, "objective": -0.1, "certified": true, "feasible": true,
              "worst_real_part": -0.1 }
        ],
        "rated_gscr": 2.0
    });
    let sched_path = out.join("schedule.json");
    std::fs::write(&sched_path, schedule.to_string()).unwrap();
    let tele_path = out.join("telemetry.csv");
    std::fs::write(
        &tele_path,
        "timestamp,p_e_1,p_e_2,p_e_3,i_qs_1,i_qs_2\n\
         0.0,1.0,1.5,1.0,-0.4,-0.4\n\
         1.0,1.0,1.5,1.0,0.4,0.4\n\
         2.0,1.0,1.5,1.0,0.45,0.45\n",
    )
    .unwrap();
    let r = run(&[
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "dispatch-replay",
        "--schedule", sched_path.to_str().unwrap(),
        "--telemetry", tele_path.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let log = std::fs::read_to_string(out.join("decisions.jsonl")).unwrap();
    let decisions: Vec<serde_json::Value> =
        log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(decisions.len(), 3);
    assert_eq!(decisions[0]["interval_index"], 1);
    assert_eq!(decisions[1]["interval_index"], 2);
    assert_eq!(decisions[1]["switched"], true);
    assert_eq!(decisions[2]["switched"], false);
}

#[test]
fn fit_imports_scan_and_converges() {
    let out = tmpdir("fit");
    let cfg = demo_path();
    // Scan of a built device written in the import format.
    let (study, _) = weakgrid::cases::demo().resolve().unwrap();
    let model =
        weakgrid::devices::build_statcom(&study.statcoms[0], 0.3, study.net.omega0).unwrap();
    let mut csv = String::from(
        "omega_rad_s,re_Y11,im_Y11,re_Y12,im_Y12,re_Y21,im_Y21,re_Y22,im_Y22\n",
    );
    for i in 0..80 {
        let w = 1.0 * (1e4f64).powf(i as f64 / 79.0);
        let y = model.admittance_at(w).unwrap();
        csv.push_str(&format!(
            "{w},{},{},{},{},{},{},{},{}\n",
            y[(0, 0)].re, y[(0, 0)].im, y[(0, 1)].re, y[(0, 1)].im,
            y[(1, 0)].re, y[(1, 0)].im, y[(1, 1)].re, y[(1, 1)].im,
        ));
    }
    let scan = out.join("scan.csv");
    std::fs::write(&scan, csv).unwrap();
    let r = run(&[
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "fit", "--scan", scan.to_str().unwrap(), "--order", "9",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert!(fit["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(fit["converged"], true);
}

#[test]
fn subsystems_csv_format() {
    let out = tmpdir("subs");
    let cfg = demo_path();
    let r = run(&[
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
        "--format", "csv",
        "subsystems",
    ]);
    assert!(r.status.success());
    let csv = std::fs::read_to_string(out.join("subsystems.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3, "header plus one row per IBR");
}
