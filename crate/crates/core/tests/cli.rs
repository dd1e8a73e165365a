use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mec_sim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mec-sim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn mec-sim")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn run_writes_metrics_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = mec_sim(
        &[
            "run", "--slots", "50", "--seed", "4", "--set", "control_v=3e9", "--set", "devices.1.distance_m=90",
            "--trace", "out/trace.csv", "--out", "m.json", "--p-opt", "0.3", "--psi", "0.5", "--slater-eps", "100",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["seed"], 4);
    assert_eq!(doc["mode"], "baseline_alg1");
    assert_eq!(doc["control_v"], 3e9);
    assert_eq!(doc["config"]["devices"][1]["distance_m"], 90.0);
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
    let overrides: Vec<&str> = doc["overrides"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(overrides, ["control_v=3e9", "devices.1.distance_m=90", "rng_seed=4"]);
    let m = &doc["metrics"];
    assert_eq!(m["n_slots"], 50);
    for key in ["avg_weighted_power_w", "avg_sum_queue_bits", "final_queue_over_T", "avg_exec_delay_slots"] {
        assert!(m[key].is_number(), "{key}");
    }
    let b = &doc["bounds"];
    let c = b["drift_constant_c_bits2"].as_f64().unwrap();
    assert!((b["power_gap_c_over_v_w"].as_f64().unwrap() - c / 3e9).abs() < 1e-12);
    assert!(b["power_bound_w"].is_number());
    assert!(b["queue_bound_bits"].is_number());

    let trace = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "# mec-sim trace schema_version=1");
    assert!(lines.next().unwrap().starts_with("slot,device,Q_bits,"));
    assert_eq!(lines.count(), 50 * 5);
}

#[test]
fn config_file_and_mode_flag() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"n_devices": 2, "control_v": 1e8, "run": {"mode": "equal_bandwidth", "n_slots": 30}}"#,
    )
    .unwrap();
    let out = mec_sim(&["run", "--config", "c.json"], dir.path());
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(doc["mode"], "equal_bandwidth");
    assert_eq!(doc["metrics"]["n_slots"], 30);
    assert_eq!(doc["metrics"]["per_device_power_w"].as_array().unwrap().len(), 2);

    let out = mec_sim(&["run", "--config", "c.json", "--mode", "delay_improved_alg3", "--slots", "10"], dir.path());
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(doc["mode"], "delay_improved_alg3");
    assert_eq!(doc["metrics"]["n_slots"], 10);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"devices": [{"p_max_w": -1}]}"#).unwrap();
    for args in [
        &["run", "--config", "bad.json"][..],
        &["run", "--config", "missing.json"],
        &["run", "--set", "nonsense=1"],
        &["run", "--set", "control_v"],
        &["run", "--slots", "0"],
        &["run", "--psi", "1"],
        &["run", "--mode", "fastest"],
        &["sweep", "--v-points", "0"],
        &["verify", "--suite", "sp4"],
        &["frobnicate"],
    ] {
        let out = mec_sim(args, dir.path());
        assert_eq!(code(&out), 1, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = mec_sim(&["run", "--config", "bad.json"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_max_w"));
    assert_eq!(code(&mec_sim(&["--help"], dir.path())), 0);
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("file"), "").unwrap();
    let out = mec_sim(&["run", "--slots", "5", "--trace", "file/sub/trace.csv"], dir.path());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let out = mec_sim(&["run", "--slots", "5", "--out", "file/m.json"], dir.path());
    assert_eq!(code(&out), 3);
}

#[test]
fn verify_reports_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mec_sim(&["verify", "--suite", "sp1", "--cases", "30"], dir.path());
    assert_eq!(code(&out), 0);
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 30);
    assert!(lines.iter().all(|r| r["pass"] == true));
    assert!(lines.iter().all(|r| r["check"] == "sp1_grid"));

    let out = mec_sim(&["verify", "--suite", "sp1", "--cases", "30", "--perturb", "0.05", "--out", "v.jsonl"], dir.path());
    assert_eq!(code(&out), 2);
    let text = std::fs::read_to_string(dir.path().join("v.jsonl")).unwrap();
    assert!(text.lines().any(|l| l.contains("\"pass\":false")));
}

#[test]
fn sweep_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"v_values": [1e7, 1e9], "modes": ["baseline_alg1", "equal_bandwidth"], "seeds": [3], "n_slots": 40}"#,
    )
    .unwrap();
    let out = mec_sim(&["sweep", "--spec", "spec.json", "--set", "n_devices=3", "--out", "s.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2 + 4);
    assert_eq!(
        lines[1],
        "V,mode,w_server,seed,n_slots,avg_weighted_power_w,avg_mobile_power_w,avg_server_power_w,\
         avg_sum_queue_bits_per_device,exec_delay_ms,final_queue_over_T,C_bits2,gs_nonconverged_slots"
    );
    assert!(lines[2].starts_with("10000000.0,baseline_alg1,0.0,3,40,"));
    assert!(lines[5].starts_with("1000000000.0,equal_bandwidth,0.0,3,40,"));

    std::fs::write(dir.path().join("bad.json"), r#"{"v_values": [1e7], "modes": [], "seeds": [1]}"#).unwrap();
    let out = mec_sim(&["sweep", "--spec", "bad.json"], dir.path());
    assert_eq!(code(&out), 1);
}
