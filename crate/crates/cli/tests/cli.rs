use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quadnet::calibration::{predict_measured, MeasuredDataset};
use quadnet::criteria::optimal_gains;
use quadnet::Family;
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn quadnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadnet"))
        .args(args)
        .env_remove("QUADNET_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = quadnet(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    quadnet(args).status.code().unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_reports_the_squeezed_difference() {
    let csv = ok(&["simulate", "--family", "cluster", "--r", "0.402", "--gains", "optimal"]);
    assert!(csv.lines().any(|l| l == "Y1-Y2,0.2238,0.5000,-3.49"), "{csv}");
    assert_eq!(csv_rows(&csv).len(), 6);

    let csv = ok(&["simulate", "--family", "ghz", "--r", "0"]);
    assert!(csv_rows(&csv).iter().all(|row| row[3] == "0.00"));
}

#[test]
fn usage_errors_exit_with_one() {
    let out = quadnet(&["simulate", "--family", "w"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&["simulate", "--efficiency", "1.2"]), 1);
    assert_eq!(code(&["simulate", "--gains", "1,2"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn simulate_json_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let out = out.to_str().unwrap();
    ok(&[
        "simulate",
        "--efficiency",
        "0.9,0.8,0.7,0.6",
        "--out",
        out,
        "--no-timestamp",
    ]);
    let first = std::fs::read(dir.path().join("a/simulate.json")).unwrap();
    ok(&[
        "simulate",
        "--efficiency",
        "0.9,0.8,0.7,0.6",
        "--out",
        out,
        "--no-timestamp",
    ]);
    assert_eq!(first, std::fs::read(dir.path().join("a/simulate.json")).unwrap());
    assert!(dir.path().join("a/simulate.csv").exists());

    let json: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(json["covariance"]["unit"], "snu");
    assert_eq!(json["covariance"]["matrix"].as_array().unwrap().len(), 8);
    assert!(json.get("generated_unix_s").is_none());

    ok(&["simulate", "--out", out]);
    let json: Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/simulate.json")).unwrap()).unwrap();
    assert!(json["generated_unix_s"].is_u64());
}

#[test]
fn network_file_reproduces_the_built_in_network() {
    let dir = tempfile::tempdir().unwrap();
    for family in ["cluster", "ghz"] {
        let file = data(&format!("{family}.net"));
        let a = ok(&["simulate", "--family", family, "--network", file.to_str().unwrap()]);
        assert_eq!(a, ok(&["simulate", "--family", family]));
    }
    let two_mode = dir.path().join("two.net");
    std::fs::write(&two_mode, "mode a1\nmode a2\nsq a1 Y 0.4\nout a1 a2\n").unwrap();
    assert_eq!(code(&["simulate", "--network", two_mode.to_str().unwrap()]), 1);
}

fn gain_rows(args: &[&str]) -> Vec<(String, f64, f64, f64)> {
    csv_rows(&ok(args))
        .into_iter()
        .map(|r| {
            (
                r[1].clone(),
                r[2].parse().unwrap(),
                r[3].parse().unwrap(),
                r[4].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn gains_table() {
    let rows = gain_rows(&["gains", "--r", "0.402", "--family", "ghz"]);
    assert_eq!(rows.len(), 1);
    assert!((rows[0].1 - 0.6662).abs() < 1e-4);
    assert!(rows[0].3.abs() < 1e-10);

    let rows = gain_rows(&["gains", "--r", "0.402"]);
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.3.abs() < 1e-10));

    assert!(gain_rows(&["gains", "--r", "0"])
        .iter()
        .all(|r| r.1 == 0.0 && r.2.abs() < 1e-10));
    assert_eq!(code(&["gains", "--r", "-0.1"]), 1);
}

fn criteria(args: &[&str]) -> Value {
    let mut all = vec!["criteria", "--no-timestamp"];
    all.extend_from_slice(args);
    serde_json::from_str(&ok(&all)).unwrap()
}

fn sums(v: &Value) -> Vec<f64> {
    v["evaluation"]["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["sum"].as_f64().unwrap())
        .collect()
}

#[test]
fn criteria_on_simulated_and_measured_states() {
    let v = criteria(&["--family", "cluster", "--r", "0.402"]);
    assert_eq!(v["verdict"], "fully-inseparable");
    assert_eq!(v["unit"], "snu");
    assert!((sums(&v)[0] - 0.6711).abs() < 1e-4);
    assert_eq!(v["evaluation"]["results"][2]["bounds"]["12|34"], 2.0);

    let path = data("measured_cluster.json");
    let v = criteria(&["--from-measured", path.to_str().unwrap()]);
    assert_eq!(v["verdict"], "fully-inseparable");
    assert_eq!(sums(&v), [0.828, 0.845, 1.936]);

    let v = criteria(&["--family", "ghz", "--r", "0"]);
    assert_eq!(v["verdict"], "separable-possible");
    assert_eq!(v["evaluation"]["report"]["uncovered"].as_array().unwrap().len(), 7);
}

#[test]
fn criteria_reads_simulated_state_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["simulate", "--family", "ghz", "--efficiency", "0.7", "--out", d]);
    let file = dir.path().join("simulate.json");
    let from_file = criteria(&["--family", "ghz", "--state-file", file.to_str().unwrap()]);
    let direct = criteria(&["--family", "ghz", "--efficiency", "0.7"]);
    for (a, b) in sums(&from_file).iter().zip(sums(&direct)) {
        assert!((a - b).abs() < 1e-12);
    }

    // shrink one variance below the vacuum level
    let mut json: Value = serde_json::from_slice(&std::fs::read(&file).unwrap()).unwrap();
    json["covariance"]["matrix"][0][0] = 0.01.into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, json.to_string()).unwrap();
    assert_eq!(code(&["criteria", "--state-file", bad.to_str().unwrap()]), 2);
}

#[test]
fn sweep_rows_are_monotone() {
    let rows = csv_rows(&ok(&[
        "sweep", "--family", "cluster", "--r-min", "0", "--r-max", "2", "--steps", "21",
    ]));
    assert_eq!(rows.len(), 21);
    for col in 1..4 {
        let s: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
        assert!(s.windows(2).all(|w| w[1] <= w[0]), "column {col}: {s:?}");
    }
    assert_eq!(csv_rows(&ok(&["sweep", "--family", "ghz", "--steps", "1"])).len(), 1);
    assert_eq!(code(&["sweep", "--r-min", "1", "--r-max", "0.5"]), 1);
    assert_eq!(code(&["sweep", "--steps", "0"]), 1);
}

#[test]
fn trace_output_directory_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("new/deeper");
    ok(&[
        "trace",
        "--out",
        nested.to_str().unwrap(),
        "--points",
        "20",
        "--samples-per-point",
        "500",
    ]);
    let text = std::fs::read_to_string(nested.join("trace.csv")).unwrap();
    assert!(text.starts_with("# analysis_frequency_hz="));
    assert_eq!(csv_rows(&text).len(), 20);

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    assert_eq!(code(&["trace", "--out", blocker.join("sub").to_str().unwrap()]), 1);

    let run = |seed: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_quadnet"));
        cmd.args(["trace", "--points", "10", "--samples-per-point", "200"])
            .args(extra);
        match seed {
            Some(s) => cmd.env("QUADNET_SEED", s),
            None => cmd.env_remove("QUADNET_SEED"),
        };
        let out = cmd.output().unwrap();
        (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
    };
    let a = run(Some("5"), &[]);
    assert_eq!(a, run(Some("5"), &[]));
    assert!(a.1.contains("seed=5"));
    assert_ne!(a.1, run(Some("6"), &[]).1);
    assert_eq!(a, run(None, &["--seed", "5"]));
    assert_eq!(run(Some("9"), &["--seed", "5"]), a);
    assert!(run(None, &[]).1.contains("seed=0"));
    assert_eq!(run(Some("nope"), &[]).0, 1);
}

#[test]
fn trace_of_the_lossy_difference() {
    let csv = ok(&["trace", "--efficiency", "0.459", "--combination", "Y1-Y2"]);
    let rows = csv_rows(&csv);
    let mean = rows.iter().map(|r| r[1].parse::<f64>().unwrap()).sum::<f64>() / rows.len() as f64;
    assert!((mean + 1.26).abs() < 0.1, "{mean}");
    assert_eq!(code(&["trace", "--combination", "Z9"]), 1);
    assert_eq!(code(&["trace", "--vbw", "1e6"]), 1);
}

#[test]
fn fit_measured_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&[
        "fit",
        data("measured_cluster.json").to_str().unwrap(),
        "--out",
        d,
        "--no-timestamp",
    ]);
    let json: Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["model"], "per-mode");
    assert!(json["result"]["rms_db"].as_f64().unwrap() <= 0.15);
    assert_eq!(json["report"]["rows"].as_array().unwrap().len(), 9);
    assert!(json["report"]["caveat"].as_str().unwrap().contains("not known"));
    let eta = json["alternatives"]["uniform_efficiency_ideal_gains"]["efficiencies"][0]
        .as_f64()
        .unwrap();
    assert!((eta - 0.459).abs() < 2e-3, "{eta}");
    let report = std::fs::read_to_string(dir.path().join("fit_report.txt")).unwrap();
    assert!(report.contains("degrees of freedom"));
}

#[test]
fn fit_recovers_synthetic_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let p = predict_measured(0.402, [0.62; 4], optimal_gains(Family::Ghz, 0.402), Family::Ghz).unwrap();
    let dataset = MeasuredDataset::synthetic(Family::Ghz, 0.402, p.db_below_snl, p.sums, 0.05, 0.01);
    let file = dir.path().join("synthetic.json");
    std::fs::write(&file, dataset.to_json().unwrap()).unwrap();

    let json: Value = serde_json::from_str(&ok(&["fit", file.to_str().unwrap(), "--no-timestamp"])).unwrap();
    let grid = &json["alternatives"]["uniform_efficiency_ideal_gains"];
    assert!((grid["efficiencies"][0].as_f64().unwrap() - 0.62).abs() <= 1e-3);
    let co = &json["alternatives"]["co_fit_uniform_efficiency"];
    assert!((co["efficiencies"][0].as_f64().unwrap() - 0.62).abs() <= 1e-3);
    assert!(json["result"]["rms_db"].as_f64().unwrap() < 1e-3);
}

#[test]
fn fit_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"family\": \"cluster\",\n  \"r\": \n").unwrap();
    let out = quadnet(&["fit", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");

    assert_eq!(code(&["fit", dir.path().join("missing.json").to_str().unwrap()]), 1);

    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(data("measured_cluster.json")).unwrap()).unwrap();
    v["r"]["value"] = 0.0.into();
    let flat = dir.path().join("flat.json");
    std::fs::write(&flat, v.to_string()).unwrap();
    assert_eq!(code(&["fit", flat.to_str().unwrap()]), 3);
}
