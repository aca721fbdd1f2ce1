use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmdp-bench"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn envelope_prints_the_bound_dictionary() {
    let out = cli(&[
        "envelope",
        "--instance",
        &data("tiny.json"),
        "--T",
        "1000",
        "--rho",
        "0.3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for key in ["C ", "D ", "E_D", "Lambda", "margin_condition_holds"] {
        assert!(
            text.lines().any(|l| l.starts_with(key)),
            "missing {key} in\n{text}"
        );
    }
    let json = cli(&[
        "envelope",
        "--instance",
        &data("tiny.json"),
        "--T",
        "1000",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["c"], 4032.0);
}

#[test]
fn check_passes_on_the_tiny_instance() {
    let out = cli(&[
        "check",
        "--instance",
        &data("tiny.json"),
        "--scenario",
        &data("tiny_scenario.json"),
        "--mode",
        "paper",
        "--T",
        "300",
        "--seeds",
        "2",
    ]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    assert_eq!(stdout(&out).matches("PASS").count(), 2);
}

#[test]
fn solve_reports_the_trend_baselines() {
    let out = cli(&[
        "solve",
        "--instance",
        &data("trend.json"),
        "--scenario",
        &data("trend_scenario.json"),
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["baselines"]["opt"].as_f64().unwrap() - 1.7).abs() < 1e-9);
    assert!((v["baselines"]["rho"].as_f64().unwrap() - 0.48).abs() < 1e-9);
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let args = [
        "run",
        "--instance",
        &data("tiny.json"),
        "--scenario",
        &data("tiny_scenario.json"),
        "--T",
        "128",
        "--out",
        out_dir,
    ];
    let out = cli(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    assert!(lines
        .next()
        .unwrap()
        .starts_with("t,reward,violation_1,cum_violation_1,lambda_l1"));
    assert_eq!(lines.count(), 128);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["episodes"], 128);
    let stdout_run = cli(&args[..args.len() - 2]);
    assert_eq!(stdout_run.stdout, csv.as_bytes());
}

#[test]
fn bench_writes_aggregate_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "bench",
        "--instance",
        &data("trend.json"),
        "--scenario",
        &data("flip_scenario.json"),
        "--T",
        "256",
        "--seeds",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let agg = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let header = agg.lines().nth(1).unwrap();
    assert!(header
        .starts_with("t,regret_strong_mean,regret_strong_lo,regret_strong_hi,regret_weak_mean"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);
    assert!(summary["runs"][0]["competitive_ratio"].is_number());
    assert!(summary["baselines"]["weak_opt"].is_number());
}

#[test]
fn malformed_configuration_names_the_field() {
    let tiny = data("tiny.json");
    let scenario = data("tiny_scenario.json");
    let dir = tempfile::tempdir().unwrap();
    let bad_value = dir.path().join("bad_value.json");
    let text = std::fs::read_to_string(&scenario)
        .unwrap()
        .replacen("-0.2", "-1.5", 1);
    std::fs::write(&bad_value, text).unwrap();
    let bad_key = dir.path().join("bad_key.json");
    let text = std::fs::read_to_string(&scenario)
        .unwrap()
        .replacen("\"noise\"", "\"nois\"", 1);
    std::fs::write(&bad_key, text).unwrap();

    let cases: [(Vec<&str>, &str); 5] = [
        (
            vec![
                "run",
                "--instance",
                &tiny,
                "--scenario",
                &scenario,
                "--T",
                "0",
            ],
            "T:",
        ),
        (
            vec![
                "run",
                "--instance",
                &tiny,
                "--scenario",
                &scenario,
                "--delta",
                "1.5",
            ],
            "delta:",
        ),
        (
            vec![
                "run",
                "--instance",
                &tiny,
                "--scenario",
                bad_value.to_str().unwrap(),
            ],
            "constraints.mean[0]",
        ),
        (
            vec![
                "run",
                "--instance",
                &tiny,
                "--scenario",
                bad_key.to_str().unwrap(),
            ],
            "nois",
        ),
        (vec!["run", "--scenario", &scenario], "instance:"),
    ];
    for (args, field) in cases {
        let out = cli(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(stderr(&out).contains(field), "{args:?}: {}", stderr(&out));
    }
}
