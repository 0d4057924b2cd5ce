use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gradcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradcode"))
        .args(args)
        .env_remove("GRADCODE_CAP")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(Result::unwrap)
        .collect()
}

fn column(text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

fn num(v: &[String]) -> Vec<f64> {
    v.iter().map(|s| s.parse().unwrap()).collect()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn construct_fano_writes_matrix_and_report() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "fano.txt");
    let o = gradcode(&["construct", "--descriptor", "fano", "--out", &out]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "7 7");
    assert_eq!(lines.len(), 8);
    assert!(lines[1..].iter().all(|l| l.len() == 7 && l.chars().filter(|&c| c == '1').count() == 3));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["params"]["l"], 3);
    assert_eq!(report["params"]["r"], 3);
    assert_eq!(report["params"]["lambda"], 1);

    let v = gradcode(&["validate", "--matrix", &out]);
    assert!(v.status.success());
    assert_eq!(stdout(&v), stdout(&o));
}

#[test]
fn construct_nested_kronecker() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "ff.txt");
    let desc = r#"{"type":"kronecker","left":{"type":"catalog","name":"fano"},"right":{"type":"catalog","name":"fano"}}"#;
    let o = gradcode(&["construct", "-d", desc, "-o", &out]);
    assert!(o.status.success());
    assert!(fs::read_to_string(&out).unwrap().starts_with("49 49\n"));
}

#[test]
fn descriptor_file_is_accepted() {
    let dir = TempDir::new().unwrap();
    let desc = path(&dir, "d.json");
    fs::write(&desc, r#"{"type":"frc","n":6,"k":6,"l":2,"r":2}"#).unwrap();
    let o = gradcode(&["construct", "-d", &desc, "-o", &path(&dir, "m.txt")]);
    assert!(o.status.success());
}

#[test]
fn malformed_descriptor_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = gradcode(&["construct", "-d", r#"{"type":"frc","n":6"#, "-o", &path(&dir, "x.txt")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Path::new(&path(&dir, "x.txt")).exists());
    let o = gradcode(&["construct", "-d", r#"{"type":"frc","n":6,"k":6,"l":2,"r":2,"x":1}"#, "-o", &path(&dir, "x.txt")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_parameters_exit_3() {
    let dir = TempDir::new().unwrap();
    let o = gradcode(&["construct", "-d", r#"{"type":"frc","n":7,"k":7,"l":2,"r":2}"#, "-o", &path(&dir, "x.txt")]);
    assert_eq!(o.status.code(), Some(3));
    let o = gradcode(&["mc-expected", "--n", "4", "--k", "4", "--l", "3", "--lambda", "1", "--s", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("2 lambda >= l"));
}

#[test]
fn fano_error_curve_matches_formula() {
    let o = gradcode(&["error-curve", "-d", "fano"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "s,fraction_straggled,measured_error,method,formula_or_bound,bound_name,witness,warning"
    );
    assert_eq!(csv_rows(&text).len(), 8);
    let measured = num(&column(&text, "measured_error"));
    let formula = num(&column(&text, "formula_or_bound"));
    for (m, f) in measured.iter().zip(&formula) {
        assert!((m - f).abs() <= 1e-9);
    }
    assert!(column(&text, "bound_name").iter().all(|b| b == "bibd"));
    assert!(column(&text, "method").iter().all(|m| m == "exhaustive"));
}

#[test]
fn frc_error_curve_is_exact() {
    let o = gradcode(&["error-curve", "-d", r#"{"type":"frc","n":6,"k":6,"l":2,"r":2}"#]);
    let text = stdout(&o);
    assert_eq!(column(&text, "measured_error"), column(&text, "formula_or_bound"));
    assert_eq!(column(&text, "witness")[3], "0 1 2");
}

#[test]
fn sampled_product_curve_stays_under_bound() {
    let desc = r#"{"type":"kronecker","left":{"type":"catalog","name":"fano"},"right":{"type":"catalog","name":"fano"}}"#;
    let o = gradcode(&["error-curve", "-d", desc, "--method", "sampled", "--trials", "300", "--s", "5,10,20,30"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let measured = num(&column(&text, "measured_error"));
    let bound = num(&column(&text, "formula_or_bound"));
    assert_eq!(measured.len(), 4);
    for (m, b) in measured.iter().zip(&bound) {
        assert!(m <= b);
    }
}

#[test]
fn cap_downgrades_or_fails_in_strict_mode() {
    let o = gradcode(&["error-curve", "-d", "fano", "--cap", "10", "--trials", "50"]);
    assert!(o.status.success());
    let warnings = column(&stdout(&o), "warning");
    assert_eq!(warnings[0], "");
    assert_eq!(warnings[3], "cap_exceeded_downgraded_to_sampled");

    let o = gradcode(&["error-curve", "-d", "fano", "--cap", "10", "--strict"]);
    assert_eq!(o.status.code(), Some(4));

    let o = Command::new(env!("CARGO_BIN_EXE_gradcode"))
        .args(["error-curve", "-d", "fano", "--strict"])
        .env("GRADCODE_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn json_format_mirrors_csv() {
    let o = gradcode(&["error-curve", "-d", "fano", "--format", "json", "--s", "0..=2"]);
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 3);
    assert_eq!(rows[2]["bound_name"], "bibd");
    assert_eq!(rows[2]["witness"], serde_json::json!([0, 1]));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    for out in [&a, &b] {
        let o = gradcode(&[
            "error-curve", "-d", "pg2_4", "--method", "auto", "--cap", "2000", "--trials", "200", "--seed", "3", "-o", out,
        ]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn compare_flags_redundancy_mismatch() {
    let o = gradcode(&["compare", "-d", "fano", "-d", r#"{"type":"frc","n":4,"k":4,"l":2,"r":2}"#]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(column(&text, "redundancy_mismatch").iter().all(|f| f == "true"));
    let fractions = num(&column(&text, "fraction_straggled"));
    assert!(fractions.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(fractions.len(), 8 + 5);
}

#[test]
fn compare_matched_redundancy() {
    let o = gradcode(&["compare", "-d", "pg2_3", "-d", r#"{"type":"frc","n":12,"k":12,"l":4,"r":4}"#, "--s", "0..3"]);
    assert!(o.status.success());
    assert!(column(&stdout(&o), "redundancy_mismatch").iter().all(|f| f == "false"));
}

#[test]
fn compare_needs_two_descriptors() {
    let o = gradcode(&["compare", "-d", "fano"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gradcode(&["compare"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mc_expected_reports_json() {
    let o = gradcode(&[
        "mc-expected", "--n", "7", "--k", "7", "--l", "3", "--lambda", "2", "--s", "2", "--trials", "2000", "--decoder",
        "bibd_constant",
    ]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["params", "s", "trials", "mean", "stderr", "bound", "decoder"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    let (mean, se, bound) = (r["mean"].as_f64().unwrap(), r["stderr"].as_f64().unwrap(), r["bound"].as_f64().unwrap());
    assert!((bound - (1.0 - 45.0 / 77.0)).abs() < 1e-12);
    assert!((mean - bound).abs() <= 3.0 * se);
    assert_eq!(r["decoder"], "bibd_constant");
}

#[test]
fn simulate_writes_deterministic_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "cfg.json");
    fs::write(
        &cfg,
        r#"{"codes":[{"type":"catalog","name":"fano"}],
            "policy":{"kind":"adversarial_worst_case","s":2},
            "iterations":25,"dimension":4,"noise":0.05,"data_seed":9}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let (js, cs) = (path(&dir, &format!("{run}.json")), path(&dir, &format!("{run}.csv")));
        let o = gradcode(&["simulate", "-c", &cfg, "--out-json", &js, "--out-csv", &cs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((fs::read(&js).unwrap(), fs::read_to_string(&cs).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv_text = &outputs[0].1;
    assert!(csv_text.starts_with("code,t,loss,deviation_from_exact_gd\n"));
    assert_eq!(csv_rows(csv_text).len(), 26);
    let report: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    assert_eq!(report["runs"][0]["adversary"]["stragglers"], serde_json::json!([0, 1]));
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "cfg.json");
    fs::write(&cfg, r#"{"codes":[{"type":"catalog","name":"fano"}],"iterations":3}"#).unwrap();
    assert_eq!(gradcode(&["simulate", "-c", &cfg]).status.code(), Some(2));
    fs::write(
        &cfg,
        r#"{"codes":[{"type":"catalog","name":"fano"}],"policy":{"kind":"random_uniform","s":7,"seed":1},"iterations":3}"#,
    )
    .unwrap();
    assert_eq!(gradcode(&["simulate", "-c", &cfg]).status.code(), Some(3));
}

#[test]
fn help_and_unknown_flags() {
    assert_eq!(gradcode(&["--help"]).status.code(), Some(0));
    assert_eq!(gradcode(&["error-curve", "--bogus"]).status.code(), Some(2));
}
