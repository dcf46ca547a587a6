use std::process::{Command, Output};

fn unisplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unisplit")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const HEADER: &str = "gamma,method,mean,re_percent,wnrv,wall_seconds,seed,paper_reference_label,\
                      paper_reference_mean,paper_reference_re_percent,paper_reference_wnrv";

#[test]
fn run_json_report() {
    let o = unisplit(&["run", "--table", "I", "--gamma", "60", "--m", "10", "--s", "500"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mean = v["mean"].as_f64().unwrap();
    assert!(mean > 5e-5 && mean < 2e-4, "{mean}");
    assert_eq!(v["method"], "split");
    // timing is opt-in so repeated runs compare equal
    assert!(v.get("wall_seconds").is_none_or(|w| w.is_null()));
    assert!(stderr(&o).contains("split gamma=60"));
}

#[test]
fn run_csv_has_fixed_header() {
    let o = unisplit(&["run", "--table", "I", "--gamma", "60", "--method", "naive", "--m", "20000", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    let row = lines.next().unwrap();
    assert!(row.starts_with("60,naive,"), "{row}");
}

#[test]
fn reproduce_writes_reference_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t1.csv");
    let o = unisplit(&[
        "reproduce",
        "--table",
        "I",
        "--gammas",
        "60",
        "--methods",
        "split",
        "--m",
        "5",
        "--s",
        "300",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some(HEADER));
    assert!(text.lines().any(|l| l.starts_with("60,split,")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("60,reference,") && l.contains(",is,")), "{text}");
}

#[test]
fn levels_lists_times() {
    let o = unisplit(&["levels", "--table", "I", "--gamma", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let times: Vec<f64> = v["times"].as_array().unwrap().iter().map(|t| t.as_f64().unwrap()).collect();
    assert!(times.len() >= 2);
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*times.last().unwrap(), 1.0);
}

#[test]
fn verify_against_exact_value() {
    let o = unisplit(&["verify", "--table", "I", "--gamma", "60", "--m", "20", "--s", "1000"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["exact"].as_f64().unwrap() - 1.061519e-4).abs() < 1e-9);
    assert_eq!(v["agrees"], true);
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"marginals":[{"kind":"weibull","params":{"alpha":0.5}}],"directions":["I"],
            "importance":{"kind":"sum"},"gamma":1,"kind":"continuous"}"#,
    )
    .unwrap();
    let o = unisplit(&["run", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("marginals[0]"), "{}", stderr(&o));

    let missing = dir.path().join("missing.json");
    assert_eq!(unisplit(&["run", "--scenario", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(unisplit(&["run", "--table", "IX"]).status.code(), Some(2));
    assert_eq!(unisplit(&["run", "--table", "I", "--pbar", "1.5"]).status.code(), Some(2));
    assert_eq!(unisplit(&["run"]).status.code(), Some(2));
    assert_eq!(unisplit(&["run", "--table", "II", "--method", "is", "--m", "10"]).status.code(), Some(2));
}

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.json");
    std::fs::write(
        &path,
        r#"{"name":"exp4","marginals":[
              {"kind":"exponential","params":{"rate":1}},{"kind":"exponential","params":{"rate":1}},
              {"kind":"exponential","params":{"rate":1}},{"kind":"exponential","params":{"rate":1}}],
            "directions":["I","I","I","I"],"importance":{"kind":"sum"},"gamma":0.5,"kind":"continuous",
            "settings":{"s":1000,"m":20,"seed":5}}"#,
    )
    .unwrap();
    let o = unisplit(&["verify", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["exact"].as_f64().unwrap() - 1.751_622_556e-3).abs() < 1e-11);
    assert_eq!(v["report"]["seed"], 5);
}
