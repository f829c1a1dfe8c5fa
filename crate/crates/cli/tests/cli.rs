use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn egonet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egonet")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cycle_graph(dir: &Path, n: u64) {
    fs::create_dir_all(dir).unwrap();
    let edges: String = (0..n).map(|i| format!("{}\t{}\n", 100 + i, 100 + (i + 1) % n)).collect();
    fs::write(dir.join("edges.tsv"), edges).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    let help = egonet(&["--help"]);
    assert_eq!(code(&help), 0);
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("EGONET_LOG") && text.contains("Exit codes"));
    assert_eq!(code(&egonet(&["--version"])), 0);
    assert_eq!(code(&egonet(&["pagerank", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&egonet(&[])), 1);
    assert_eq!(code(&egonet(&["frobnicate"])), 1);
    assert_eq!(code(&egonet(&["pagerank", "--graph", "x", "--out", "y", "--policy", "lazy"])), 1);
}

#[test]
fn bad_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.json");
    fs::write(&cfg, r#"{"n_ordinary": 10, "no_such_field": 1}"#).unwrap();
    let out = egonet(&["generate", "--config", s(&cfg), "--out", s(&tmp.path().join("g"))]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(&cfg, r#"{"degree_exponent": 0.5}"#).unwrap();
    assert_eq!(code(&egonet(&["generate", "--config", s(&cfg), "--out", s(&tmp.path().join("g"))])), 1);
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&egonet(&["pagerank", "--graph", s(&tmp.path().join("missing")), "--out", s(&out)])), 2);

    let g = tmp.path().join("bad");
    fs::create_dir_all(&g).unwrap();
    fs::write(g.join("edges.tsv"), "1\t2\n3\n").unwrap();
    let res = egonet(&["pagerank", "--graph", s(&g), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

#[test]
fn zero_starts_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g");
    cycle_graph(&g, 4);
    let out = egonet(&["pagerank", "--graph", s(&g), "--starts", "0", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn cycle_has_uniform_pagerank() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g");
    cycle_graph(&g, 5);
    let out = tmp.path().join("o");
    let res = egonet(&["pagerank", "--graph", s(&g), "--starts", "5", "--steps", "20", "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("pagerank.csv")).unwrap();
    let scores: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(scores.len(), 5);
    for x in scores {
        assert!((x - 0.2).abs() < 1e-12, "{x}");
    }
    // every walk on a cycle visits each node the same number of times
    let visits = fs::read_to_string(out.join("visits.csv")).unwrap();
    let counts: Vec<&str> = visits.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert!(counts.iter().all(|c| *c == counts[0]), "{counts:?}");
}

#[test]
fn empty_network_yields_empty_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.json");
    fs::write(&cfg, r#"{"n_ordinary": 0}"#).unwrap();
    let g = tmp.path().join("g");
    let res = egonet(&["generate", "--config", s(&cfg), "--out", s(&g)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_to_string(g.join("edges.tsv")).unwrap(), "");

    let rep = tmp.path().join("rep");
    let res = egonet(&["report", "--graph", s(&g), "--out", s(&rep)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_to_string(rep.join("auc.csv")).unwrap(), "language,metric,auc\n");
    assert_eq!(
        fs::read_to_string(rep.join("metrics.csv")).unwrap(),
        "metric,language,method,threshold,user_type,id,value\n"
    );
}

#[test]
fn exhausted_budget_saves_progress() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.json");
    fs::write(&cfg, r#"{"n_ordinary": 3000, "seed": 4}"#).unwrap();
    let g = tmp.path().join("g");
    assert_eq!(code(&egonet(&["generate", "--config", s(&cfg), "--out", s(&g)])), 0);

    let out = tmp.path().join("s");
    let args = ["sample", "--graph", s(&g), "--seeds", "2", "--quota", "500", "--calls-per-window", "1", "--out", s(&out)];
    let res = egonet(&args);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("--resume"));
    let token: Value = serde_json::from_str(&fs::read_to_string(out.join("resume.json")).unwrap()).unwrap();
    assert!(!token["pending"].as_array().unwrap().is_empty());

    // a token only resumes the run it came from
    let token_path = out.join("resume.json");
    let mut other = args.to_vec();
    other[5] = "3";
    other.extend(["--resume", s(&token_path)]);
    assert_eq!(code(&egonet(&other)), 1);
}

#[test]
fn manifest_records_inputs_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g");
    cycle_graph(&g, 3);
    let out = tmp.path().join("o");
    assert_eq!(code(&egonet(&["pagerank", "--graph", s(&g), "--starts", "3", "--seed", "9", "--out", s(&out)])), 0);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["run"]["command"], "pagerank");
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert_eq!(outputs, ["bands.csv", "comparison.csv", "pagerank.csv", "visits.csv"]);
    assert!(m["inputs"][0]["path"].as_str().unwrap().ends_with("edges.tsv"));

    // editing an input makes the rerun refuse
    fs::write(g.join("edges.tsv"), "100\t101\n101\t100\n").unwrap();
    assert_eq!(code(&egonet(&["rerun", s(&out), "--out", s(&tmp.path().join("re"))])), 2);
}

#[test]
fn access_serves_json_lines() {
    use std::io::Write;
    use std::process::Stdio;

    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g");
    cycle_graph(&g, 3);
    let mut child = Command::new(env!("CARGO_BIN_EXE_egonet"))
        .args(["access", "--graph", s(&g), "--calls-per-window", "1"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"op\":\"followers_ids\",\"id\":100,\"page\":0}\n{\"op\":\"friends_ids\",\"id\":100,\"page\":0}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 0);
    let lines: Vec<Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["result"], serde_json::json!([102]));
    assert_eq!(lines[1]["ok"], false);
    assert_eq!(lines[1]["error"]["kind"], "rate_limited");
}
