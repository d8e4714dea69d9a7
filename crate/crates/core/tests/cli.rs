use std::path::Path;
use std::process::{Command, Output};

use corona_lab::harness::canonical_pair;
use corona_lab::measure::save_measure;

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_corona-lab"));
    c.args(args);
    match threads {
        Some(t) => c.env("CORONA_LAB_THREADS", t),
        None => c.env_remove("CORONA_LAB_THREADS"),
    };
    c.output().expect("binary runs")
}

fn pair_files(dir: &Path) -> (String, String) {
    let (mu, nu) = canonical_pair(13).unwrap();
    let (m, n) = (dir.join("mu.json"), dir.join("nu.json"));
    save_measure(&mu, &m).unwrap();
    save_measure(&nu, &n).unwrap();
    (m.to_string_lossy().into_owned(), n.to_string_lossy().into_owned())
}

#[test]
fn commands_succeed_and_emit_json() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, n) = pair_files(tmp.path());
    for cmd in ["analyze", "corona", "paraproducts"] {
        let out = run(&[cmd, "--mu", &m, "--nu", &n, "--depth", "5"], None);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v.is_object());
    }
    let out = run(&["goodbad", "--r", "2..4", "--samples", "200"], None);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn out_flag_writes_the_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, n) = pair_files(tmp.path());
    let file = tmp.path().join("report.json");
    let a = run(&["analyze", "--mu", &m, "--nu", &n], None);
    let b = run(&["analyze", "--mu", &m, "--nu", &n, "--out", file.to_str().unwrap()], None);
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(std::fs::read(&file).unwrap(), a.stdout);
}

#[test]
fn output_does_not_depend_on_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, n) = pair_files(tmp.path());
    let args = ["paraproducts", "--mu", m.as_str(), "--nu", n.as_str(), "--shift-seed", "3"];
    let base = run(&args, Some("1"));
    for t in ["2", "5"] {
        let o = run(&args, Some(t));
        assert_eq!(o.status.code(), base.status.code());
        assert_eq!(o.stdout, base.stdout);
    }
    let s = ["search", "--population", "6", "--generations", "2", "--elite", "2"];
    assert_eq!(run(&s, Some("1")).stdout, run(&s, Some("3")).stdout);
}

#[test]
fn invalid_input_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, _) = pair_files(tmp.path());
    let garbage = tmp.path().join("bad.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    let g = garbage.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["analyze", "--mu", &m],
        vec!["analyze", "--mu", &m, "--nu", g],
        vec!["analyze", "--mu", &m, "--nu", "/no/such/file.json"],
        vec!["goodbad", "--r", "5..2"],
        vec!["goodbad", "--r", "2..50", "--scale-cap", "40"],
        vec!["corona", "--mu", &m, "--nu", &m, "--k", "-1"],
        vec!["search", "--elite", "0"],
    ];
    for c in &cases {
        let o = run(c, None);
        assert_eq!(o.status.code(), Some(1), "{c:?}");
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(run(&["goodbad", "--samples", "10"], Some("0")).status.code(), Some(1));
    assert_eq!(run(&["goodbad", "--samples", "10"], Some("many")).status.code(), Some(1));
    assert_eq!(run(&["--help"], None).status.code(), Some(0));
}

#[test]
fn flagged_reports_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.json"), tmp.path().join("b.json"));
    std::fs::write(&a, r#"{"label":"a","atoms":[{"x":0.2,"w":1},{"x":0.5,"w":1}]}"#).unwrap();
    std::fs::write(&b, r#"{"label":"b","atoms":[{"x":0.5,"w":2},{"x":0.9,"w":1}]}"#).unwrap();
    let o = run(&["verify", "--mu", a.to_str().unwrap(), "--nu", b.to_str().unwrap(), "--samples", "10"], None);
    assert_eq!(o.status.code(), Some(2));
    // the partial report is still written
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!v["flags"].as_array().unwrap().is_empty());
}
