use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use parareg::problem::{fixture, list_fixtures, ProblemFile};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_parareg"));
    c.env("PARAREG_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// The parabola fixture moved to an infeasible base point.
fn infeasible_file() -> PathBuf {
    let mut v: Value = serde_json::from_str(&fixture("parabola", Some(0.0)).unwrap().to_json()).unwrap();
    v["base_point"] = serde_json::json!([1.0, 0.0]);
    let path = scratch_dir("infeasible").join("parabola_off.json");
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn fixtures_are_listed_and_written() {
    let out = run(&["fixtures"]);
    assert_eq!(code(&out), 0);
    let names: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert!(names.len() >= 8);
    assert!(names.iter().any(|n| n == "parabola"));
    assert!(names.iter().any(|n| n == "epi_alpha"));

    let dir = scratch_dir("written");
    assert_eq!(code(&run(&["fixtures", "--write", dir.to_str().unwrap()])), 0);
    for name in list_fixtures() {
        let text = std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap();
        let parsed = ProblemFile::parse(&text).unwrap();
        assert_eq!(parsed, fixture(name, None).unwrap(), "{name}");
    }
}

#[test]
fn subderivative_of_the_parabola() {
    let dir = scratch_dir("files");
    let path = dir.join("parabola.json");
    std::fs::write(&path, fixture("parabola", None).unwrap().to_json()).unwrap();
    let out = run(&["subderivative", path.to_str().unwrap(), "--w", "1,0", "--json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let d = &r["results"]["subderivatives"][0];
    assert_eq!(d["value"].as_f64(), Some(2.0));
    assert_eq!(d["certificate"]["kind"], "exact");
}

#[test]
fn optimality_of_the_parabola() {
    let out = run(&["optimality", "parabola", "--c", "0", "--samples", "2000", "--json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(r["results"]["sufficient"], true);
    assert!((r["results"]["ell_hat"].as_f64().unwrap() - 2.0).abs() < 1e-3);
}

#[test]
fn second_order_tangent_of_the_nonreducible_set_is_empty() {
    let out = run(&["oracle", "epi_alpha", "--t2", "--w", "1,0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("T² empty (diverging)"));
}

#[test]
fn exit_code_contract_per_command() {
    let bad = infeasible_file();
    let bad = bad.to_str().unwrap();
    let cases: [(&str, Vec<&str>, Vec<&str>); 7] = [
        ("cones", vec!["orthant", "--oracle"], vec![bad]),
        ("subderivative", vec!["soc_boundary", "--oracle"], vec!["parabola", "--w", "1,0,0"]),
        ("optimality", vec!["parabola", "--samples", "2000"], vec!["parabola", "--c", "-2", "--samples", "2000"]),
        ("auglag", vec!["parabola", "--samples", "500"], vec!["parabola", "--c", "-2", "--samples", "500"]),
        ("gder", vec!["orthant", "--oracle"], vec![bad]),
        ("oracle", vec!["parabola", "--t2", "--w", "1,0"], vec!["parabola", "--w", "1,0,0"]),
        ("diagnose", vec!["strongly_convex"], vec!["parabola", "--c", "-1"]),
    ];
    for (cmd, pass, fail) in cases {
        let out = run(&[&[cmd], pass.as_slice()].concat());
        assert_eq!(code(&out), 0, "{cmd} {pass:?}: {}{}", stdout(&out), stderr(&out));
        assert!(stdout(&out).ends_with("exit: 0\n"));
        let out = run(&[&[cmd], fail.as_slice()].concat());
        assert_eq!(code(&out), 1, "{cmd} {fail:?}: {}{}", stdout(&out), stderr(&out));
    }
}

#[test]
fn failing_certificates_are_printed() {
    let out = run(&["optimality", "parabola", "--c", "-2", "--samples", "2000"]);
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("[fail] second-order sufficient"));
    assert!(text.ends_with("exit: 1\n"));
}

#[test]
fn parse_errors_carry_line_and_column() {
    let path = scratch_dir("broken").join("broken.json");
    std::fs::write(&path, "{\n  \"n\": 2,\n  \"m\": 1,\n  oops\n}\n").unwrap();
    let out = run(&["cones", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 4, column 3"), "{}", stderr(&out));

    let out = run(&["cones", "no_such_fixture"]);
    assert_eq!(code(&out), 1);
    assert!(!stderr(&out).is_empty());
}

#[test]
fn reruns_are_byte_identical() {
    for args in [
        vec!["optimality", "soc_boundary", "--samples", "3000", "--seed", "7", "--json"],
        vec!["auglag", "parabola", "--samples", "500", "--seed", "3", "--json"],
        vec!["gder", "soc_boundary", "--oracle", "--json"],
        vec!["diagnose", "intersection_halfplanes", "--oracle"],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(code(&a), 0, "{args:?}: {}", stderr(&a));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn thread_count_does_not_change_reports() {
    let args = ["optimality", "soc_vertex", "--samples", "2000", "--json"];
    let one = run(&args);
    let many = Command::new(env!("CARGO_BIN_EXE_parareg")).env("PARAREG_THREADS", "4").args(args).output().unwrap();
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn tolerance_overrides_are_echoed() {
    let out = run(&["cones", "orthant", "--tol-cone", "1e-6", "--json"]);
    assert_eq!(code(&out), 0);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(r["inputs"]["flags"]["tol_cone"].as_f64(), Some(1e-6));
}
