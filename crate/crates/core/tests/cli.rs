use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ceqopt::io::{load_problem, parse_problem, print_problem};
use ceqopt::run::{run, Command as RunCommand, RunOptions};
use proptest::prelude::*;

mod common;

const EXE: &str = env!("CARGO_BIN_EXE_ceqopt");

fn problem_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

fn ceqopt(args: &[&str]) -> Output {
    Command::new(EXE).args(args).output().expect("binary runs")
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn shipped_problems_round_trip() {
    for entry in std::fs::read_dir(problem_file("")).unwrap() {
        let p = load_problem(entry.unwrap().path()).unwrap();
        let text = print_problem(&p);
        let back = parse_problem(&text).unwrap();
        assert_eq!(print_problem(&back), text);
        assert_eq!(back.bounds(), p.bounds());
        assert_eq!(back.names(), p.names());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_problems_round_trip(seed in 0u64..10_000, n in 2usize..=4) {
        let p = common::random_polynomial_problem(seed, n);
        let back = parse_problem(&print_problem(&p)).unwrap();
        prop_assert_eq!(back.objective(), p.objective());
        prop_assert_eq!(back.constraints().len(), p.constraints().len());
        for (a, b) in back.constraints().iter().zip(p.constraints()) {
            prop_assert_eq!(&a.g, &b.g);
            prop_assert_eq!(a.target, b.target);
        }
        prop_assert_eq!(back.bounds(), p.bounds());
    }
}

#[test]
fn solve_prints_json() {
    let out = ceqopt(&["solve", problem_file("example2.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["stationary_points"].as_array().unwrap().len(), 4);
}

#[test]
fn json_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let file = problem_file("example2.txt");
    for path in [&a, &b] {
        let out = ceqopt(&["compare", file.to_str().unwrap(), "--json", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn csv_numbers_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let file = problem_file("example1b.txt");
    let out = ceqopt(&["solve", file.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(csv).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(2)
        .take_while(|l| !l.starts_with('#'))
        .map(|l| l.split(',').take(3).map(|v| v.parse().unwrap()).collect())
        .collect();
    let p = load_problem(&file).unwrap();
    let report = run(&p, &RunOptions::new(RunCommand::Solve, &p)).unwrap();
    let want: Vec<Vec<f64>> = report
        .stationary_points
        .iter()
        .map(|sp| vec![sp.point[0], sp.point[1], sp.f_value])
        .collect();
    assert_eq!(rows, want);
}

#[test]
fn sample_writes_csv_to_stdout() {
    let file = problem_file("example1a.txt");
    let out = ceqopt(&["sample", file.to_str().unwrap(), "--axis", "y", "--range", "-1,1", "--count", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "x,y,f");
    assert_eq!(rows[1], "2,-1,6");
    assert_eq!(rows.len(), 6);
}

#[test]
fn missing_file_is_an_input_error() {
    let out = ceqopt(&["solve", "/nonexistent/problem.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn syntax_error_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_temp(&dir, "bad.txt", "vars: x, y\nf: x^2 + * y\ng: x - y = 0\n");
    let out = ceqopt(&["solve", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn unknown_axis_is_an_input_error() {
    let out = ceqopt(&["boundaries", problem_file("example1a.txt").to_str().unwrap(), "--axis", "w"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nothing_found_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_temp(&dir, "none.txt", "vars: x, y\nf: x + y\ng: x - y = 0\nbox: -3 3\n");
    let out = ceqopt(&["solve", &path]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oversized_problem_hits_the_guard() {
    let names: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
    let mut text = format!("vars: {}\nf: {}\n", names.join(", "), names.join(" * "));
    for name in &names[1..] {
        text.push_str(&format!("g: x0 + {name} = 1\n"));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = write_temp(&dir, "big.txt", &text);
    let out = ceqopt(&["solve", &path]);
    assert_eq!(out.status.code(), Some(4));
}
