use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

use rough_core::rde::{RDESolution, SolutionJson};
use rough_core::rough_path::{RoughPath, RoughPathJson};

fn rough(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rough"))
        .args(args)
        .env_remove("ROUGH_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json_of(args: &[&str]) -> Value {
    let out = rough(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Data rows of a CSV artifact, skipping the `#` metadata line and header.
fn csv_rows(out: &Output) -> Vec<Vec<f64>> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn lift_generator_matches_iterated_integrals() {
    let v = json_of(&["lift", "--generator", "t,t^2", "--steps", "1024"]);
    let l2 = &v["report"]["level2_total"];
    let want = [[0.5, 2.0 / 3.0], [1.0 / 3.0, 0.5]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((f(&l2[i][j]) - want[i][j]).abs() <= 1e-4);
        }
    }
    assert_eq!(v["meta"]["version"], concat!("v", env!("CARGO_PKG_VERSION")));
    assert_eq!(v["meta"]["config"]["command"]["generator"], "t,t^2");
}

#[test]
fn lift_constant_csv_has_zero_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    fs::write(&csv, "t,x1,x2\n0,1,2\n0.5,1,2\n1,1,2\n").unwrap();
    let v = json_of(&["lift", "--input", csv.to_str().unwrap()]);
    assert_eq!(f(&v["report"]["chen_defect"]), 0.0);
    let blocks = v["rough_path"]["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 2);
    assert!(blocks.iter().flat_map(|b| b.as_array().unwrap()).flat_map(|r| r.as_array().unwrap()).all(|x| f(x) == 0.0));
}

#[test]
fn malformed_csv_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "t,x\n0,1\n0.5,oops\n").unwrap();
    let out = rough(&["lift", "--input", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(rough(&["lift"]).status.code(), Some(1));
    assert_eq!(rough(&["solve", "--preset", "nope"]).status.code(), Some(1));
    assert_eq!(rough(&["bogus"]).status.code(), Some(1));
    assert_eq!(rough(&["--help"]).status.code(), Some(0));
}

#[test]
fn convergence_orders() {
    let out = rough(&["convergence", "--preset", "gbm-strat", "--samples", "64", "--seed", "7"]);
    assert!(out.status.success());
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 7);
    assert!(rows[0][2] >= 0.8, "order {}", rows[0][2]);

    let out = rough(&["convergence", "--preset", "drift-only", "--samples", "1"]);
    assert!(out.status.success());
    assert!(csv_rows(&out)[0][2] >= 1.9);
}

#[test]
fn convergence_needs_four_rungs() {
    let out = rough(&["convergence", "--preset", "gbm-strat", "--ladder", "64"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn strat_bracket_vanishes() {
    let v = json_of(&["bracket", "--dim", "2", "--steps", "256", "--enhancement", "strat", "--format", "json"]);
    assert!(f(&v["report"]["max_abs"]) <= 1e-12);
    let v = json_of(&["bracket", "--dim", "2", "--steps", "256", "--enhancement", "ito", "--format", "json"]);
    assert!(f(&v["report"]["max_abs"]) > 0.1);
}

#[test]
fn integrate_ito_identity() {
    let v = json_of(&["integrate", "--integral", "B-dB-ito", "--steps", "1024", "--seed", "3"]);
    assert!(f(&v["report"]["abs_error"]) <= 1e-12);
    let v = json_of(&["integrate", "--integral", "b-db-strat", "--steps", "1024", "--seed", "3"]);
    assert!(f(&v["report"]["abs_error"]) <= 1e-12);
}

#[test]
fn solve_gbm_ito_matches_closed_form() {
    let v = json_of(&["solve", "--preset", "gbm-ito", "--steps", "1024", "--seed", "11"]);
    assert!(f(&v["report"]["terminal_rel_error"]) <= 1e-2);
    let sol = RDESolution::from_json(&serde_json::from_value::<SolutionJson>(v["solution"].clone()).unwrap()).unwrap();
    assert_eq!(sol.terminal()[0], f(&v["report"]["terminal"][0]));
}

#[test]
fn solve_rpde_orbit_is_exact() {
    let v = json_of(&["solve-rpde", "--A", "[[-1,0.5],[0,-2]]", "--preset", "orbit", "--steps", "128"]);
    assert!(f(&v["report"]["terminal_abs_error"]) <= 1e-10);
}

#[test]
fn solve_rpde_picard_agrees_with_step() {
    let args = ["solve-rpde", "--A", "[[-1,0],[0,-2]]", "--preset", "linear", "--steps", "256"];
    let step = json_of(&args);
    let mut picard_args = args.to_vec();
    picard_args.extend(["--solver", "picard", "--tol", "1e-12"]);
    let picard = json_of(&picard_args);
    assert_eq!(picard["report"]["converged"], true);
    for i in 0..2 {
        let (a, b) = (f(&step["report"]["terminal"][i]), f(&picard["report"]["terminal"][i]));
        assert!((a - b).abs() <= 2e-3);
    }
}

#[test]
fn outputs_are_deterministic_and_round_trip() {
    let args = ["enhance", "--dim", "2", "--steps", "128", "--seed", "9", "--enhancement", "ito"];
    let a = rough(&args);
    let b = rough(&args);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    let json: RoughPathJson = serde_json::from_value(v["rough_path"].clone()).unwrap();
    let r = RoughPath::from_json(&json).unwrap();
    assert_eq!(r.to_json(), json);

    let conv = ["convergence", "--preset", "gbm-ito", "--samples", "8", "--levels", "4:8"];
    let one = rough(&[&conv[..], &["--jobs", "1"]].concat());
    let four = rough(&[&conv[..], &["--jobs", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rough"))
        .args(["enhance", "--steps", "16"])
        .env("ROUGH_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(dir.path().join("enhance.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["meta"]["seed"], 0);
}

#[test]
fn integrate_reads_lift_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lift.json");
    let out = rough(&["lift", "--generator", "sin(t), cos(2*t)", "--steps", "64", "-o", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json_of(&["integrate", "--integral", "x-dx", "--input", path.to_str().unwrap()]);
    assert!(f(&v["report"]["abs_error"]) <= 1e-12);
}
