use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gexp(config: &str, out: &Path, extra: &[&str]) -> Output {
    let dir = out.parent().unwrap();
    let path = dir.join(format!(
        "{}.json",
        out.file_name().unwrap().to_string_lossy()
    ));
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_gexp"))
        .arg("run")
        .arg(&path)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("GEXP_OUT_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn empty_suite_writes_an_empty_summary() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = gexp(r#"{"experiments": []}"#, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        read(&out.join("summary.csv")),
        "experiment,check,value,tolerance,seed,status\n"
    );
}

#[test]
fn default_theorem_suite_passes_every_step() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = gexp(
        r#"{"experiments": [{"name": "verify-theorem35"}]}"#,
        &out,
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = read(&out.join("summary.csv"));
    for step in ["1: ", "2: ", "3: ", "4: ", "contrapositive: "] {
        assert!(
            summary
                .lines()
                .any(|l| l.starts_with(&format!("verify-theorem35,{step}"))),
            "{step}"
        );
    }
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",1,pass")));
    assert!(out.join("01-verify-theorem35.csv").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (
            r#"{"band": {"sigma_lo": 0.0, "sigma_hi": 1.0}}"#,
            "band.sigma_lo",
        ),
        (
            r#"{"band": {"sigma_lo": 2.0, "sigma_hi": 1.0}}"#,
            "band.sigma_hi",
        ),
        (
            r#"{"experiments": [{"name": "no-such-experiment"}]}"#,
            "line 1",
        ),
        (
            r#"{"grids": {"n_points": 241, "pde_steps": 10}}"#,
            "grids.pde_steps",
        ),
        (
            r#"{"experiments": [{"name": "gexp"}, {"name": "verify-lemma32", "alpha": 0.5}]}"#,
            "experiments[1] (verify-lemma32)",
        ),
        (
            r#"{"experiments": [{"name": "gexp", "typo": 1}]}"#,
            "line 1",
        ),
    ];
    for (i, (config, location)) in cases.iter().enumerate() {
        let out = tmp.path().join(format!("case{i}"));
        let o = gexp(config, &out, &[]);
        assert_eq!(o.status.code(), Some(2), "{config}: {}", stderr(&o));
        assert!(stderr(&o).contains(location), "{config}: {}", stderr(&o));
        assert!(!out.exists());
    }
}

#[test]
fn failed_checks_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let config = r#"{"mc": {"n_paths": 200}, "experiments": [{"name": "identify-drift", "rel_tol": 1e-14}]}"#;
    let o = gexp(config, &out, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(read(&out.join("summary.csv")).contains(",fail"));
}

const SUITE: &str = r#"{
  "grids": {"n_steps": 32, "n_points": 121},
  "mc": {"n_paths": 300, "seed": 7},
  "experiments": [
    {"name": "solve-gheat", "rows": 3},
    {"name": "gexp", "payoff": {"kind": "butterfly", "width": 2.0}, "times": [0.5, 1.0]},
    {"name": "decompose", "n_paths": 20},
    {"name": "verify-martingale"},
    {"name": "identify-drift"},
    {"name": "gbsde", "rows": 3},
    {"name": "price-uvm", "payoff": {"kind": "put", "strike": 0.5}}
  ]
}"#;

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(gexp(SUITE, &a, &[]).status.code(), Some(0));
    assert_eq!(gexp(SUITE, &b, &[]).status.code(), Some(0));
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for name in names {
        let (x, y) = (
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
        );
        assert_eq!(x, y, "{name:?}");
        assert!(!x.contains(&b'\r'));
    }
}

#[test]
fn seed_flag_and_output_directory_variable() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("from-env");
    let path = tmp.path().join("suite.json");
    fs::write(
        &path,
        r#"{"mc": {"n_paths": 100}, "experiments": [{"name": "verify-martingale"}]}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gexp"))
        .arg("run")
        .arg(&path)
        .args(["--seed", "99"])
        .env("GEXP_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = read(&out.join("summary.csv"));
    assert!(
        summary.lines().skip(1).all(|l| l.contains(",99,")),
        "{summary}"
    );
}
