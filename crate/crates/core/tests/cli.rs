mod common;

use std::process::Command;

use common::{root, short_scenario};

fn matcycle() -> Command {
    Command::new(env!("CARGO_BIN_EXE_matcycle"))
}

#[test]
fn caps_prints_interpolated_cap() {
    let out = matcycle()
        .arg("caps")
        .arg(root().join("scenarios/caps.toml"))
        .args(["--year", "2040"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "100000000");
    let out = matcycle()
        .arg("caps")
        .arg(root().join("scenarios/caps.toml"))
        .args(["--year", "2060"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn validate_dataset() {
    let out = matcycle()
        .arg("validate")
        .arg(root().join("data/desk"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.contains("28 commodities, 45 technologies"), "{s}");
    let out = matcycle()
        .arg("validate")
        .arg(root().join("data/missing"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let a = short_scenario(dir.path(), "A", "fixed_at_base");
    let b = short_scenario(dir.path(), "B", "bounded");
    let res = dir.path().join("results");
    let out = matcycle()
        .arg("run")
        .arg(&a)
        .arg(&b)
        .arg("--out")
        .arg(&res)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(res.join("A/summary.toml").is_file() && res.join("B/summary.toml").is_file());

    let cmp = dir.path().join("cmp");
    let out = matcycle()
        .arg("compare")
        .arg(res.join("A"))
        .arg(res.join("B"))
        .args(["--reference", "A", "--out"])
        .arg(&cmp)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("reference: A"));
    assert!(cmp.join("comparison.csv").is_file());

    let out = matcycle()
        .arg("compare")
        .arg(res.join("A"))
        .args(["--reference", "Z"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn duplicate_scenario_names_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = short_scenario(dir.path(), "A", "bounded");
    let out = matcycle()
        .arg("run")
        .arg(&a)
        .arg(&a)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
