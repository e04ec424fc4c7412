mod common;

use common::{root, short_scenario};
use matcycle::scenario::{compare, load_scenario, load_sweep, run_scenario, ScenarioSummary};
use matcycle::Error;

#[test]
fn shipped_files_parse() {
    for f in ["ref95.toml", "wo_rec.toml", "recx.toml"] {
        let s = load_scenario(root().join("scenarios").join(f)).unwrap();
        s.check().unwrap();
    }
    let sw = load_sweep(root().join("scenarios/steel_scrap_sweep.toml")).unwrap();
    assert_eq!(sw.grid.len(), 10);
    assert_eq!(sw.parameter, "scrap_prices.steel");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let f = short_scenario(dir.path(), "x", "bounded");
    let text = std::fs::read_to_string(&f)
        .unwrap()
        .replace("[tsa]", "[tsa]\nperiodz = 3");
    std::fs::write(&f, text).unwrap();
    let e = load_scenario(&f).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
}

#[test]
fn written_summary_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(&load_scenario(short_scenario(dir.path(), "bounded", "bounded")).unwrap()).unwrap();
    let out = dir.path().join("out");
    r.write(&out).unwrap();
    for f in [
        "capacities.csv",
        "flows.csv",
        "emissions.csv",
        "recycling_rates.csv",
        "duals.csv",
        "report.txt",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let back = ScenarioSummary::load(&out.join("summary.toml")).unwrap();
    assert_eq!(back, r.summary());
    assert_eq!(back.steps, vec![2020, 2050]);
    for y in &back.years {
        assert!(y.emissions <= y.cap * (1.0 + 1e-9));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = load_scenario(short_scenario(dir.path(), "det", "fixed_at_base")).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_scenario(&spec).unwrap().write(&a).unwrap();
    run_scenario(&spec).unwrap().write(&b).unwrap();
    for e in std::fs::read_dir(&a).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn comparison_against_reference() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name, mode| {
        run_scenario(&load_scenario(short_scenario(dir.path(), name, mode)).unwrap())
            .unwrap()
            .summary()
    };
    let (fixed, none, free) = (
        run("fixed", "fixed_at_base"),
        run("none", "forbidden"),
        run("free", "bounded"),
    );
    let rep = compare(&[fixed.clone(), none.clone(), free.clone()], "fixed").unwrap();
    assert_eq!(rep.rows.len(), 3);
    assert!(rep.rows[0].reference);
    assert_eq!(rep.rows[0].cost_delta, 0.0);
    assert!(rep.rows[1].cost_delta >= -1e-6 * fixed.cumulative_cost);
    assert!(rep.rows[2].cost_delta <= 1e-6 * fixed.cumulative_cost);
    assert!(rep.rows[1].recycling_rates.values().all(|&r| r == 0.0));
    assert!(rep.to_text().contains("reference: fixed"));

    let e = compare(&[fixed.clone(), none.clone()], "free").unwrap_err();
    assert!(matches!(e, Error::Lookup { .. }), "{e}");
    let e = compare(&[fixed.clone(), fixed.clone()], "fixed").unwrap_err();
    assert!(matches!(e, Error::Comparison(_)), "{e}");
    let mut short = none;
    short.steps.pop();
    assert!(matches!(compare(&[fixed, short], "fixed"), Err(Error::Comparison(_))));
}

#[test]
fn infeasible_scenario_names_year_and_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let f = short_scenario(dir.path(), "tight", "forbidden");
    let text = std::fs::read_to_string(&f)
        .unwrap()
        .replace("2050 = 0.95", "2050 = 1.0");
    std::fs::write(&f, text).unwrap();
    match run_scenario(&load_scenario(&f).unwrap()) {
        Err(e) => {
            assert_eq!(e.exit_code(), 1, "{e}");
            let msg = e.to_string();
            assert!(msg.contains("tight") && msg.contains("2050"), "{msg}");
        }
        Ok(r) => panic!("zero cap solved with emissions {}", r.years[1].emissions),
    }
}
