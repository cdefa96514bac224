use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use srmon_cli::config::RunConfig;
use srmon_cli::synth::{synthetic_history, SynthParams};

const TOY: &str = r#"
seed = 7
calibration_date = "2012-12-31"
transition_window = 63
horizon = 10
degree_cap = 2
smoothing_window = 5
attribution_order = ["rate", "stock"]

[paths]
portfolio = "portfolio.toml"
market = "market.toml"
history = "history.csv"

[[factors]]
id = "stock"
kind = "stock_level"

[[factors]]
id = "rate"
kind = "rate_level"

[lsmc]
n = 400

[cf]
n = 20
p = 20

[validation]
steps = 4
p_full = 200

[validation.worst]
stock = "lo"
rate = "lo"

[compare]
lsmc_n = 400
cf_n = 20
cf_p = 20
eval_n = 50
j_max = 2

[[shocks]]
id = "ir_down"

[[shocks]]
id = "stock_global"

[solvency.basis]
tier_one_of = "14000.00"
subordinated_debt = "1500.00"
fin_mgmt_fees = "500.00"
itr_nb = "200.00"
scr_op_0 = "400.00"

[solvency.frozen.life]
value = 6500.0
rule = "frozen"

[solvency.frozen.stock_other]
value = 300.0
rule = "frozen"

[solvency.frozen.spread]
value = 900.0
rule = "frozen"

[solvency.frozen.illiquidity]
value = 400.0
rule = "frozen"

[solvency.frozen.property]
value = 0.0
rule = "frozen"

[solvency.frozen.currency]
value = 0.0
rule = "frozen"

[solvency.frozen.concentration]
value = 0.0
rule = "frozen"

[solvency.frozen.default]
value = 600.0
rule = "frozen"

[solvency.frozen.health]
value = 0.0
rule = "frozen"

[solvency.frozen.non_life]
value = 0.0
rule = "frozen"
"#;

fn desk() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../desk")
}

/// Toy workspace: desk portfolio and market, a short synthetic history.
fn toy_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(desk().join("portfolio.toml"), dir.path().join("portfolio.toml")).unwrap();
    fs::copy(desk().join("market.toml"), dir.path().join("market.toml")).unwrap();
    fs::write(dir.path().join("config.toml"), TOY).unwrap();
    let cfg = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    let d = |s: &str| s.parse::<NaiveDate>().unwrap();
    let h = synthetic_history(
        &cfg.load_market().unwrap(),
        &cfg.factor_set().unwrap(),
        cfg.calibration_date,
        d("2011-01-03"),
        d("2013-12-31"),
        &SynthParams::default(),
        3,
    )
    .unwrap();
    h.write_csv(fs::File::create(dir.path().join("history.csv")).unwrap()).unwrap();
    dir
}

fn srmon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srmon"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn calibrate_is_byte_identical_on_rerun() {
    let dir = toy_dir();
    let stdout = ok(&srmon(dir.path(), &["--config", "config.toml", "--out", "a", "calibrate"]));
    assert!(stdout.contains("Central NAV"));
    ok(&srmon(dir.path(), &["--config", "config.toml", "--out", "b", "calibrate"]));
    for f in ["bundle.json", "calibration_report.json", "validation.txt", "validation.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
    let table = fs::read_to_string(dir.path().join("a/validation.txt")).unwrap();
    assert!(table.starts_with("# config_hash: "));
    for label in ["Central NAV", "IR down shocked NAV", "Global stock shocked NAV"] {
        assert_eq!(table.matches(label).count(), 2, "{label}");
    }

    ok(&srmon(dir.path(), &["--config", "config.toml", "--out", "c", "--seed", "8", "calibrate"]));
    let a = fs::read(dir.path().join("a/bundle.json")).unwrap();
    let c = fs::read(dir.path().join("c/bundle.json")).unwrap();
    assert!(a != c, "seed override has no effect");
}

#[test]
fn missing_portfolio_names_the_path() {
    let dir = toy_dir();
    fs::remove_file(dir.path().join("portfolio.toml")).unwrap();
    let out = srmon(dir.path(), &["--config", "config.toml", "calibrate"]);
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("portfolio.toml"), "{err}");
}

#[test]
fn malformed_config_exits_with_the_config_code() {
    let dir = toy_dir();
    fs::write(dir.path().join("bad.toml"), "seed = \"x\"\n").unwrap();
    let out = srmon(dir.path(), &["--config", "bad.toml", "calibrate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = srmon(dir.path(), &["calibrate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn monitor_whatif_validate_and_compare() {
    let dir = toy_dir();
    let cfg = ["--config", "config.toml", "--out", "out"];
    ok(&srmon(dir.path(), &[&cfg[..], &["calibrate"]].concat()));
    let bundle = ["--bundle", "out/bundle.json"];

    let summary = ok(&srmon(dir.path(), &[&cfg[..], &bundle[..], &["monitor"]].concat()));
    assert!(summary.contains("records"));
    let records = fs::read_to_string(dir.path().join("out/records.jsonl")).unwrap();
    assert!(records.lines().count() >= 250);
    let csv = fs::read_to_string(dir.path().join("out/smoothed_sr.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), records.lines().count());
    assert!(rows.iter().all(|r| r.starts_with("2013-") && r.split(',').count() == 4));
    let first: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(first[1], first[2], "first smoothed value is the first SR");

    let w = ok(&srmon(dir.path(), &[&bundle[..], &["whatif", "--set", "stock=-0.1"]].concat()));
    let v: serde_json::Value = serde_json::from_str(&w).unwrap();
    assert!(v["bundle_version"].as_str().unwrap().len() == 64);
    assert!(v["evaluation"]["snapshot"]["sr"].is_number());
    let bad = srmon(dir.path(), &[&bundle[..], &["whatif", "--set", "vol=0.1"]].concat());
    assert!(!bad.status.success());

    let checked = ok(&srmon(dir.path(), &[&cfg[..], &bundle[..], &["validate"]].concat()));
    assert_eq!(checked.lines().count(), 3);

    let cmp = ok(&srmon(dir.path(), &[&cfg[..], &["compare"]].concat()));
    assert!(cmp.contains("J = 1") && cmp.contains("J = 2"));
    assert!(dir.path().join("out/compare_report.json").exists());
}
