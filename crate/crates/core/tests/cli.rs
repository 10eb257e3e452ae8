use std::path::Path;
use std::process::{Command, Output};

use ratelab::eval::{run_experiment, EvaluationReport, ExperimentConfig};

fn ratelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratelab"))
        .args(args)
        .env_remove("RATELAB_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn missing_scenario_file_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = ratelab(&["generate", "--config", &s(&missing), "--out", &s(tmp.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.toml"), "{}", stderr(&o));
}

#[test]
fn report_on_missing_file_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ratelab(&["report", "--in", &s(&tmp.path().join("report.json"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("report.json"));
}

#[test]
fn insufficient_shaping_rate_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    assert!(ratelab(&["generate", "-q", "--out", &s(&gen)]).status.success());
    let cfg = tmp.path().join("shape.toml");
    std::fs::write(&cfg, "[[defense]]\nkind = \"shape_constant\"\ntarget_rate = 10.0\ncell_size = 10\n").unwrap();
    let o = ratelab(&[
        "defend",
        "--in",
        &s(&gen.join("trace.txt")),
        "--config",
        &s(&cfg),
        "--out",
        &s(&tmp.path().join("d")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("cannot drain"), "{}", stderr(&o));
}

#[test]
fn wifi_attack_has_no_dns() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    assert!(ratelab(&["generate", "-q", "--out", &s(&gen)]).status.success());
    let o = ratelab(&[
        "attack",
        "--in",
        &s(&gen.join("trace.txt")),
        "--view",
        "wifi",
        "--out",
        &s(&tmp.path().join("a")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("dns none"));
    assert!(!out.contains("dns sleep_monitor"));
    assert!(tmp.path().join("a/attack.json").exists());
}

#[test]
fn evaluate_writes_the_same_report_as_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("eval.toml");
    std::fs::write(&cfg, "[[defense]]\nkind = \"conceal_dns\"\n").unwrap();
    let out = tmp.path().join("out");
    let o = ratelab(&["evaluate", "-q", "--config", &s(&cfg), "--out", &s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "features.csv", "costs.csv", "confusion.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let written: EvaluationReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let lib = run_experiment(&ExperimentConfig::load(&cfg).unwrap()).unwrap();
    assert_eq!(written.identification, lib.identification);
    assert_eq!(written.dns_identification.fraction_identified, 0.0);
    assert_eq!(written.costs, lib.costs);

    let o = ratelab(&["report", "--in", &s(&out)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("conceal_dns"));
}

#[test]
fn unknown_defense_kind_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[[defense]]\nkind = \"teleport\"\n").unwrap();
    let o = ratelab(&["evaluate", "--config", &s(&cfg), "--out", &s(tmp.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("teleport"), "{}", stderr(&o));
}
