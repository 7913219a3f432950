use std::path::Path;
use std::process::{Command, Output};

const RWRE: &str = env!("CARGO_BIN_EXE_rwre");

const SMALL: &str = "env = \"boolean\"\nseed = 3\n[kernel]\nkappa = 0.1\n[experiment]\nn = 50\n";

fn run(args: &[&str]) -> Output {
    Command::new(RWRE).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_kappa_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "env = \"boolean\"\n");
    let o = run(&[
        "blocks",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kernel.kappa"), "{}", stderr(&o));
}

#[test]
fn bad_keys_and_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let o = run(&[
        "blocks",
        "--config",
        &cfg,
        "--out",
        out,
        "--set",
        "experiment.bogus=1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.bogus"));
    let o = run(&[
        "blocks",
        "--config",
        &cfg,
        "--out",
        out,
        "--set",
        "kernel.kappa=0.9",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "blocks",
        "--config",
        &cfg,
        "--out",
        out,
        "--set",
        "renewal.mu=\"geometric:0.5\"",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("renewal.mu"));
}

#[test]
fn usage_errors_exit_4() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(4));
    assert_eq!(run(&["blocks"]).status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "blocks",
        "--config",
        dir.path().join("absent.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn help_documents_csv_schemas() {
    for (cmd, schema) in [
        ("blocks", "index,seed,t1"),
        ("simulate", "kind,run,t"),
        ("renorm", "realization,m_j,m_j_strict"),
        ("mj", "realization,m_j,brute"),
        ("akh", "k,L,H,estimate,ci_lo,ci_hi,successes,n"),
        ("decouple", "case,r,h,s"),
        ("rmp-test", "case,past_field"),
        ("qk", "k,L,q,ci_lo,ci_hi,successes,n"),
        ("truncation", "s,estimate,ci_lo,ci_hi,count,n,exact"),
        ("stationarity", "value,count,frequency,stationary"),
    ] {
        let o = run(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&o.stdout).contains(schema), "{cmd}");
    }
}

#[test]
fn failed_check_exits_3_only_with_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // Too few samples to see any mismatch: the fitted slope is flat.
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let o = run(&["truncation", "--config", &cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&["truncation", "--config", &cfg, "--out", out, "--check"]);
    assert_eq!(o.status.code(), Some(3));
    let summary = std::fs::read_to_string(dir.path().join("truncation.summary.json")).unwrap();
    assert!(summary.contains("\"pass\": false"));
}

#[test]
fn resource_error_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    // 3^40 paths exceed the enumeration budget.
    let o = run(&[
        "mj",
        "--config",
        &cfg,
        "--out",
        out,
        "--brute-force",
        "--set",
        "experiment.J=10",
        "--set",
        "experiment.n=1",
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn acceptance_failure_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    // With dense balls P(eta_0 = 1) is far below the floor, so conditioning
    // by rejection gives up.
    let o = run(&[
        "blocks",
        "--config",
        &cfg,
        "--out",
        out,
        "--set",
        "boolean.lambda=20",
        "--set",
        "experiment.n=1",
    ]);
    assert_eq!(o.status.code(), Some(6), "{}", stderr(&o));
}

#[test]
fn keys_lists_every_section() {
    let o = run(&["keys"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for k in ["kernel.kappa", "boolean.beta", "renewal.mu", "experiment.n"] {
        assert!(text.contains(k));
    }
}

#[test]
fn suite_runs_each_config_into_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    std::fs::create_dir(&configs).unwrap();
    write_config(
        &configs,
        "a.toml",
        &format!("command = \"mj\"\n{SMALL}J = 2\n"),
    );
    write_config(
        &configs,
        "b.toml",
        &format!("command = \"akh\"\n{SMALL}k_max = 2\n"),
    );
    let out = dir.path().join("out");
    let o = run(&[
        "suite",
        configs.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--check",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("a/mj.csv").exists());
    assert!(out.join("b/akh.summary.json").exists());
    // mj in a suite always runs the enumeration cross-check.
    let csv = std::fs::read_to_string(out.join("a/mj.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(!row.ends_with(','), "{row}");

    write_config(&configs, "c.toml", SMALL);
    let o = run(&[
        "suite",
        configs.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plots_are_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let o = run(&[
        "qk",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--plots",
        "--set",
        "experiment.k_max=3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = std::fs::read_to_string(out.join("qk.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    let o = run(&[
        "qk",
        "--config",
        &cfg,
        "--out",
        dir.path().join("p").to_str().unwrap(),
        "--set",
        "experiment.k_max=3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!dir.path().join("p/qk.svg").exists());
}
