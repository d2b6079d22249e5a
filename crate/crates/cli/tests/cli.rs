use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_aclab");

fn aclab(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn example() -> String {
    String::from_utf8(aclab(&["example-config"], Path::new(".")).stdout).unwrap()
}

fn edit(base: &str, edits: &[(&str, &str)]) -> String {
    let mut s = base.to_string();
    for (from, to) in edits {
        assert!(s.contains(from), "{from}");
        s = s.replacen(from, to, 1);
    }
    s
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect()
}

/// A small 2D problem that exercises every diagnostic.
fn square_config() -> String {
    edit(
        &example(),
        &[
            ("shape = \"interval\"", "shape = \"rectangle\""),
            ("params = [1.0]", "params = [1.0, 1.0]"),
            ("cells = [2048]", "cells = [64]"),
            ("stop_tol = 1e-6", "stop_tol = 1e-3"),
            ("epsilons = [0.1, 0.05, 0.025]", "epsilons = [0.1, 0.07]"),
        ],
    )
}

#[test]
fn ascending_epsilons_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(
        &example(),
        &[("epsilons = [0.1, 0.05, 0.025]", "epsilons = [0.025, 0.05, 0.1]")],
    );
    let line = text.lines().position(|l| l.starts_with("epsilons")).unwrap() + 1;
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = aclab(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("sweep.epsilons must descend") && err.contains(&format!("line {line}")),
        "{err}"
    );
}

#[test]
fn missing_domain_block_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[sweep]\nepsilons = [0.1]\n");
    let o = aclab(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing [domain] block"), "{}", stderr(&o));
}

#[test]
fn one_dimensional_default_sweep_and_full_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &example());
    let cfg = cfg.to_str().unwrap();
    let o = aclab(&["solve", "--config", cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let summary = csv_rows(&out.join("summary.csv"));
    assert_eq!(summary.len(), 3);
    for row in &summary {
        let residual: f64 = row[3].parse().unwrap();
        assert!(residual <= 1e-10, "{row:?}");
        assert_eq!(row[6], "true");
    }
    for k in 0..3 {
        assert!(out.join(format!("solution_{k:02}.txt")).exists());
    }

    let o = aclab(&["diagnose", "--config", cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for t in [
        "density",
        "equipartition",
        "ratio",
        "monotonicity",
        "pohozaev",
        "boundary_energy",
        "varifold",
        "integrality",
        "fitted_constants",
        "checks",
    ] {
        let rows = csv_rows(&out.join(format!("{t}.csv")));
        assert!(!rows.is_empty(), "{t}.csv is empty");
    }
    for k in 0..3 {
        assert!(out.join(format!("atoms_{k:02}.csv")).exists());
    }
    let checks = csv_rows(&out.join("checks.csv"));
    for prefix in [
        "residual eps=",
        "xi sup bound eps=",
        "C0 constant eps=",
        "varifold mass eps=",
        "interior monotonicity violations eps=",
        "integrality deviation eps=",
    ] {
        assert_eq!(
            checks.iter().filter(|r| r[0].starts_with(prefix)).count(),
            3,
            "{prefix}"
        );
    }
    assert!(checks.iter().any(|r| r[0].starts_with("equipartition ratio")));
    assert!(checks.iter().any(|r| r[0].starts_with("xi L1 strictly decreasing")));
    // Every row carries its measured value and threshold.
    for r in &checks {
        assert!(!r[1].is_empty() && !r[2].is_empty(), "{r:?}");
    }
    let pohozaev = csv_rows(&out.join("pohozaev.csv"));
    assert!(pohozaev.iter().any(|r| r[1] == "radial") && pohozaev.iter().any(|r| r[1] == "boundary-normal"));
}

#[test]
fn wrong_node_count_is_a_domain_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(
        &example(),
        &[
            ("cells = [2048]", "cells = [256]"),
            ("epsilons = [0.1, 0.05, 0.025]", "epsilons = [0.1]"),
        ],
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = aclab(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let sol = dir.path().join("out/solution_00.txt");
    let body = std::fs::read_to_string(&sol).unwrap();
    let truncated: Vec<&str> = body.lines().take(body.lines().count() - 5).collect();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, truncated.join("\n") + "\n").unwrap();
    let o = aclab(
        &["diagnose", "--config", cfg.to_str().unwrap(), bad.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("252 nodes, domain has 257"), "{}", stderr(&o));
}

#[test]
fn empty_diagnostics_block_writes_no_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(
        &example(),
        &[
            ("cells = [2048]", "cells = [256]"),
            ("epsilons = [0.1, 0.05, 0.025]", "epsilons = [0.1]"),
            (
                "checks = [\"density\", \"equipartition\", \"ratio\", \"pohozaev\", \"boundary-energy\", \"varifold\"]",
                "checks = []",
            ),
        ],
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let cfg = cfg.to_str().unwrap();
    assert!(aclab(&["solve", "--config", cfg], dir.path()).status.success());
    let o = aclab(&["diagnose", "--config", cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 tables written"));
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["solution_00.txt", "summary.csv"]);
}

#[test]
fn solver_errors_are_reported_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(
        &square_config(),
        &[
            ("max_steps = 20000", "max_steps = 3"),
            ("# newton_basin = 1e-2", "newton_basin = 1e-9"),
        ],
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = aclab(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let summary = csv_rows(&dir.path().join("out/summary.csv"));
    assert_eq!(summary.len(), 2);
    for r in &summary {
        assert!(r[7].contains("Newton basin"), "{r:?}");
    }
}

#[test]
fn a_failing_diagnostic_does_not_suppress_other_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(&square_config(), &[("boundary_cutoff = 0.05", "boundary_cutoff = 5.0")]);
    let cfg = write_config(dir.path(), "c.toml", &text);
    let cfg = cfg.to_str().unwrap();
    assert!(aclab(&["solve", "--config", cfg], dir.path()).status.success());
    let o = aclab(&["diagnose", "--config", cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let errors = csv_rows(&out.join("errors.csv"));
    assert_eq!(errors.iter().filter(|r| r[1] == "pohozaev").count(), 2);
    assert_eq!(csv_rows(&out.join("density.csv")).len(), 2);
    assert_eq!(csv_rows(&out.join("pohozaev.csv")).len(), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = edit(&square_config(), &[("seed = 0", "seed = 7")]);
    let cfg = write_config(dir.path(), "c.toml", &text);
    let cfg = cfg.to_str().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        assert!(aclab(&["solve", "--config", cfg, "--out", run], dir.path())
            .status
            .success());
        let o = aclab(&["diagnose", "--config", cfg, "--out", run], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path().join(run))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert!(outputs[0].len() > 10);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn parallel_cold_sweep_agrees_with_warm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &square_config());
    let cfg = cfg.to_str().unwrap();
    let energy = |out: &str, extra: &[&str]| -> Vec<f64> {
        let mut args = vec!["solve", "--config", cfg, "--out", out];
        args.extend_from_slice(extra);
        assert!(aclab(&args, dir.path()).status.success());
        csv_rows(&dir.path().join(out).join("summary.csv"))
            .iter()
            .map(|r| r[2].parse().unwrap())
            .collect()
    };
    let warm = energy("warm", &[]);
    let cold = energy("cold", &["--parallel-cold"]);
    for (a, b) in warm.iter().zip(&cold) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn tampered_potential_fails_at_the_invariant() {
    let o = aclab(&["check", "--tamper-potential"], Path::new("."));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("first failure: FAIL DoubleWell invariant"), "{err}");
}

#[test]
fn perturbed_heteroclinic_fails_at_the_ode_residual() {
    let o = aclab(&["check", "--fail-fast", "--perturb-heteroclinic"], Path::new("."));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("first failure: FAIL ODE residual"), "{err}");
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(
        out.contains("PASS #1") && out.contains("FAIL #2") && !out.contains("#3"),
        "{out}"
    );
}

#[test]
fn example_config_round_trips() {
    let text = example();
    assert!(aclab_cli::RunConfig::parse(&text).is_ok());
    assert_eq!(text, aclab_cli::EXAMPLE_CONFIG);
}
