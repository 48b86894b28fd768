//! End-to-end tests of the `wstl` binary: the synthetic train/evaluate
//! pipeline, model persistence, sparsification, checks, and the documented
//! exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wstl"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn tempdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wstl-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn synth_train_evaluate_reaches_full_accuracy() {
    let dir = tempdir("pipeline");
    let out = run(
        &dir,
        &[
            "synth",
            "--out",
            "synth.csv",
            "--n",
            "50",
            "--ki",
            "8",
            "--seed",
            "0",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run(
        &dir,
        &[
            "train",
            "--data",
            "synth.csv",
            "--structure",
            "G[0,7](pred)",
            "--ki",
            "8",
            "--epochs",
            "10",
            "--sigma",
            "1",
            "--zeta",
            "1",
            "--seed",
            "0",
            "--out",
            "model.wstl",
            "--history",
            "hist.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run(
        &dir,
        &[
            "evaluate",
            "--model",
            "model.wstl",
            "--data",
            "synth.csv",
            "--ki",
            "8",
            "--sigma",
            "1",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("accuracy     1.0000"),
        "{}",
        stdout(&out)
    );

    let hist = std::fs::read_to_string(dir.join("hist.csv")).unwrap();
    assert!(hist.starts_with("epoch,loss,train_accuracy"));
    assert_eq!(hist.lines().count(), 11);

    // Deterministic evaluation: identical bytes on a second run.
    let again = run(
        &dir,
        &[
            "evaluate",
            "--model",
            "model.wstl",
            "--data",
            "synth.csv",
            "--ki",
            "8",
            "--sigma",
            "1",
        ],
    );
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn evaluate_supports_json_and_horizon_guard() {
    let dir = tempdir("json");
    run(
        &dir,
        &[
            "synth", "--out", "s.csv", "--n", "10", "--ki", "6", "--seed", "1",
        ],
    );
    let out = run(
        &dir,
        &[
            "train",
            "--data",
            "s.csv",
            "--structure",
            "G[0,5](pred)",
            "--ki",
            "6",
            "--epochs",
            "5",
            "--sigma",
            "1",
            "--zeta",
            "1",
            "--seed",
            "1",
            "--out",
            "m.wstl",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(
        &dir,
        &[
            "evaluate", "--model", "m.wstl", "--data", "s.csv", "--ki", "6", "--json",
        ],
    );
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("{\"tp\":"));

    // Window shorter than the model horizon is a usage error.
    let out = run(
        &dir,
        &[
            "evaluate", "--model", "m.wstl", "--data", "s.csv", "--ki", "3",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("ERROR:usage:"), "{}", stderr(&out));
}

#[test]
fn robustness_prints_single_value_in_both_semantics() {
    let dir = tempdir("rob");
    std::fs::write(dir.join("m.wstl"), "G[0,1]{1,1}((1*x1 <= 0))\n").unwrap();
    std::fs::write(dir.join("sig.csv"), "x1\n-2\n-4\n").unwrap();
    let weighted = run(
        &dir,
        &["robustness", "--model", "m.wstl", "--signal", "sig.csv"],
    );
    assert!(weighted.status.success(), "{}", stderr(&weighted));
    let w: f64 = stdout(&weighted).trim().parse().unwrap();
    let classical = run(
        &dir,
        &[
            "robustness",
            "--model",
            "m.wstl",
            "--signal",
            "sig.csv",
            "--classical",
        ],
    );
    let c: f64 = stdout(&classical).trim().parse().unwrap();
    assert_eq!(c, 2.0);
    assert!(w > 2.0 && w < 4.0, "weighted {w} between min and max");
}

#[test]
fn sparsify_writes_model_and_report() {
    let dir = tempdir("sparsify");
    std::fs::write(dir.join("m.wstl"), "G[0,3]{0.1,0.4,0.2,0.3}((1*x1 <= 0))\n").unwrap();
    let out = run(
        &dir,
        &[
            "sparsify",
            "--model",
            "m.wstl",
            "--top-sbar",
            "2",
            "--out",
            "p.wstl",
            "--report",
            "r.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let pruned = std::fs::read_to_string(dir.join("p.wstl")).unwrap();
    assert!(pruned.contains("0.00000"), "{pruned}");
    let report = std::fs::read_to_string(dir.join("r.csv")).unwrap();
    assert!(report.starts_with("operator_path,index,pre_weight,post_weight"));
    assert_eq!(report.lines().count(), 5);

    // The pruned model parses back (sparsified zeros are legal).
    let out = run(&dir, &["parse", "--formula", "p.wstl"]);
    assert!(out.status.success(), "{}", stderr(&out));

    // Fully pruning an operator is a model error.
    let out = run(
        &dir,
        &[
            "sparsify", "--model", "m.wstl", "--tau", "0.9", "--out", "q.wstl",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("ERROR:model:"), "{}", stderr(&out));
}

#[test]
fn parse_validates_and_prints_canonical_form() {
    let dir = tempdir("parse");
    std::fs::write(
        dir.join("ok.wstl"),
        "# comment\nG[0,3]{1,1,1,1}((1*x1 <= 5))\n",
    )
    .unwrap();
    let out = run(&dir, &["parse", "--formula", "ok.wstl"]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out).trim(),
        "G[0,3]{1.00000,1.00000,1.00000,1.00000}((1.00000*x1 <= 5.00000))"
    );

    std::fs::write(dir.join("bad.wstl"), "G[0,3]{1,1,1}((1*x1 <= 5))\n").unwrap();
    let out = run(&dir, &["parse", "--formula", "bad.wstl"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("ERROR:usage:"), "{err}");
    assert!(
        err.contains("weight length 3 != interval length 4"),
        "{err}"
    );
    assert!(err.contains("parse error at"), "{err}");
}

#[test]
fn check_subcommand_reports_pass_and_fail_exit_codes() {
    let dir = tempdir("check");
    let out = run(
        &dir,
        &["check", "--grad", "--trials", "20", "--tol", "1e-4"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("gradient check: PASS"));

    let out = run(&dir, &["check", "--properties", "--instances", "150"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("monotonicity: PASS"), "{text}");
    assert!(text.contains("DeMorgan duality: PASS"), "{text}");

    // An impossible tolerance must fail with exit code 3.
    let out = run(
        &dir,
        &["check", "--grad", "--trials", "10", "--tol", "1e-18"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("ERROR:check:"), "{}", stderr(&out));

    // Asking for nothing is a usage error.
    let out = run(&dir, &["check"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_use_exit_code_two() {
    let dir = tempdir("dataerr");
    std::fs::write(dir.join("m.wstl"), "(1*x1 <= 0)\n").unwrap();
    let out = run(
        &dir,
        &[
            "evaluate",
            "--model",
            "m.wstl",
            "--data",
            "missing.csv",
            "--ki",
            "4",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("ERROR:data:"), "{}", stderr(&out));

    // Unknown flags are usage errors with exit code 1.
    let out = run(&dir, &["evaluate", "--nonsense"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("ERROR:usage:"), "{}", stderr(&out));
}

#[test]
fn data_dir_env_var_resolves_relative_paths() {
    let dir = tempdir("envdir");
    let data_dir = dir.join("store");
    std::fs::create_dir_all(&data_dir).unwrap();
    run(
        &dir,
        &[
            "synth",
            "--out",
            data_dir.join("s.csv").to_str().unwrap(),
            "--n",
            "10",
            "--ki",
            "4",
            "--seed",
            "3",
        ],
    );
    let out = bin()
        .current_dir(&dir)
        .env("WSTL_DATA_DIR", &data_dir)
        .args([
            "train",
            "--data",
            "s.csv",
            "--structure",
            "G[0,3](pred)",
            "--ki",
            "4",
            "--epochs",
            "3",
            "--sigma",
            "1",
            "--zeta",
            "1",
            "--seed",
            "0",
            "--out",
            "m.wstl",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn structure_argument_accepts_files_and_templates() {
    let dir = tempdir("structure");
    run(
        &dir,
        &[
            "synth", "--out", "s.csv", "--n", "10", "--ki", "4", "--seed", "7",
        ],
    );
    // Template with explicit weights and nesting.
    let out = run(
        &dir,
        &[
            "train",
            "--data",
            "s.csv",
            "--structure",
            "(G[0,3](pred)) & (pred)",
            "--ki",
            "4",
            "--epochs",
            "3",
            "--sigma",
            "1",
            "--zeta",
            "1",
            "--seed",
            "0",
            "--out",
            "m1.wstl",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    // A previously trained model file as the structure.
    let out = run(
        &dir,
        &[
            "train",
            "--data",
            "s.csv",
            "--structure",
            "m1.wstl",
            "--ki",
            "4",
            "--epochs",
            "3",
            "--sigma",
            "1",
            "--zeta",
            "1",
            "--seed",
            "1",
            "--out",
            "m2.wstl",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run(
        &dir,
        &[
            "train",
            "--data",
            "s.csv",
            "--structure",
            "G[0,",
            "--ki",
            "4",
            "--epochs",
            "3",
            "--sigma",
            "1",
            "--zeta",
            "1",
            "--seed",
            "0",
            "--out",
            "m3.wstl",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("structure template"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn gate_sparsification_runs_through_the_cli() {
    let dir = tempdir("gates");
    run(
        &dir,
        &[
            "synth", "--out", "s.csv", "--n", "30", "--ki", "6", "--seed", "2",
        ],
    );
    run(
        &dir,
        &[
            "train",
            "--data",
            "s.csv",
            "--structure",
            "G[0,5](pred)",
            "--ki",
            "6",
            "--epochs",
            "8",
            "--sigma",
            "1",
            "--zeta",
            "1",
            "--seed",
            "2",
            "--out",
            "m.wstl",
        ],
    );
    let out = run(
        &dir,
        &[
            "sparsify",
            "--model",
            "m.wstl",
            "--gates",
            "--lambda1",
            "0.05",
            "--lambda2",
            "0.3",
            "--data",
            "s.csv",
            "--ki",
            "6",
            "--epochs",
            "10",
            "--seed",
            "2",
            "--out",
            "g.wstl",
            "--report",
            "gates.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("gate sparsification kept"),
        "{}",
        stdout(&out)
    );
    let report = std::fs::read_to_string(dir.join("gates.csv")).unwrap();
    assert!(report.starts_with("gate,probability,open"));
    let out = run(&dir, &["parse", "--formula", "g.wstl"]);
    assert!(out.status.success(), "{}", stderr(&out));
}
