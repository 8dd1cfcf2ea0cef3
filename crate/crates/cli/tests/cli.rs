use std::process::{Command, Output};

use supercong_core::verifier::SweepReport;

fn run(args: &[&str]) -> (Output, tempfile::TempDir) {
    let cache = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_supercong"))
        .args(args)
        .env("SUPERCONG_CACHE", cache.path())
        .output()
        .unwrap();
    (out, cache)
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn eval_brute_force() {
    let (out, _c) = run(&[
        "eval", "R", "--n", "3", "--m", "1", "--p", "7", "--r", "1", "--method", "brute",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "1 (mod 7)\n");
}

#[test]
fn eval_methods_agree() {
    let args = ["eval", "S", "--n", "4", "--m", "2", "--p", "5", "--r", "2"];
    let (conv, _c1) = run(&args);
    let mut brute_args = args.to_vec();
    brute_args.extend(["--method", "brute"]);
    let (brute, _c2) = run(&brute_args);
    assert_eq!(stdout(&conv), stdout(&brute));
}

#[test]
fn formula_text_latex_json() {
    let (out, _c) = run(&["formula", "R", "--n", "8", "--m", "4", "--format", "text"]);
    assert_eq!(stdout(&out), "645120·β3β5\n");
    let (out, _c) = run(&["formula", "R", "--n", "8", "--m", "4", "--format", "json"]);
    assert_eq!(
        stdout(&out),
        "{\"weight\":8,\"terms\":[{\"monomial\":[3,5],\"num\":\"645120\",\"den\":\"1\"}]}\n"
    );
    let (out, _c) = run(&["formula", "R", "--n", "3", "--m", "2", "--format", "latex"]);
    assert!(stdout(&out).contains("\\beta_{3}"));
}

#[test]
fn verify_main_small_grid_exits_zero() {
    let (out, _c) = run(&[
        "verify", "main", "--n-max", "3", "--m-max", "1", "--p-min", "5", "--p-max", "20", "--r", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("fail=0"));
}

#[test]
fn json_report_round_trips() {
    let (out, _c) = run(&[
        "--json", "verify", "main", "--n-max", "5", "--m-max", "3", "--p-min", "5", "--p-max", "30",
    ]);
    let text = stdout(&out);
    let report = SweepReport::from_json(&text).unwrap();
    assert_eq!(report.to_json(), text);
}

#[test]
fn thread_count_does_not_change_output() {
    let base = ["--json", "verify", "lemma", "--name", "pgap", "--p-max", "20"];
    let (one, _c1) = run(&[&base[..], &["--threads", "1"]].concat());
    let (eight, _c2) = run(&[&base[..], &["--threads", "8"]].concat());
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(stdout(&one), stdout(&eight));
}

#[test]
fn verify_lemma_with_overrides() {
    let (out, _c) = run(&[
        "verify",
        "lemma",
        "--name",
        "msum",
        "--kappa-max",
        "3",
        "--g-max",
        "2",
        "--n-max",
        "5",
        "--p-min",
        "7",
        "--p-max",
        "14",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("lemma.msum"));
}

#[test]
fn usage_errors_exit_two_without_output() {
    let (out, _c) = run(&[
        "verify", "main", "--n-max", "3", "--m-max", "1", "--p-max", "20", "--bogus",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let (out, _c) = run(&["verify", "lemma", "--name", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let (out, _c) = run(&["eval", "R", "--n", "3", "--m", "7", "--p", "7"]);
    assert_eq!(out.status.code(), Some(2));
    let (out, _c) = run(&["eval", "Q", "--n", "3", "--m", "1", "--p", "7"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bernoulli_uses_cache_dir() {
    let (out, cache) = run(&["--json", "bernoulli", "--p", "11"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(cache.path().join("bernoulli_11.json").exists());
    let explicit = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_supercong"))
        .args(["bernoulli", "--p", "13", "--cache-dir"])
        .arg(explicit.path())
        .output()
        .unwrap();
    assert!(stdout(&out).starts_with("B_0 ≡ 1 (mod 13)"));
    assert!(explicit.path().join("bernoulli_13.json").exists());
}

#[test]
fn interp_and_probe() {
    let (out, _c) = run(&["interp", "--n", "8"]);
    assert_eq!(stdout(&out), "β3β5: 336·m^5 + 5040·m^3 - 5376·m\n");
    let (out, _c) = run(&["interp", "--n", "7", "--check-conjecture"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("fail=0"));
}
