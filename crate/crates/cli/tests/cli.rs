use std::process::{Command, Output};

fn cbdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbdc"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn vectors_match_shipped_file() {
    let o = cbdc(&["vectors"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), include_str!("../../core/vectors/golden.txt"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cbdc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cbdc(&["run", "no-such-scenario"]).status.code(), Some(2));
    assert_eq!(
        cbdc(&["verify", "/nonexistent", "--trust", "/nonexistent"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cbdc(&["run", "act1-act2", "--config", "/nonexistent"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bad_scenario_line_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scn");
    std::fs::write(&path, "relay root\nat 1 launch rockets\n").unwrap();
    let o = cbdc(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.scn");
    std::fs::write(
        &path,
        "relay root\nbank b1 reserves=100\naccount b1 a 10\nwallet a bank=b1 account=a\n\
         at 1 withdraw a 10\nat 2 expect in-flight 20\n",
    )
    .unwrap();
    let o = cbdc(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("result: FAIL"));
}

#[test]
fn keys_are_seeded() {
    let a = stdout(&cbdc(&["keys", "--seed", "3"]));
    let b = stdout(&cbdc(&["keys", "--seed", "3"]));
    let c = stdout(&cbdc(&["keys", "--seed", "4"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    for k in [
        "plate.public",
        "plate.secret",
        "actor.public",
        "actor.secret",
    ] {
        assert!(a.lines().any(|l| l.starts_with(k)), "{a}");
    }
}

#[test]
fn run_writes_results_and_exports_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cbdc(&[
        "run",
        "chained",
        "--seed",
        "2",
        "--flush-cycles",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    for f in [
        "metrics.txt",
        "events.log",
        "summary.txt",
        "monitoring.ledger",
        "plates.txt",
        "trust_roots.txt",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.lines().all(|l| l.starts_with("cycle=")));
    let audit = cbdc(&[
        "audit",
        out.join("monitoring.ledger").to_str().unwrap(),
        "--plates",
        out.join("plates.txt").to_str().unwrap(),
    ]);
    assert!(audit.status.success(), "{}", stdout(&audit));
}
