//! Exit-code contract and determinism of the command-line front end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_delaymon"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("delaymon-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn validate_accepts_the_match_fixture() {
    let out = run(&["validate", fixture("match.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_reports_missing_transitions() {
    // Drop one transition from the fixture.
    let text = std::fs::read_to_string(fixture("match.json")).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let transitions = value["transitions"].as_array_mut().unwrap();
    transitions.pop();
    let path = tmp("missing.json");
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1 violation(s)"), "{stdout}");
}

#[test]
fn malformed_json_exits_with_syntax_code() {
    let path = tmp("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unravel_produces_the_expected_product() {
    let out_path = tmp("match_u2.json");
    let out = run(&[
        "transform",
        fixture("match.json").to_str().unwrap(),
        "--unravel",
        "2",
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("4 states, 16 transitions"), "{stdout}");
    let check = run(&["validate", out_path.to_str().unwrap()]);
    assert_eq!(code(&check), 0);
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("P@0") && text.contains("state_bases"));
}

#[test]
fn unravel_by_one_is_byte_identical() {
    let out_path = tmp("match_u1.json");
    run(&[
        "transform",
        fixture("match.json").to_str().unwrap(),
        "--unravel",
        "1",
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(&out_path).unwrap(),
        std::fs::read(fixture("match.json")).unwrap()
    );
}

#[test]
fn lift_then_project_roundtrips_byte_identically() {
    let lifted = tmp("match_lifted.json");
    let back = tmp("match_back.json");
    let out = run(&[
        "transform",
        fixture("match.json").to_str().unwrap(),
        "--lift",
        "0,1",
        "-o",
        lifted.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let out = run(&["transform", lifted.to_str().unwrap(), "--project", "-o", back.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&back).unwrap(), std::fs::read(fixture("match.json")).unwrap());
}

#[test]
fn transform_requires_exactly_one_operation() {
    let out = run(&[
        "transform",
        fixture("match.json").to_str().unwrap(),
        "--unravel",
        "2",
        "--project",
        "-o",
        tmp("x.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_prints_exact_payoffs() {
    let out = run(&[
        "simulate",
        fixture("match.json").to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
        "--scheduler",
        "fixed:0",
        "--horizon",
        "10",
    ]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("payoffs: 1/1 exact, 1/1 exact"), "{stdout}");
}

#[test]
fn simulate_with_horizon_zero_is_a_usage_error() {
    let out = run(&[
        "simulate",
        fixture("match.json").to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
        "--horizon",
        "0",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let lifted = tmp("match_d01.json");
    run(&[
        "transform",
        fixture("match.json").to_str().unwrap(),
        "--lift",
        "0,1",
        "-o",
        lifted.to_str().unwrap(),
    ]);
    let trace_a = tmp("trace_a.jsonl");
    let trace_b = tmp("trace_b.jsonl");
    let mut outputs = Vec::new();
    for trace in [&trace_a, &trace_b] {
        let out = run(&[
            "simulate",
            lifted.to_str().unwrap(),
            "--profile",
            fixture("match_profile_aa.json").to_str().unwrap(),
            "--scheduler",
            "seed:42",
            "--horizon",
            "50",
            "--trace",
            trace.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        outputs.push(out.stdout);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(std::fs::read(&trace_a).unwrap(), std::fs::read(&trace_b).unwrap());
    // Trace lines are JSON objects with the documented fields.
    let first_line = std::fs::read_to_string(&trace_a).unwrap().lines().next().unwrap().to_string();
    let record: serde_json::Value = serde_json::from_str(&first_line).unwrap();
    for key in ["t", "state", "base", "actions", "signals", "delivered", "payoffs"] {
        assert!(record.get(key).is_some(), "missing {key} in {record}");
    }
}

#[test]
fn explicit_scheduler_file_is_honoured_and_exhaustion_reported() {
    let lifted = tmp("match_d01b.json");
    run(&[
        "transform",
        fixture("match.json").to_str().unwrap(),
        "--lift",
        "0,1",
        "-o",
        lifted.to_str().unwrap(),
    ]);
    let sched = format!("explicit:{}", fixture("sched_alt.json").to_str().unwrap());
    let ok = run(&[
        "simulate",
        lifted.to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
        "--scheduler",
        &sched,
        "--horizon",
        "10",
    ]);
    assert_eq!(code(&ok), 0);
    // The fixture lists 10 periods; running longer exhausts it.
    let too_long = run(&[
        "simulate",
        lifted.to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
        "--scheduler",
        &sched,
        "--horizon",
        "11",
    ]);
    assert_eq!(code(&too_long), 1);
}

#[test]
fn transfer_succeeds_on_match_and_writes_a_report() {
    let report = tmp("transfer_report.json");
    let out_game = tmp("transfer_game.json");
    let out = run(&[
        "transfer",
        fixture("match.json").to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
        "--delays",
        "0,1",
        "--budget",
        "64",
        "--random-schedulers",
        "3",
        "--horizon",
        "300",
        "--report",
        report.to_str().unwrap(),
        "--out-game",
        out_game.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(value["verdicts"]["assertion_safety"], true);
    assert_eq!(value["modulus"], 2);
    assert_eq!(value["payoffs"][0]["equal"], "Equal");
    // The written delayed game validates.
    let check = run(&["validate", out_game.to_str().unwrap()]);
    assert_eq!(code(&check), 0);
}

#[test]
fn transfer_with_forced_modulus_one_reports_the_short_cycle() {
    let out = run(&[
        "transfer",
        fixture("match.json").to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
        "--delays",
        "0,1",
        "--modulus",
        "1",
    ]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cycle"), "{stderr}");
}

#[test]
fn transfer_with_zero_delays_is_trivially_equal() {
    let out = run(&[
        "transfer",
        fixture("match.json").to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
        "--delays",
        "0",
        "--random-schedulers",
        "2",
        "--horizon",
        "200",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn jobs_flag_does_not_change_output_bytes() {
    let mut outputs = Vec::new();
    for jobs in ["1", "4"] {
        let out = run(&[
            "--jobs",
            jobs,
            "transfer",
            fixture("match.json").to_str().unwrap(),
            "--profile",
            fixture("match_profile_aa.json").to_str().unwrap(),
            "--delays",
            "0,1",
            "--budget",
            "64",
            "--random-schedulers",
            "3",
            "--horizon",
            "200",
        ]);
        assert_eq!(code(&out), 0);
        outputs.push(out.stdout);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn check_exit_codes_match_the_contract() {
    let game = fixture("match.json");
    let aa = run(&[
        "check",
        game.to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&aa), 0, "{}", String::from_utf8_lossy(&aa.stdout));
    let bb = run(&[
        "check",
        game.to_str().unwrap(),
        "--profile",
        fixture("match_profile_bb.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&bb), 0);
    let ab = run(&[
        "check",
        game.to_str().unwrap(),
        "--profile",
        fixture("match_profile_ab.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&ab), 4);
    let stdout = String::from_utf8_lossy(&ab.stdout);
    assert!(stdout.contains("deviation found"), "{stdout}");
}

#[test]
fn check_with_zero_memory_is_a_usage_error() {
    let out = run(&[
        "check",
        fixture("match.json").to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
        "--deviator-memory",
        "0",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn check_with_large_memory_bound_reports_a_partial_search() {
    let out = run(&[
        "check",
        fixture("match.json").to_str().unwrap(),
        "--profile",
        fixture("match_profile_aa.json").to_str().unwrap(),
        "--deviator-memory",
        "3",
    ]);
    assert_eq!(code(&out), 5);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("partial report"), "{stdout}");
}
