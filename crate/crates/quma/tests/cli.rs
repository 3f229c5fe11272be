//! Black-box tests of the `quma` binary: exit codes, canonicalization, and
//! output determinism.

use std::process::Command;

fn quma() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quma"))
}

fn write_temp(name: &str, content: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("quma-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

#[test]
fn assemble_emits_canonical_form() {
    let input = write_temp(
        "ok.qumis",
        "  Wait 40000\nPulse { q0 } , I\nWait 4\nMPG {q0}, 300\nMD {q0}, r7\n",
    );
    let out = quma().arg("assemble").arg(&input).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "Wait 40000\nPulse {q0}, I\nWait 4\nMPG {q0}, 300\nMD {q0}, r7\n");
}

#[test]
fn assemble_round_trips() {
    let input = write_temp("rt.qumis", "Wait 4\nPulse {q1}, X90, {q2}, Y90\nMD {q1}\n");
    let first = quma().arg("assemble").arg(&input).output().unwrap();
    assert!(first.status.success());
    let canonical = write_temp("rt2.qumis", &String::from_utf8(first.stdout.clone()).unwrap());
    let second = quma().arg("assemble").arg(&canonical).output().unwrap();
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn assemble_rejects_typo_with_parse_exit_code() {
    let input = write_temp("typo.qumis", "Wait 4\nPlse {q0}, I\n");
    let out = quma().arg("assemble").arg(&input).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn assemble_rejects_empty_file() {
    let input = write_temp("empty.qumis", "");
    let out = quma().arg("assemble").arg(&input).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_an_io_error() {
    let out = quma().arg("assemble").arg("/nonexistent/nope.qumis").output().unwrap();
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn run_reports_budget_exhaustion() {
    let input = write_temp(
        "loop.qumis",
        "mov r1, 0\nLoop:\naddi r1, r1, 1\njump Loop\n",
    );
    let out = quma().arg("run").arg(&input).arg("--max-steps").arg("100").output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn run_writes_measurement_results() {
    let input = write_temp(
        "x180.qumis",
        "Wait 40000\nPulse {q0}, X180\nWait 4\nMPG {q0}, 300\nMD {q0}, r7\n",
    );
    let out = quma().arg("run").arg(&input).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("r7,1"), "stdout: {text}");
    assert!(text.contains("md,40004"), "stdout: {text}");
}

#[test]
fn allxy_is_deterministic_for_a_seed() {
    let args = ["allxy", "--rounds", "16", "--mode", "sample", "--seed", "9"];
    let a = quma().args(args).output().unwrap();
    let b = quma().args(args).output().unwrap();
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("slot,combination,gate1,gate2,average,fidelity,ideal"));
    assert_eq!(text.lines().count(), 43);
}

#[test]
fn waveform_emits_csv() {
    let out = quma().arg("waveform").arg("1").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t_ns,i,q\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn unknown_codeword_is_a_runtime_fault() {
    let out = quma().arg("waveform").arg("200").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}
