//! End-to-end checks of the malscore binary: subcommands, outputs, and the
//! documented exit codes (0 ok, 1 usage, 2 io).

use std::path::Path;
use std::process::{Command, Output};

fn malscore(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_malscore"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = malscore(&["no-such-command"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = malscore(&["scan"], dir.path()); // missing required paths
    assert_eq!(out.status.code(), Some(1));
    let out = malscore(
        &["scan", "x", "--set", "not_a_key=1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn io_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = malscore(&["scan", "does-not-exist.bin"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = malscore(&["evaluate", "no-such-dir"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = malscore(&["keyscan", "missing.dmp"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = malscore(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("gen-corpus"));
}

#[test]
fn gen_evaluate_scan_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"plaintext_benign":3,"structured_benign":3,"compressed_like":2,"encrypted_like":3,"ransom_notes":2}"#,
    )
    .unwrap();
    let out = malscore(
        &["gen-corpus", "--spec", "spec.json", "--seed", "9", "--out", "corpus"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(stdout(&out).contains("wrote 13 files"));

    let out = malscore(
        &["evaluate", "corpus", "--out", "report", "--seed", "9"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("samples evaluated: 13"));
    assert!(text.contains("COMBINED"));
    for name in ["scorecards.jsonl", "summary.csv", "grid.csv"] {
        assert!(dir.path().join("report").join(name).is_file(), "{name}");
    }

    // scan one generated file with a jsonl sink
    let note = std::fs::read_dir(dir.path().join("corpus/ransom_notes"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let out = malscore(
        &["scan", note.to_str().unwrap(), "--jsonl", "cards.jsonl"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("MALICIOUS"));
    let cards = std::fs::read_to_string(dir.path().join("cards.jsonl")).unwrap();
    assert_eq!(cards.lines().count(), 1);
    assert!(cards.contains("\"classification\":\"Malicious\""));
}

#[test]
fn set_overrides_change_behavior() {
    let dir = tempfile::tempdir().unwrap();
    // a tiny text file: normally insufficient evidence never fires with
    // min_effective_votes=3, but forcing it to 99 flips everything malicious
    let f = dir.path().join("hello.txt");
    std::fs::write(&f, "hello world, plain and simple\n".repeat(20)).unwrap();
    let out = malscore(&["scan", "hello.txt"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("BENIGN"));

    let out = malscore(
        &["scan", "hello.txt", "--set", "min_effective_votes=99"],
        dir.path(),
    );
    assert!(stdout(&out).starts_with("MALICIOUS (insufficient evidence)"));

    let out = malscore(
        &["scan", "hello.txt", "--set", "printable_min=2.0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1)); // fails validation
}

#[test]
fn keyscan_reports_planted_artifacts_as_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let mut blob = vec![0x11u8; 4096];
    blob[100..116].copy_from_slice(b"expand 32-byte k");
    let path = dir.path().join("dump.bin");
    std::fs::write(&path, &blob).unwrap();
    let out = malscore(&["keyscan", "dump.bin"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let hit: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(hit["algorithm"], "Salsa20");
    assert_eq!(hit["offset"], 100);

    // selector flags restrict the scan
    let out = malscore(&["keyscan", "dump.bin", "--rsa"], dir.path());
    assert_eq!(stdout(&out).lines().count(), 0);
}

#[test]
fn apiscan_emits_profile_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prog.bin");
    std::fs::write(&path, b"\x00\x01CreateFileW\x00WriteFile\x00WriteFile\x00").unwrap();
    let out = malscore(&["apiscan", "prog.bin", "--per-name"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("name,total,size,per_kb\n"));
    assert!(text.contains("prog.bin,3,"));
    assert!(text.contains("WriteFile,2"));
}
