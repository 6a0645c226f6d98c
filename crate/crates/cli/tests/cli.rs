use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn derand(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_derand")).args(args).output().unwrap()
}

fn derand_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_derand"))
        .args(args)
        .env(key, value)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn construct_writes_manifest_and_verifies_from_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bias.txt");
    let run = derand(&["construct", "bias", "--n", "6", "--eps", "0.4", "--out", s(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let manifest = fs::read_to_string(dir.path().join("bias.txt.manifest")).unwrap();
    let keys: Vec<&str> = manifest.lines().filter_map(|l| l.split_once('=')).map(|(k, _)| k).collect();
    for key in ["command", "kind", "param.n", "param.eps", "method", "version", "output", "sha256", "size", "bound"] {
        assert!(keys.contains(&key), "manifest lacks {key}");
    }
    assert!(fs::read_to_string(&out).unwrap().starts_with("# derand v1 kind=bias"));

    // eps comes from the header.
    let verify = derand(&["verify", "bias", "--in", s(&out)]);
    assert_eq!(verify.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&verify.stdout).contains("result=pass"));

    let table = derand(&["verify", "bias", "--in", s(&out), "--table"]);
    assert_eq!(table.status.code(), Some(0));
}

#[test]
fn failed_verification_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bias.txt");
    assert!(derand(&["construct", "bias", "--n", "5", "--eps", "0.5", "--out", s(&out)]).status.success());
    let run = derand(&["verify", "kwise", "--in", s(&out), "--k", "3", "--eps", "0.01"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stdout).contains("result=fail"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.txt");
    let domain = derand(&["construct", "kwise", "--n", "8", "--k", "3", "--eps", "0.2", "--out", s(&out)]);
    assert_eq!(domain.status.code(), Some(2));
    let budget = derand_env(&["construct", "bias", "--n", "10", "--eps", "0.3", "--out", s(&out)], "DERAND_BUDGET", "10");
    assert_eq!(budget.status.code(), Some(2));
    let missing = derand(&["verify", "bias", "--in", s(&dir.path().join("absent.txt"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn rerun_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("code.txt");
    assert!(derand(&["construct", "code", "--q", "3", "--k", "2", "--eps", "0.5", "--out", s(&out)]).status.success());
    let manifest = dir.path().join("code.txt.manifest");
    let fresh = dir.path().join("again.txt");
    let ok = derand(&["rerun", "--manifest", s(&manifest), "--out", s(&fresh)]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("digest match"));

    let text = fs::read_to_string(&manifest).unwrap();
    let tampered: String = text
        .lines()
        .map(|l| if l.starts_with("sha256=") { "sha256=00".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&manifest, tampered + "\n").unwrap();
    let bad = derand(&["rerun", "--manifest", s(&manifest), "--out", s(&fresh)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn compose_and_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let phf = dir.path().join("phf.txt");
    let inner = dir.path().join("inner.txt");
    let out = dir.path().join("composed.txt");
    assert!(derand(&["construct", "phf", "--n", "6", "--q", "33", "--k", "2", "--eps", "0.5", "--out", s(&phf)])
        .status
        .success());
    assert!(derand(&[
        "construct", "kwise", "--n", "33", "--k", "2", "--eps", "0.2", "--route", "direct", "--out", s(&inner)
    ])
    .status
    .success());
    let run = derand(&["compose", "--phf", s(&phf), "--inner", s(&inner), "--out", s(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# derand v1 kind=composed"));
    assert!(dir.path().join("composed.txt.manifest").exists());

    let bounds = derand(&["bounds", "--n", "6", "--k", "2", "--eps", "0.2", "--norm", "linf", "--in", s(&out)]);
    assert_eq!(bounds.status.code(), Some(0));
    assert!(!bounds.stdout.is_empty());
}
