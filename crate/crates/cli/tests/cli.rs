use std::fs;
use std::path::Path;
use std::process::Command;

fn prose(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_prose"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env("PROSE_WORKERS", "2")
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: [&str; 6] = ["--families", "heat,advection", "--n-train", "6", "--n-test", "4"];

fn with<'a>(cmd: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd, "--out-dir", out];
    v.extend(SMALL);
    v.extend(extra);
    v
}

fn report(dir: &Path, stem: &str) -> Vec<(String, String, f64)> {
    let reports = dir.join("runs/reports");
    let path = fs::read_dir(&reports)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            let name = p.file_name().unwrap().to_string_lossy().to_string();
            name.starts_with(stem) && name.ends_with(".csv")
        })
        .unwrap();
    parse_rows(&path)
}

fn parse_rows(path: &Path) -> Vec<(String, String, f64)> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[3].to_string(), f[4].to_string(), f[5].parse().unwrap())
        })
        .collect()
}

#[test]
fn gen_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    prose(dir.path(), &with("gen", "a", &["--seed", "5"]));
    prose(dir.path(), &with("gen", "b", &["--seed", "5"]));
    for split in ["train", "test"] {
        for f in ["trajectories.f32", "inputs.f32", "tokens.u16"] {
            let a = fs::read(dir.path().join("a/data").join(split).join(f)).unwrap();
            let b = fs::read(dir.path().join("b/data").join(split).join(f)).unwrap();
            assert_eq!(a, b, "{split}/{f}");
        }
    }
}

#[test]
fn untrained_checkpoint_sits_at_the_sanity_floor() {
    let dir = tempfile::tempdir().unwrap();
    prose(dir.path(), &with("gen", "runs", &[]));
    prose(dir.path(), &with("train", "runs", &["--steps", "0"]));
    let out = prose(dir.path(), &["eval", "--out-dir", "runs"]);
    assert!(out.contains("rel L2"));
    let rows = report(dir.path(), "eval");
    let get = |k: &str| rows.iter().find(|r| r.0 == "overall" && r.1 == k).unwrap().2;
    assert!(get("rel_l2") > 50.0, "{}", get("rel_l2"));
    assert!(get("r2") <= 0.0, "{}", get("r2"));
}

#[test]
fn time_marching_study_writes_one_row_per_window() {
    let dir = tempfile::tempdir().unwrap();
    prose(dir.path(), &with("gen", "runs", &[]));
    prose(dir.path(), &with("train", "runs", &["--steps", "2"]));
    let out = prose(
        dir.path(),
        &["study", "time-marching", "--out-dir", "runs", "--checkpoint", "runs/checkpoint", "--t-end", "2.25,3.0"],
    );
    assert!(out.contains("check:"));
    let rows = report(dir.path(), "time-marching");
    assert!(rows.iter().any(|r| r.0 == "t_end=3:window1"));
    assert!(rows.iter().any(|r| r.0 == "summary" && r.1 == "passed"));
    let svg = fs::read_dir(dir.path().join("runs/reports"))
        .unwrap()
        .any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg"));
    assert!(svg);
}

#[test]
fn mismatched_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    prose(dir.path(), &with("gen", "runs", &[]));
    prose(dir.path(), &with("train", "runs", &["--steps", "0"]));
    fs::write(dir.path().join("other.toml"), "seed = 99\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_prose"))
        .current_dir(dir.path())
        .args(["eval", "--out-dir", "runs", "--config", "other.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config hash mismatch"));
}

#[test]
fn unknown_study_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_prose"))
        .current_dir(dir.path())
        .args(["study", "study2-exp9"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
