use std::path::Path;
use std::process::Command;

fn rgblimp(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_rgblimp")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", "name = \"calm\"\nduration_s = 2.0\n");
    let (code, text) = rgblimp(&["validate", "--config", &good]);
    assert_eq!(code, 0, "{text}");
    let bad = write(dir.path(), "bad.toml", "name = \"calm\"\nduration_s = -1.0\n");
    assert_eq!(rgblimp(&["validate", "--config", &bad, "--kind", "scenario"]).0, 1);
    let unknown = write(dir.path(), "unknown.toml", "wingspan = 3\n");
    assert_eq!(rgblimp(&["validate", "--config", &unknown]).0, 1);
    assert_eq!(rgblimp(&["validate", "--config", "/nonexistent.toml"]).0, 1);
}

#[test]
fn simulate_writes_log() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.toml", "name = \"calm\"\nduration_s = 1.0\nseed = 4\n");
    let out = dir.path().join("out");
    let (code, text) = rgblimp(&["simulate", "--scenario", &scenario, "--arm", "pid", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let log = std::fs::read_to_string(out.join("calm__pid__4.csv")).unwrap();
    assert!(log.starts_with("# scenario=calm arm=pid seed=4"));
    assert_eq!(log.lines().count(), 2 + 41);
    assert!(out.join("calm__pid__4__metrics.csv").exists());

    let (code, _) = rgblimp(&["simulate", "--scenario", &scenario, "--arm", "glider", "--out", out.to_str().unwrap()]);
    assert_ne!(code, 0);
}

#[test]
fn campaign_runs_matrix() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.toml", "name = \"calm\"\nduration_s = 1.0\n");
    let matrix = write(dir.path(), "m.toml", "master_seed = 3\narms = [\"open_loop\"]\nscenarios = [\"s.toml\"]\n");
    let out = dir.path().join("out");
    let (code, text) = rgblimp(&["campaign", "--matrix", &matrix, "--trials", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    assert_eq!(std::fs::read_dir(out.join("episodes")).unwrap().count(), 2);
    let broken = write(dir.path(), "broken.toml", "arms = [\"open_loop\"]\nscenarios = [\"missing.toml\"]\n");
    assert_eq!(rgblimp(&["campaign", "--matrix", &broken, "--out", out.to_str().unwrap()]).0, 1);
}
