use std::path::Path;
use std::process::{Command, Output};

fn onesource(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onesource"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ONESOURCE_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn rays_stage_writes_a_hashed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = onesource(&["--preset", "demo", "rays"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(dir.path().join("rays.csv")).unwrap();
    assert!(manifest.starts_with("# config_hash="));
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn rays_stage_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(onesource(&["--preset", "desk", "rays"], d.path()).status.success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("rays.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn unstable_time_step_fails_the_solve_stage() {
    let dir = tempfile::tempdir().unwrap();
    assert!(onesource(&["--preset", "demo", "rays"], dir.path()).status.success());
    let text = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    let bad: String = text
        .lines()
        .map(|l| if l.starts_with("cfl =") { "cfl = 2.0".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, bad).unwrap();
    let cfg = cfg.to_str().unwrap();
    assert!(onesource(&["--config", cfg, "rays"], dir.path()).status.success());
    let o = onesource(&["--config", cfg, "solve"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unstable time step"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let mut text = onesource::config::ExperimentConfig::demo().to_toml();
    text.push_str("\n[colour]\nhue = 3\n");
    std::fs::write(&cfg, text).unwrap();
    let o = onesource(&["--config", cfg.to_str().unwrap(), "rays"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));
}

#[test]
fn later_stage_without_inputs_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = onesource(&["--preset", "demo", "extract"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("run the `rays` stage first"), "{}", stderr(&o));
}

#[test]
fn artifacts_from_another_config_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    assert!(onesource(&["--preset", "demo", "rays"], dir.path()).status.success());
    let o = onesource(&["--preset", "demo", "--seed-density", "20", "source"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("rerun the earlier stages"), "{}", stderr(&o));
}
