use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fogduel"))
}

#[test]
fn check_passes_on_pristine_rules() {
    let out = bin().arg("check").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn mutated_combat_fails_only_the_golden_trace() {
    let out = bin().args(["check", "--combat-divisor", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].contains("env_golden_trace"));
}

#[test]
fn invalid_config_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, r#"{"actors": 0, "learner": {"n_step": 0}}"#).unwrap();
    let out = bin().args(["train", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("actors must be at least 1") && err.contains("n_step"), "{err}");

    let out = bin().args(["ablate", "--variant", "bogus", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let out = bin().args(["evaluate", "--checkpoint", "/nonexistent/x.ckpt", "--games", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_then_evaluate_through_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"actors": 2, "opponents": ["RandomLegal"], "budget": {"train_steps": 8},
            "learn_start": 32, "eval": {"interval_steps": 0, "final_games": 2}, "output_dir": "out"}"#,
    )
    .unwrap();
    let out = bin()
        .args(["train", "--deterministic", "--config"])
        .arg(&cfg)
        .env("FOGDUEL_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = tmp.path().join("out/checkpoints/final.ckpt");
    let out = bin().args(["evaluate", "--games", "3", "--checkpoint"]).arg(&ckpt).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let table: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(table["Rusher"]["games"], 3);
    assert!(ckpt.with_extension("eval.json").exists());
}
