#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn campaign_dir() -> PathBuf {
    manifest_dir().join("tests").join("fixtures").join("campaign")
}

pub fn mini_harness_cmd() -> Option<String> {
    let ok = Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success());
    if !ok {
        eprintln!("python3 not found; skipping live-harness checks");
        return None;
    }
    let script = manifest_dir().join("../core/tests/support/mini_harness.py");
    Some(format!("python3 {}", script.display()))
}

/// The binary under test with a clean provider/harness environment.
pub fn diffexpose() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_diffexpose"));
    for var in ["DIFFEXPOSE_API_KEY", "DIFFEXPOSE_API_BASE", "DIFFEXPOSE_HARNESS_CMD"] {
        cmd.env_remove(var);
    }
    cmd
}

/// Flags that make `run`/`pair` hermetic against the committed fixtures.
pub fn replay_flags() -> Vec<String> {
    let dir = campaign_dir();
    vec![
        "--provider".into(),
        "replay".into(),
        "--replay-dir".into(),
        dir.join("replay").display().to_string(),
        "--harness-replay".into(),
        dir.join("harness.json").display().to_string(),
        "--iterations".into(),
        "2".into(),
        "--samples".into(),
        "2".into(),
    ]
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
