#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const FORGE: &str = env!("CARGO_BIN_EXE_forge");

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// `forge` run in `cwd` with the binary's directory on PATH.
pub fn forge(cwd: &Path, args: &[&str]) -> Output {
    Command::new(FORGE).current_dir(cwd).env("PATH", path_with_forge()).args(args).output().expect("spawn forge")
}

pub fn path_with_forge() -> String {
    let bin_dir = Path::new(FORGE).parent().unwrap();
    match std::env::var("PATH") {
        Ok(p) => format!("{}:{p}", bin_dir.display()),
        Err(_) => bin_dir.display().to_string(),
    }
}

/// Drops the `ts` and `worker_id` members from a raw journal line, leaving
/// every other byte in place.
pub fn strip_volatile(line: &str) -> String {
    let mut out = line.to_string();
    for key in ["\"ts\":", "\"worker_id\":"] {
        if let Some(start) = out.find(key) {
            let rest = &out[start + key.len()..];
            let end = match rest.strip_prefix('"') {
                Some(quoted) => quoted.find('"').unwrap() + 2,
                None => rest.find(',').unwrap(),
            };
            // value plus the trailing comma
            out.replace_range(start..start + key.len() + end + 1, "");
        }
    }
    out
}

/// Runs the golden study against the recorded transcripts through the CLI and
/// returns (expected, actual) journal lines after `study_created`.
pub fn run_golden(work: &Path) -> (Vec<String>, Vec<String>) {
    let golden = golden_dir();
    let transcripts = golden.join("transcripts");
    let yaml = std::fs::read_to_string(golden.join("study.yaml")).unwrap().replace(
        "study:\n",
        &format!(
            "study:\n  evaluator_command: '{FORGE} eval replay --transcript-dir {}'\n  study_path: study\n",
            transcripts.display()
        ),
    );
    std::fs::write(work.join("golden.yaml"), yaml).unwrap();
    let out = forge(work, &["run", "--config", "golden.yaml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let journal = std::fs::read_to_string(work.join("study/journal.jsonl")).unwrap();
    let actual = journal.lines().skip(1).map(strip_volatile).collect();
    let expected = std::fs::read_to_string(golden.join("expected.jsonl")).unwrap().lines().map(String::from).collect();
    (expected, actual)
}
