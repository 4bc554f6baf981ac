#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use shapsrc_cli::Report;
use shapsrc_core::synth::{write_jsonl, TextTask};

pub fn shapsrc(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_shapsrc"))
        .args(args)
        .env("SHAPSRC_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Runs the binary, asserting success, and loads the report it wrote.
pub fn run_ok(args: &[&str]) -> Report {
    let out = shapsrc(args);
    assert!(
        out.status.success(),
        "shapsrc {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let report = stdout.lines().next().expect("report path printed");
    Report::load(Path::new(report)).unwrap()
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Writes every corpus of `task` as JSONL and returns the `[[sources]]` and
/// `[[targets]]` config tables naming them.
pub fn write_task(dir: &Path, task: &TextTask) -> String {
    let mut toml = String::new();
    for s in &task.sources {
        let file = format!("{}.jsonl", s.id.name);
        write_jsonl(&dir.join(&file), &s.instances, &task.labels).unwrap();
        toml += &format!("[[sources]]\nname = \"{}\"\npath = \"{file}\"\n\n", s.id.name);
    }
    for t in [&task.dev, &task.test] {
        let file = format!("{}.jsonl", t.name);
        write_jsonl(&dir.join(&file), &t.instances, &task.labels).unwrap();
        toml += &format!("[[targets]]\nname = \"{}\"\npath = \"{file}\"\n\n", t.name);
    }
    toml
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
