#![allow(dead_code)] // each test crate uses a different slice of this module

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Four-word model in glove-text layout: hi and a share a direction, b is
/// orthogonal, hello sits at cosine 0.8 from hi.
pub const TOY_MODEL_GLOVE: &str = "hi 1.0 0.0\nhello 0.8 0.6\na 1.0 0.0\nb 0.0 1.0\n";

/// Topic-separated model: weather and time words live in the x subspace,
/// movie words in the y subspace, link-spam words point away from both.
/// The small y component on the spam words keeps mixed-token averages away
/// from the zero vector.
pub fn topic_model_text() -> String {
    let mut rows = String::new();
    for word in [
        "weather", "rain", "sunny", "forecast", "today", "time", "paris", "alarm", "morning",
    ] {
        rows.push_str(&format!("{word} 1.0 0.0\n"));
    }
    for word in ["movie", "film", "aired", "friday", "night", "cinema"] {
        rows.push_str(&format!("{word} 0.0 1.0\n"));
    }
    for word in ["here", "link", "website", "page"] {
        rows.push_str(&format!("{word} -1.0 0.2\n"));
    }
    for word in ["yes", "no", "ok", "sure", "what", "is", "the", "do", "you", "know", "will", "be", "on", "how"] {
        rows.push_str(&format!("{word} 0.6 0.6\n"));
    }
    rows
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).expect("fixture write succeeds");
    path
}

pub fn cli_bin() -> &'static str {
    env!("CARGO_BIN_EXE_dialogtest")
}

pub fn stub_bin() -> &'static str {
    env!("CARGO_BIN_EXE_stub_agent")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(cli_bin())
        .args(args)
        .output()
        .expect("CLI binary runs")
}

pub fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is UTF-8")
}

pub fn stderr_of(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr is UTF-8")
}
