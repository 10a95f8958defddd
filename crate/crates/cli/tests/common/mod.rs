#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TROPHY: &str = "The trophy doesn't fit in the suitcase because it is too small.";
pub const TROPHY_TOKENS: &str =
    "[CLS] the trophy doesn ' t fit in the suitcase because it is too small . [SEP]";
pub const TROPHY_PRONOUN: usize = 11;
pub const TROPHY_SUITCASE: usize = 9;

pub fn mas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mas"))
        .args(args)
        .output()
        .expect("spawn mas")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}
