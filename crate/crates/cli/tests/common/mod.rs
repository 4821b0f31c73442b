//! Run directories with a dataset, splits and a config file.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scbm::pipeline::dataset::{AnnotatedPost, SplitManifest};
use scbm::synthetic::exist_jsonl;
use scbm_cli::RunConfig;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config_path: PathBuf,
}

impl Fixture {
    /// Writes `posts`, `splits` and a config whose body is `seed = 2025`,
    /// the three mandatory paths and `extra`.
    pub fn new(posts: &[AnnotatedPost], splits: &SplitManifest, extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("data.jsonl"), exist_jsonl(posts)).unwrap();
        splits.save(dir.path().join("splits.json")).unwrap();
        let config_path = dir.path().join("run.toml");
        let fixture = Self { dir, config_path };
        fixture.write_config(extra);
        fixture
    }

    pub fn write_config(&self, extra: &str) {
        let (top, tables) = split_extra(extra);
        let text = format!(
            "seed = 2025\n{top}\n[paths]\ndataset = \"data.jsonl\"\nsplits = \"splits.json\"\noutput_dir = \"out\"\n{tables}"
        );
        std::fs::write(&self.config_path, text).unwrap();
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }

    pub fn config(&self) -> RunConfig {
        RunConfig::load(&self.config_path).unwrap()
    }

    pub fn run(&self, args: &[&str]) -> Output {
        self.run_with_env(args, &[])
    }

    pub fn run_with_env(&self, args: &[&str], env: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_scbm"));
        cmd.arg("--config").arg(&self.config_path).args(args);
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }
}

/// Top-level `key = value` lines go before `[paths]`; tables after.
fn split_extra(extra: &str) -> (String, String) {
    let mut offset = 0;
    for line in extra.split_inclusive('\n') {
        if line.trim_start().starts_with('[') {
            return (extra[..offset].to_string(), extra[offset..].to_string());
        }
        offset += line.len();
    }
    (extra.to_string(), String::new())
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}
