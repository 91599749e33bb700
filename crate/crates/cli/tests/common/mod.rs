#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

pub const COMMANDS: [&str; 9] = [
    "check-env",
    "simulate-walk",
    "reduce",
    "heights",
    "spine-sample",
    "eigen",
    "verify",
    "tails",
    "scaling",
];

/// Every section shrunk so each command finishes in about a second.
pub const SMALL: &str = r#"
schema = 1
seed = 20240611

[model]
kind = "calibrated"
kappa = 1.5

[walk]
mode = "reflected"
steps = 20000
excursions = 200

[reduce]
walks = 50
steps = 500

[heights]
steps = 5000
replicates = 3
stride = 7

[spine]
samples = 300
max_depth = 10000

[eigen]
samples = 3000
max_steps = 100000

[verify]
excursions = 2000
spine_samples = 500
chain_samples = 2000
eigen_samples = 2000
eigen_max_steps = 100000
walk_steps = 5000
walk_replicates = 4
distribution_samples = 3000
z_excursions = 2000
w_trees = 2000
w_depth = 6
reduction_walks = 40
reduction_steps = 400
lyapunov_truncation = 20000

[tails]
line_samples = 5000
w_samples = 1000
w_depth = 12
convergence_n = [10, 40]
convergence_samples = 200

[scaling]
n_grid = [200, 800]
replicates = 40
"#;

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn treewalk(command: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_treewalk"))
        .arg(command)
        .arg("-c")
        .arg(config)
        .arg("-o")
        .arg(out)
        .args(extra)
        .env_remove("TREEWALK_OUT")
        .output()
        .unwrap();
    status.status.code().unwrap_or(-1)
}

/// Artifact bytes by file name, excluding the run manifest.
pub fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
        .collect()
}
