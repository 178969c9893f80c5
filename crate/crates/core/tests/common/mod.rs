#![allow(dead_code)]

pub mod ops;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_motionprop"))
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every file below `root` except run manifests, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != "run.json" {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub const COMMANDS: [&str; 9] = [
    "gen", "augment", "project2d", "train-cls", "eval-cls", "train-xfer", "transfer", "latent", "attention",
];

/// Runs every subcommand once with small settings inside `dir`.
pub fn pipeline(dir: &Path) {
    let clip = "ds/motions/s000_c1_t0.json";
    run(dir, &["gen", "--out", "ds", "--subjects", "10", "--trials", "1", "--seed", "5"]);
    run(dir, &["augment", "--input", clip, "--out", "aug", "--rotations", "2", "--crops", "2", "--seed", "5"]);
    run(dir, &["project2d", "--input", clip, "--out", "proj", "--views", "3"]);
    let small = ["--graph1", "4", "--graph2", "4", "--hidden", "6", "--fc", "4", "--rotations", "1", "--crops", "2"];
    let mut args = vec!["train-cls", "--data", "ds", "--out", "cls", "--epochs", "2", "--lr", "0.01", "--seed", "5"];
    args.extend(small);
    run(dir, &args);
    run(dir, &["eval-cls", "--model", "cls/model.json", "--data", "ds", "--out", "eval"]);
    run(
        dir,
        &["train-xfer", "--data", "ds", "--out", "xfer", "--epochs", "2", "--frames", "16", "--channels", "8,8", "--lr", "0.001", "--seed", "5"],
    );
    run(dir, &["transfer", "--model", "xfer/model.json", "--input", clip, "--target-property", "2", "--out", "moved"]);
    run(dir, &["latent", "--model", "xfer/model.json", "--data", "ds", "--out", "latent"]);
    run(dir, &["attention", "--model", "cls/model.json", "--input", clip, "--out", "att"]);
}

/// Output directory of each command in [`pipeline`].
pub fn pipeline_dirs() -> [(&'static str, &'static str); 9] {
    [
        ("gen", "ds"),
        ("augment", "aug"),
        ("project2d", "proj"),
        ("train-cls", "cls"),
        ("eval-cls", "eval"),
        ("train-xfer", "xfer"),
        ("transfer", "moved"),
        ("latent", "latent"),
        ("attention", "att"),
    ]
}
