#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_nfmlab");

/// A config small enough that the whole pipeline runs in about a second.
pub const TINY: &str = "\
seed = 7
teacher.blocks = 2
teacher.width = 16
teacher.steps = 150
teacher.batch = 64
teacher.sigma_samples = 1000
teacher.nll_count = 500
student.widths = 32,32
student.steps = 150
student.batch = 64
sd.support = 128
sd.fit_steps = 100
sd.batch = 64
sampler.count = 128
eval.count = 128
eval.quick_count = 64
eval.iterations = 3
eval.ztable_pairs = 300
";

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

pub fn nfmlab(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs every subcommand once into `out`; panics on any failure.
pub fn full_pipeline(config: &Path, out: &Path) {
    let teacher = out.join("teacher.ckpt");
    let teacher = teacher.to_str().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["train-teacher"],
        vec!["distill", "--coupling", "fm"],
        vec!["distill", "--coupling", "ot"],
        vec!["distill", "--coupling", "sdot"],
        vec!["distill", "--coupling", "nfm", "--teacher", teacher],
    ];
    for args in runs {
        check(&nfmlab(config, out, &args), &args);
    }
    let student = out.join("student_nfm.ckpt");
    let student = student.to_str().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["sample", "--student", student, "--trajectories", "--guidance", "0.5"],
        vec!["eval", "--student", student, "--nfe", "5,3", "--search-guidance"],
        vec!["ztable", "--teacher", teacher],
    ];
    for args in runs {
        check(&nfmlab(config, out, &args), &args);
    }
}

fn check(o: &Output, args: &[&str]) {
    assert!(o.status.success(), "{args:?} failed: {}", stderr(o));
}

/// Every checkpoint and CSV in `dir`, sorted by name.
pub fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ckpt" | "csv")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}
