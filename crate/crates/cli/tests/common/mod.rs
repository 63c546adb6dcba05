#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use radar_xconv::net::NetworkSpec;

pub fn radarseg<P: AsRef<std::ffi::OsStr>>(args: &[P]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radarseg")).args(args).output().expect("radarseg runs")
}

/// Runs and panics with the captured streams unless the exit code is `code`.
pub fn expect_code<P: AsRef<std::ffi::OsStr>>(args: &[P], code: i32) -> Output {
    let out = radarseg(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn ok<P: AsRef<std::ffi::OsStr>>(args: &[P]) -> String {
    String::from_utf8(expect_code(args, 0).stdout).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

/// Writes a run config whose `[network]` holds `spec` in full.
pub fn write_config(path: &Path, seed: u64, spec: Option<&NetworkSpec>, train: &[(&str, toml::Value)]) -> PathBuf {
    let mut doc = toml::Table::new();
    doc.insert("seed".into(), toml::Value::Integer(seed as i64));
    if let Some(spec) = spec {
        let mut network = toml::Table::new();
        network.insert("spec".into(), toml::Value::try_from(spec).unwrap());
        doc.insert("network".into(), toml::Value::Table(network));
    }
    let mut t = toml::Table::new();
    for (k, v) in train {
        t.insert((*k).into(), v.clone());
    }
    doc.insert("train".into(), toml::Value::Table(t));
    fs::write(path, toml::to_string(&doc).unwrap()).unwrap();
    path.to_path_buf()
}

/// Sorted file names in `dir`.
pub fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

pub fn read_toml(path: &Path) -> toml::Table {
    toml::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// `[average] f1` of a report table.
pub fn macro_f1(report: &toml::Table) -> f64 {
    report["average"]["f1"].as_float().unwrap()
}
