#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

pub fn ridekit(args: &[&str]) -> Output {
    ridekit_env(args, &[])
}

pub fn ridekit_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ridekit"));
    cmd.args(args).env_remove("RIDEKIT_LOG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("ridekit binary runs")
}

pub fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}); stderr:\n{}", String::from_utf8_lossy(&out.stderr)))
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Errors of `doc` against `schemas/<name>.schema.json`.
pub fn schema_errors(name: &str, doc: &Value) -> Vec<String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema = read_json(&path);
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect()
}

pub fn assert_schema(name: &str, doc: &Value) {
    let errors = schema_errors(name, doc);
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}
