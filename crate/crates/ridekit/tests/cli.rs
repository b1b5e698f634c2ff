mod common;

use std::fs;

use common::{assert_schema, code, read_json, ridekit, ridekit_env, schema_errors, stdout_json};
use ridekit::raster::save_raster;
use ridekit_core::{Domain, ImageGrid};

#[test]
fn validate_theorem_reports_every_row() {
    let out = ridekit(&["validate-theorem", "--sweeps", "100", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_schema("theorem", &doc);
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r["holds"] == true));
    assert_eq!(doc["all_hold"], true);
}

#[test]
fn synth_then_decompose_fills_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = ridekit(&["synth", "--rho", "-0.9", "--height", "48", "--width", "48", "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let synth = stdout_json(&out);
    assert_schema("synth", &synth);
    assert!((synth["achieved"]["rho"].as_f64().unwrap() + 0.9).abs() < 0.05);
    assert_schema("synth", &read_json(&dir.path().join("synth.json")));

    let input = dir.path().join("I.raw");
    let out = ridekit(&["decompose", "--in", input.to_str().unwrap(), "--out", d, "--max-iters", "60"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["L.raw", "R.raw", "loss.json", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let loss = read_json(&dir.path().join("loss.json"));
    assert_schema("loss", &loss);
    assert_eq!(loss["iterations"], 60);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_schema("manifest", &manifest);
    assert_eq!(manifest["command"], "decompose");
    assert_eq!(manifest["input_hashes"].as_object().unwrap().len(), 1);
}

#[test]
fn unknown_subcommand_prints_usage() {
    let out = ridekit(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert!(out.stdout.is_empty());
    assert_eq!(code(&ridekit(&[])), 1);
    assert_eq!(code(&ridekit(&["synth", "--bogus"])), 1);
}

#[test]
fn flags_take_precedence_over_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"sweeps": 5, "seed": 11}"#).unwrap();
    let out_dir = dir.path().join("o");
    let args =
        ["validate-theorem", "--config", cfg.to_str().unwrap(), "--sweeps", "3", "--out", out_dir.to_str().unwrap()];
    let out = ridekit(&args);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_json(&out)["count"], 3);
    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["config"]["sweeps"], 3);
    assert_eq!(manifest["config"]["seed"], 11);
    assert_eq!(manifest["seed"], 11);

    fs::write(&cfg, r#"{"sweeps": "five"}"#).unwrap();
    assert_eq!(code(&ridekit(&["validate-theorem", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn flat_input_is_a_contract_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.raw");
    save_raster(&path, &ImageGrid::filled(16, 16, 3, 0.5, Domain::Composite).unwrap()).unwrap();
    for mode in ["composite-threshold", "gap-threshold"] {
        let out = ridekit(&["segment", "--in", path.to_str().unwrap(), "--mode", mode]);
        assert_eq!(code(&out), 2, "{mode}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("flat"));
    }
    let missing = dir.path().join("none.raw");
    assert_eq!(code(&ridekit(&["segment", "--in", missing.to_str().unwrap()])), 1);
}

#[test]
fn gap_segment_and_sweep_outputs_match_their_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&ridekit(&["synth", "--height", "48", "--width", "48", "--out", d])), 0);
    let img = dir.path().join("I.raw");
    let img = img.to_str().unwrap();
    let mask = dir.path().join("mask.raw");

    let gap_dir = dir.path().join("gap");
    let out = ridekit(&["gap", "--in", img, "--out", gap_dir.to_str().unwrap(), "--max-iters", "40"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_schema("gap", &stdout_json(&out));
    assert!(gap_dir.join("delta_r.raw").is_file());

    let seg_dir = dir.path().join("seg");
    let out = ridekit(&[
        "segment",
        "--in",
        img,
        "--gt",
        mask.to_str().unwrap(),
        "--mode",
        "composite-threshold",
        "--out",
        seg_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let doc = stdout_json(&out);
    assert_schema("segment", &doc);
    assert!(doc["metrics"]["iou"].is_number());
    assert_eq!(read_json(&seg_dir.join("manifest.json"))["input_hashes"].as_object().unwrap().len(), 2);

    let sweep_dir = dir.path().join("sweep");
    let plot = sweep_dir.join("plot.svg");
    let out = ridekit(&[
        "sweep",
        "--targets",
        "-0.9,0,0.9",
        "--per-target",
        "1",
        "--height",
        "40",
        "--width",
        "40",
        "--max-iters",
        "40",
        "--out",
        sweep_dir.to_str().unwrap(),
        "--plot",
        plot.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_schema("sweep", &doc);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
    assert_eq!(fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap().lines().count(), 4);
    assert!(fs::read_to_string(&plot).unwrap().contains("<svg"));
}

#[test]
fn eval_loss_requests() {
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("req.json");
    fs::write(&req, r#"{"kind": "infonce", "f_pos_a": [1, 0], "f_pos_b": [1, 0], "negatives": [[0, 1]], "tau": 0.1}"#)
        .unwrap();
    let out = ridekit(&["eval-loss", "--in", req.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let doc = stdout_json(&out);
    assert_schema("eval-loss", &doc);
    assert!((doc["value"].as_f64().unwrap() - 4.53989e-5).abs() < 1e-9);

    let feats = dir.path().join("f.raw");
    let weights = dir.path().join("m.raw");
    save_raster(&feats, &ImageGrid::new(1, 2, 2, vec![3.0, 0.0, 0.0, 4.0], Domain::Feature).unwrap()).unwrap();
    save_raster(&weights, &ImageGrid::new(1, 2, 1, vec![1.0, 1.0], Domain::Feature).unwrap()).unwrap();
    let body = serde_json::json!({"kind": "masked-pool", "features": feats, "mask": weights});
    fs::write(&req, body.to_string()).unwrap();
    let out_dir = dir.path().join("o");
    let out = ridekit(&["eval-loss", "--in", req.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_schema("eval-loss", &doc);
    let v: Vec<f64> = doc["pooled"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((v[0] - 0.6).abs() < 1e-6 && (v[1] - 0.8).abs() < 1e-6, "{v:?}");
    assert_eq!(read_json(&out_dir.join("manifest.json"))["input_hashes"].as_object().unwrap().len(), 3);

    fs::write(&req, r#"{"kind": "infonce", "f_pos_a": [2, 0], "f_pos_b": [1, 0], "negatives": [[0, 1]], "tau": 1}"#)
        .unwrap();
    assert_eq!(code(&ridekit(&["eval-loss", "--in", req.to_str().unwrap()])), 2);
    assert_eq!(code(&ridekit(&["eval-loss"])), 1);
}

#[test]
fn log_level_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["synth", "--height", "16", "--width", "16", "--out", dir.path().to_str().unwrap()];
    let quiet = ridekit(&args);
    assert!(quiet.stderr.is_empty());
    let loud = ridekit_env(&args, &[("RIDEKIT_LOG", "info")]);
    assert!(String::from_utf8_lossy(&loud.stderr).contains("generating"));
}

#[test]
fn schemas_reject_malformed_documents() {
    let bad =
        serde_json::json!({"command": "synth", "config": {}, "seed": -1, "tool_version": "x", "input_hashes": {}});
    assert!(!schema_errors("manifest", &bad).is_empty());
    let bad = serde_json::json!({"count": 1, "all_hold": true, "eps_r": 1e-8, "rows": [{"index": 0}]});
    assert!(!schema_errors("theorem", &bad).is_empty());
}
