use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use microforge::output::{hash_file, OutDir};
use microforge::{default_job_file, run_job, JobFile, JobOptions, Manifest, Task};
use tempfile::TempDir;

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn opts(config: &Path, out: PathBuf, seed: u64, threads: usize) -> JobOptions {
    JobOptions { config: config.to_path_buf(), seed: Some(seed), out, threads: Some(threads), ..JobOptions::default() }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_microforge"))
}

fn exit_code(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

const SMALL_CRACK: &str = r#"{"replicates": 3, "params": {"dims": [40, 40, 40], "germs": {"model": "poisson", "cells": 80}}}"#;

#[test]
fn crack_job_layout_and_hashes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "job.json", SMALL_CRACK);
    let out = tmp.path().join("out");
    let m = run_job(Task::Crack, &opts(&cfg, out.clone(), 5, 2)).unwrap();
    let names: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    for r in 0..3 {
        for f in ["volume.raw", "volume.raw.json", "mask.raw", "mask.raw.json", "provenance.json"] {
            assert!(names.contains(&format!("replicate_{r:03}/{f}").as_str()), "{f}");
        }
    }
    assert_eq!(names.iter().filter(|n| n.ends_with("provenance.json")).count(), 3);
    assert_eq!(names.iter().filter(|n| n.ends_with("mask.raw")).count(), 3);
    for a in &m.artifacts {
        assert_eq!(hash_file(&out.join(&a.path)).unwrap().0, a.sha256);
    }
    let on_disk: Manifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, m);
    assert_eq!(m.seed, 5);
    assert_eq!(m.config["params"]["width"]["width"], 3);
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("replicate_002/provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["stream_id"], 2);
    assert_eq!(prov["stats"]["separated"], true);
}

#[test]
fn manifests_are_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "job.json", SMALL_CRACK);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_job(Task::Crack, &opts(&cfg, a.clone(), 9, 1)).unwrap();
    run_job(Task::Crack, &opts(&cfg, b.clone(), 9, 4)).unwrap();
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
    let c = tmp.path().join("c");
    run_job(Task::Crack, &opts(&cfg, c.clone(), 10, 1)).unwrap();
    assert_ne!(fs::read(a.join("manifest.json")).unwrap(), fs::read(c.join("manifest.json")).unwrap());
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = d.join("out");
    let out = out.to_str().unwrap();
    let run = |cfg: &Path| exit_code(&["crack", "--config", cfg.to_str().unwrap(), "--seed", "1", "--out", out]);
    assert_eq!(run(&write_config(d, "unknown.json", r#"{"params": {"dimz": [8, 8, 8]}}"#)), 2);
    assert_eq!(run(&write_config(d, "task.json", r#"{"task": "sem"}"#)), 2);
    assert_eq!(run(&write_config(d, "big.json", r#"{"params": {"dims": [1024, 1024, 1024]}}"#)), 2);
    assert_eq!(run(&write_config(d, "empty.json", r#"{"params": {"dims": [16, 16, 16], "germs": {"model": "poisson", "cells": 0.001}}}"#)), 3);
    let missing = r#"{"params": {"dims": [16, 16, 16], "background": {"kind": "file", "path": "/nonexistent/bg.raw", "air_threshold": 0.3}}}"#;
    assert_eq!(run(&write_config(d, "missing.json", missing)), 4);
    assert_eq!(run(&d.join("no_such_config.json")), 4);
    assert_eq!(run(&write_config(d, "ok.json", r#"{"params": {"dims": [24, 24, 24], "germs": {"model": "poisson", "cells": 60}}}"#)), 0);
}

#[test]
fn out_dir_rejects_escaping_paths() {
    let tmp = TempDir::new().unwrap();
    let out = OutDir::create(&tmp.path().join("o")).unwrap();
    for bad in ["../x", "/etc/x", "a/../../x", ""] {
        assert!(out.path(bad).is_err(), "{bad}");
    }
    assert!(out.path("a/b.raw").unwrap().starts_with(tmp.path().join("o")));
}

#[test]
fn jobs_write_only_inside_out_dir() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "job.json", r#"{"params": {"dims": [24, 24, 24], "germs": {"model": "poisson", "cells": 60}}}"#);
    run_job(Task::Crack, &opts(&cfg, tmp.path().join("out"), 1, 1)).unwrap();
    let mut top: Vec<String> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    top.sort();
    assert_eq!(top, ["job.json", "out"]);
}

#[test]
fn oracle_pipeline_scores_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "eval.json",
        r#"{"replicates": 3, "params": {"generate": {"dims": [40, 40, 40], "germs": {"model": "poisson", "cells": 80}}, "segment": {"method": "oracle"}}}"#,
    );
    let out = tmp.path().join("out");
    run_job(Task::Eval, &opts(&cfg, out.clone(), 2, 2)).unwrap();
    let mut rd = csv::Reader::from_path(out.join("scores.csv")).unwrap();
    let headers = rd.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["seed", "replicate", "method", "params", "dice", "precision", "recall", "runtime_s"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(&r[0], "2");
        assert_eq!(r[4].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn hessian_pipeline_on_width_three_phantoms() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "eval.json",
        r#"{"replicates": 2, "params": {"generate": {"dims": [64, 64, 64], "germs": {"model": "poisson", "cells": 60}}}}"#,
    );
    let out = tmp.path().join("out");
    run_job(Task::Eval, &opts(&cfg, out.clone(), 3, 2)).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["min_dice"].as_f64().unwrap() >= 0.9, "{summary}");
}

#[test]
fn germ_models_with_walk_widths() {
    // the four germ models with p = 0.01 width walks
    let models = [
        r#"{"model": "poisson", "cells": 40}"#,
        r#"{"model": "matern", "parents": 5, "mean_per_cluster": 8, "cluster_radius_vox": 8}"#,
        r#"{"model": "packing", "cells": 40, "fraction": 0.3}"#,
        r#"{"model": "stretched", "cells": 40, "stretch": [2, 1, 1]}"#,
    ];
    let tmp = TempDir::new().unwrap();
    for (i, g) in models.iter().enumerate() {
        let json = format!(
            r#"{{"params": {{"dims": [48, 48, 48], "germs": {g}, "width": {{"kind": "random_walk", "p": 0.01, "w0": 3, "w_max": 6}}}}}}"#
        );
        let cfg = write_config(tmp.path(), &format!("g{i}.json"), &json);
        let out = tmp.path().join(format!("o{i}"));
        run_job(Task::Crack, &opts(&cfg, out.clone(), 4, 1)).unwrap();
        let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("replicate_000/provenance.json")).unwrap()).unwrap();
        assert_eq!(prov["stats"]["separated"], true, "{g}");
    }
}

#[test]
fn fbm_crack_job() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "f.json", r#"{"params": {"dims": [32, 32, 32], "surface": {"kind": "fbm", "hurst": 0.6, "amplitude_vox": 3}}}"#);
    let out = tmp.path().join("out");
    let m = run_job(Task::Crack, &opts(&cfg, out.clone(), 1, 1)).unwrap();
    assert!(!m.artifacts.iter().any(|a| a.path.ends_with("germs.csv")));
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("replicate_000/provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["stats"]["separated"], true);
}

#[test]
fn boolean_sem_and_histogram_matching() {
    let tmp = TempDir::new().unwrap();
    let b = write_config(tmp.path(), "b.json", r#"{"params": {"dims": [32, 32, 32]}}"#);
    let m = run_job(Task::Boolean, &opts(&b, tmp.path().join("b"), 1, 1)).unwrap();
    assert!(m.artifacts.iter().any(|a| a.path == "replicate_000/grains.csv"));

    let s = write_config(tmp.path(), "s.json", r#"{"replicates": 2, "params": {"solid": {"kind": "boolean", "dims": [32, 32, 16]}}}"#);
    let plain = run_job(Task::Sem, &opts(&s, tmp.path().join("s"), 1, 1)).unwrap();
    let images = plain.artifacts.iter().filter(|a| a.path.starts_with("replicate_001/images/")).count();
    let masks = plain.artifacts.iter().filter(|a| a.path.starts_with("replicate_001/masks/")).count();
    assert_eq!((images, masks), (16, 16));

    let reference = tmp.path().join("s/replicate_000/images/slice_0005.png");
    let o = JobOptions { match_histogram: Some(reference), ..opts(&s, tmp.path().join("sm"), 1, 1) };
    let matched = run_job(Task::Sem, &o).unwrap();
    assert!(matched.config["match_histogram_sha256"].is_string());
    assert_ne!(plain.artifacts, matched.artifacts);

    let o = JobOptions { match_histogram: Some(tmp.path().join("x.png")), ..opts(&b, tmp.path().join("bx"), 1, 1) };
    assert_eq!(run_job(Task::Boolean, &o).unwrap_err().exit_code(), 2);
}

#[test]
fn milling_outputs_are_flagged_uncalibrated() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "m.json", r#"{"params": {"milling": {"surface_size_mm": [2, 2], "head_diameter_mm": 1.5}}}"#);
    let out = tmp.path().join("out");
    let m = run_job(Task::Milling, &opts(&cfg, out.clone(), 1, 1)).unwrap();
    for f in ["heightmap.raw", "heightmap.raw.json", "heightmap_color.png", "preview.png", "provenance.json"] {
        assert!(m.artifacts.iter().any(|a| a.path == format!("replicate_000/{f}")), "{f}");
    }
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("replicate_000/provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["stats"]["calibrated"], false);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("replicate_000/heightmap.raw.json")).unwrap()).unwrap();
    assert_eq!(side["dtype"], "f32");
    assert_eq!(side["dims"], serde_json::json!([200, 200, 1]));
}

#[test]
fn segment_job_scores_against_truth() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"params": {"dims": [48, 48, 48], "germs": {"model": "poisson", "cells": 40}}}"#);
    let gen = tmp.path().join("gen");
    run_job(Task::Crack, &opts(&cfg, gen.clone(), 6, 1)).unwrap();
    let vol = gen.join("replicate_000/volume.raw");
    let truth = gen.join("replicate_000/mask.raw");
    for method in ["hessian", "riesz-features"] {
        let json = format!(
            r#"{{"params": {{"input": {:?}, "truth": {:?}, "segmenter": {{"method": "{method}"}}}}}}"#,
            vol.to_str().unwrap(),
            truth.to_str().unwrap()
        );
        let seg = write_config(tmp.path(), "s.json", &json);
        let out = tmp.path().join(format!("seg-{method}"));
        run_job(Task::Segment, &opts(&seg, out.clone(), 0, 1)).unwrap();
        let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("replicate_000/provenance.json")).unwrap()).unwrap();
        assert!(prov["stats"]["scores"]["dice"].as_f64().unwrap() > 0.8, "{method}: {prov}");
    }
    let bad = write_config(tmp.path(), "r.json", &format!(r#"{{"replicates": 2, "params": {{"input": {:?}}}}}"#, vol.to_str().unwrap()));
    assert_eq!(run_job(Task::Segment, &opts(&bad, tmp.path().join("r"), 0, 1)).unwrap_err().exit_code(), 2);
}

#[test]
fn defaults_round_trip() {
    for task in [Task::Crack, Task::Sem, Task::Boolean, Task::Milling, Task::Segment, Task::Eval] {
        let text = serde_json::to_string(&default_job_file(task)).unwrap();
        let file = JobFile::parse(&text).unwrap();
        assert_eq!(file.task, Some(task));
    }
    let out = bin().args(["defaults", "milling"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["params"]["milling"]["path"], "parallel");
}
