use std::path::{Path, PathBuf};
use std::process::Command;

use groundloop::preprocess::LabelMask;
use groundloop::raster::{read_ppm, write_ppm, RgbImage};
use serde_json::{json, Value};
use tempfile::TempDir;

const HEADPHONE_PLAN: &str = include_str!("../../core/tests/fixtures/headphone_plan.json");
const CORRECTED_PLAN: &str = include_str!("../../core/tests/fixtures/corrected_plan.json");

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn groundloop(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_groundloop"))
        .arg("--config")
        .arg(dir.join("config.json"))
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn one_line(json_text: &str) -> String {
    serde_json::to_string(&serde_json::from_str::<Value>(json_text).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn config(dir: &Path, cfg: Value) {
    write(dir, "config.json", &serde_json::to_string_pretty(&cfg).unwrap());
}

fn script(dir: &Path, name: &str, replies: &[&str]) {
    let body: String = replies.iter().map(|r| one_line(r) + "\n").collect();
    write(dir, name, &body);
}

const W: u32 = 64;
const H: u32 = 48;

/// Identity extrinsic, 64×48 camera, a small box of points ahead of it and a
/// mask whose label 1 covers the image center.
fn sensor_fixture() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let cal = json!({
        "intrinsics": {"fx": 50.0, "fy": 50.0, "cx": 32.0, "cy": 24.0, "width": W, "height": H},
        "T_lidar_camera": [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
    });
    write(dir.path(), "calib.json", &cal.to_string());
    let mut cloud = String::new();
    for i in 0..6 {
        for j in 0..6 {
            cloud.push_str(&format!("{} {} {}\n", -0.1 + 0.04 * i as f64, -0.1 + 0.04 * j as f64, 1.0 + 0.01 * ((i + j) % 3) as f64));
        }
    }
    write(dir.path(), "cloud.txt", &cloud);
    let mut labels = vec![0u32; (W * H) as usize];
    for v in 16..32 {
        for u in 24..40 {
            labels[(v * W + u) as usize] = 1;
        }
    }
    LabelMask::new(W, H, labels).unwrap().save_pgm(dir.path().join("mask.pgm")).unwrap();
    let image = RgbImage::from_raw(W, H, vec![90; (W * H * 3) as usize]).unwrap();
    write_ppm(dir.path().join("image.ppm"), &image).unwrap();
    dir
}

fn sensor_config(dir: &Path, extra_paths: Value) {
    let mut paths = json!({"calibration": "calib.json", "cloud": "cloud.txt", "mask": "mask.pgm", "image": "image.ppm"});
    paths.as_object_mut().unwrap().extend(extra_paths.as_object().unwrap().clone());
    config(dir, json!({"paths": paths, "score": {"knn": 8}}));
}

#[test]
fn fuse_scores_every_visible_point_deterministically() {
    let dir = sensor_fixture();
    sensor_config(dir.path(), json!({}));
    let a = groundloop(dir.path(), &["fuse"]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let scored: Vec<Value> = serde_json::from_str(&a.stdout).unwrap();
    assert_eq!(scored.len(), 36);
    assert!(scored.iter().all(|p| {
        let c = p["C"].as_f64().unwrap();
        c > 0.0 && c <= 1.0
    }));
    let b = groundloop(dir.path(), &["fuse"]);
    assert_eq!(a.stdout, b.stdout);

    let out = dir.path().join("scored.json");
    assert_eq!(groundloop(dir.path(), &["fuse", "--out", out.to_str().unwrap()]).code, 0);
    assert_eq!(std::fs::read_to_string(out).unwrap(), a.stdout);
}

#[test]
fn fuse_empty_cloud_gives_empty_output() {
    let dir = sensor_fixture();
    write(dir.path(), "cloud.txt", "");
    sensor_config(dir.path(), json!({}));
    let r = groundloop(dir.path(), &["fuse"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, "[]\n");
}

#[test]
fn missing_calibration_is_a_config_error() {
    let dir = sensor_fixture();
    std::fs::remove_file(dir.path().join("calib.json")).unwrap();
    sensor_config(dir.path(), json!({}));
    assert_eq!(groundloop(dir.path(), &["fuse"]).code, 2);

    config(dir.path(), json!({"paths": {"cloud": "cloud.txt"}}));
    assert_eq!(groundloop(dir.path(), &["fuse"]).code, 2);
}

#[test]
fn missing_config_file_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(groundloop(dir.path(), &["eval"]).code, 2);
}

#[test]
fn annotate_one_mask_one_marker() {
    let dir = sensor_fixture();
    sensor_config(dir.path(), json!({}));
    let scored = dir.path().join("scored.json");
    assert_eq!(groundloop(dir.path(), &["fuse", "--out", scored.to_str().unwrap()]).code, 0);

    sensor_config(dir.path(), json!({"scored": "scored.json"}));
    let out = dir.path().join("annotated.ppm");
    let r = groundloop(dir.path(), &["annotate", "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let markers: Vec<Value> = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(markers.len(), 1);
    assert_eq!(markers[0]["mask_id"], 1);
    assert_ne!(read_ppm(&out).unwrap(), read_ppm(dir.path().join("image.ppm")).unwrap());
}

#[test]
fn annotate_without_masks_leaves_image_unchanged() {
    let dir = sensor_fixture();
    config(dir.path(), json!({"paths": {"image": "image.ppm"}}));
    let out = dir.path().join("annotated.ppm");
    let r = groundloop(dir.path(), &["annotate", "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, "[]\n");
    assert_eq!(read_ppm(&out).unwrap(), read_ppm(dir.path().join("image.ppm")).unwrap());
}

fn planner_dir(replies: &[&str]) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    script(dir.path(), "vlm.jsonl", replies);
    write(dir.path(), "scene.json", HEADPHONE_PLAN);
    write(dir.path(), "plan.json", CORRECTED_PLAN);
    dir
}

fn planner_config(dir: &Path, extra: Value) {
    let mut cfg = json!({
        "task": "Hand the headphone over.",
        "vlm": {"kind": "scripted", "script": "vlm.jsonl"},
        "paths": {"scene": "scene.json", "plan": "plan.json"},
    });
    cfg.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    config(dir, cfg);
}

#[test]
fn direct_plan_uses_exactly_one_call() {
    // A one-reply script: a second call would exhaust it and exit 3.
    let dir = planner_dir(&[CORRECTED_PLAN]);
    planner_config(dir.path(), json!({}));
    let r = groundloop(dir.path(), &["plan", "--strategy", "direct"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["transcript"].as_array().unwrap().len(), 1);
    assert_eq!(v["plan"]["task_steps"].as_array().unwrap().len(), 7);
    assert!(v["transcript"][0]["prompt"].as_str().unwrap().contains("Hand the headphone over."));
    assert_eq!(groundloop(dir.path(), &["plan"]).stdout, r.stdout);
}

#[test]
fn exhausted_script_is_a_backend_error() {
    let dir = planner_dir(&[]);
    planner_config(dir.path(), json!({}));
    let r = groundloop(dir.path(), &["plan"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stdout.is_empty());
}

#[test]
fn unparseable_plan_reply_is_a_backend_error() {
    let dir = planner_dir(&["\"just some prose\""]);
    planner_config(dir.path(), json!({}));
    assert_eq!(groundloop(dir.path(), &["plan"]).code, 3);
}

fn roi_reply(u: f64, flag: bool) -> String {
    let mut v = json!({"roi": {"center": [u, 24.0], "extent": [6.0, 6.0]}});
    if flag {
        v["flag"] = json!("complete");
    }
    v.to_string()
}

#[test]
fn iterative_plan_follows_the_script() {
    let replies = [roi_reply(30.0, false), roi_reply(31.0, false), roi_reply(32.0, true), roi_reply(40.0, true)];
    let refs: Vec<&str> = replies.iter().map(String::as_str).collect();
    let dir = planner_dir(&refs);
    planner_config(dir.path(), json!({"convergence": {"epsilon": 2.0, "max_iter": 5}}));
    let r = groundloop(dir.path(), &["plan", "--strategy", "iterative"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["transcript"].as_array().unwrap().len(), 3);
    assert_eq!(v["plan"], Value::Null);
    assert_eq!(groundloop(dir.path(), &["plan", "--strategy", "iterative"]).stdout, r.stdout);
}

#[test]
fn iterative_plan_without_convergence_is_a_task_failure() {
    let replies = [roi_reply(30.0, false), roi_reply(31.0, false), roi_reply(32.0, false)];
    let refs: Vec<&str> = replies.iter().map(String::as_str).collect();
    let dir = planner_dir(&refs);
    planner_config(dir.path(), json!({"convergence": {"epsilon": 2.0, "max_iter": 3}}));
    assert_eq!(groundloop(dir.path(), &["plan", "--strategy", "iterative"]).code, 4);
}

#[test]
fn supervise_accepts_corrected_plan_and_archives() {
    let dir = planner_dir(&[HEADPHONE_PLAN, CORRECTED_PLAN, "\"headphone at [0.5, 0.4, 0.2]\""]);
    planner_config(dir.path(), json!({"paths": {"scene": "scene.json", "archive": "archive.jsonl"}}));
    let r = groundloop(dir.path(), &["supervise"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["archive"]["outcome"], "success");
    assert_eq!(v["history"]["records"].as_array().unwrap().len(), 2);
    let archive = std::fs::read_to_string(dir.path().join("archive.jsonl")).unwrap();
    assert_eq!(archive.lines().count(), 1);
}

#[test]
fn supervise_never_accepted_is_a_task_failure() {
    let dir = planner_dir(&[HEADPHONE_PLAN; 3]);
    planner_config(dir.path(), json!({"loop": {"n_max": 2, "tau": 0.8}, "paths": {"scene": "scene.json", "archive": "a.jsonl"}}));
    let r = groundloop(dir.path(), &["supervise"]);
    assert_eq!(r.code, 4, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["archive"]["outcome"], "human_intervention");
    assert_eq!(v["reviewer_queries"], 3);
}

#[test]
fn supervise_with_exhausted_planner_is_a_backend_error() {
    let dir = planner_dir(&[HEADPHONE_PLAN]);
    planner_config(dir.path(), json!({}));
    assert_eq!(groundloop(dir.path(), &["supervise"]).code, 3);
}

#[test]
fn simulate_corrected_plan_succeeds() {
    let dir = planner_dir(&[]);
    planner_config(dir.path(), json!({"goals": {"place_target": [0.5, 0.4, 0.2]}}));
    let trace = dir.path().join("trace.jsonl");
    let r = groundloop(dir.path(), &["simulate", "--task", "2", "--trace", trace.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["success"], true);
    assert_eq!(std::fs::read_to_string(trace).unwrap().lines().count(), 7);
}

#[test]
fn simulate_failures() {
    let dir = planner_dir(&[]);
    write(dir.path(), "plan.json", HEADPHONE_PLAN);
    planner_config(dir.path(), json!({"goals": {"place_target": [0.5, 0.4, 0.2]}}));
    let r = groundloop(dir.path(), &["simulate", "--task", "2"]);
    assert_eq!(r.code, 4);
    assert_eq!(serde_json::from_str::<Value>(&r.stdout).unwrap()["success"], false);

    // Task 2 without a placement target cannot be built.
    planner_config(dir.path(), json!({}));
    assert_eq!(groundloop(dir.path(), &["simulate", "--task", "2"]).code, 2);
    assert_eq!(groundloop(dir.path(), &["simulate", "--task", "9"]).code, 2);
}

#[test]
fn eval_reports_and_rejects_zero_runs() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), json!({"eval": {"seed": 3}}));
    let r = groundloop(dir.path(), &["eval", "--runs", "6"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["executability", "executable", "miou", "n", "rouge_l", "successes", "tsr"]);
    assert_eq!(v["tsr"], 1.0);
    assert_eq!(v["n"], 6);
    assert_eq!(groundloop(dir.path(), &["eval", "--runs", "6"]).stdout, r.stdout);

    assert_eq!(groundloop(dir.path(), &["eval", "--runs", "0"]).code, 2);
    assert_eq!(groundloop(dir.path(), &["eval", "--fault-rate", "1.5"]).code, 2);
}

#[test]
fn eval_ablation_is_worse() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), json!({"eval": {"seed": 1}}));
    let tsr = |args: &[&str]| -> f64 {
        let r = groundloop(dir.path(), args);
        assert_eq!(r.code, 0, "{}", r.stderr);
        serde_json::from_str::<Value>(&r.stdout).unwrap()["tsr"].as_f64().unwrap()
    };
    let with = tsr(&["eval", "--runs", "10", "--fault-rate", "1"]);
    let without = tsr(&["eval", "--runs", "10", "--fault-rate", "1", "--no-reviewer"]);
    assert!(without < with, "{without} vs {with}");
}

#[test]
fn augment_writes_count_records() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), json!({"seed": 11}));
    let out = dir.path().join("d.jsonl");
    let r = groundloop(dir.path(), &["augment", "--count", "20", "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 20);
    assert_eq!(groundloop(dir.path(), &["augment", "--count", "20"]).stdout, text);
    assert_eq!(groundloop(dir.path(), &["augment", "--count", "0"]).stdout, "");
}

#[test]
fn config_interpolates_environment() {
    let dir = planner_dir(&[CORRECTED_PLAN]);
    config(
        dir.path(),
        json!({"task": "t", "vlm": {"kind": "scripted", "script": "${GROUNDLOOP_CLI_TEST_SCRIPT}"}}),
    );
    let run = |var: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_groundloop"));
        c.arg("--config").arg(dir.path().join("config.json")).arg("plan");
        match var {
            Some(v) => c.env("GROUNDLOOP_CLI_TEST_SCRIPT", v),
            None => c.env_remove("GROUNDLOOP_CLI_TEST_SCRIPT"),
        };
        c.output().unwrap().status.code().unwrap()
    };
    assert_eq!(run(Some("vlm.jsonl")), 0);
    assert_eq!(run(None), 2);
}
