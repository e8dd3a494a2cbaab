use std::io::Write;
use std::path::Path;

use groundloop::confidence::{read_scored, score_cloud, ScoreOptions, ScoredPoint};
use groundloop::evaluation::{evaluate, generate_dataset, Composition};
use groundloop::gateway::{connect, parse_vlm_plan, ChatMessage, ImageAttachment, TemplateKind};
use groundloop::geometry::Calibration;
use groundloop::jsonfmt::to_canonical_string;
use groundloop::par::Exec;
use groundloop::preprocess::{
    downsample, filter_depth, remove_ground_cells, CropRect, DepthMap, LabelMask, PointCloud,
};
use groundloop::raster::{encode_png, read_ppm, write_ppm, RgbImage};
use groundloop::simulator::{builtin_goals, run_plan, SceneModel};
use groundloop::supervision::{archive_write, run_supervision, Reviewer, SessionTemplates};
use groundloop::synthesis::{
    annotate, build_initial_prompt, run_interactive, select_markers, Frame, Marker, VecFrames,
};
use serde::Serialize;
use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::CliError;

/// Writes `text` to `out`, or stdout when no path is given.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(text.as_bytes())?;
            s.flush()?;
            Ok(())
        }
    }
}

fn canonical<T: Serialize + ?Sized>(v: &T) -> Result<String, CliError> {
    Ok(to_canonical_string(v)?)
}

fn load_markers(cfg: &PipelineConfig) -> Result<Vec<Marker>, CliError> {
    match &cfg.paths.markers {
        Some(_) => {
            let p = cfg.require("markers", &cfg.paths.markers)?;
            Ok(serde_json::from_slice(&std::fs::read(p)?)?)
        }
        None => Ok(Vec::new()),
    }
}

fn load_scored(cfg: &PipelineConfig) -> Result<Vec<ScoredPoint>, CliError> {
    match &cfg.paths.scored {
        Some(_) => Ok(read_scored(cfg.require("scored", &cfg.paths.scored)?)?),
        None => Ok(Vec::new()),
    }
}

/// Preprocessed cloud → per-point confidence.
pub fn fuse(cfg: &PipelineConfig) -> Result<Vec<ScoredPoint>, CliError> {
    let cal = Calibration::load(cfg.require("calibration", &cfg.paths.calibration)?)?;
    let k = &cal.intrinsics;
    let mut cloud = PointCloud::load(cfg.require("cloud", &cfg.paths.cloud)?)?;
    let pp = &cfg.preprocess;
    if pp.voxel > 0.0 {
        cloud = downsample(&cloud, pp.voxel)?;
    }
    if pp.remove_ground && !cloud.is_empty() {
        let split = remove_ground_cells(
            &cloud,
            k,
            &cal.lidar_to_camera,
            pp.cone_grid[0],
            pp.cone_grid[1],
            &pp.ground,
            Exec::Sequential,
        )?;
        cloud = PointCloud::new(split.kept.iter().map(|&i| cloud.points[i]).collect());
    }
    let depth = match &cfg.paths.depth {
        Some(p) => filter_depth(&DepthMap::load_pgm(p)?, pp.depth_filter_window, CropRect::full(k.width, k.height))?,
        None => DepthMap::filled(k.width, k.height, 0.0),
    };
    let mask = match &cfg.paths.mask {
        Some(p) => LabelMask::load_pgm(p)?,
        None => LabelMask::background(k.width, k.height),
    };
    let opts = ScoreOptions { exec: Exec::Sequential, ..cfg.score };
    Ok(score_cloud(&cloud, &mask, &depth, None, k, &cal.lidar_to_camera, &cfg.weights(), &opts)?)
}

pub fn cmd_fuse(cfg: &PipelineConfig, out: Option<&Path>) -> Result<(), CliError> {
    emit(out, &canonical(&fuse(cfg)?)?)
}

pub fn cmd_annotate(cfg: &PipelineConfig, out: &Path, markers_out: Option<&Path>) -> Result<(), CliError> {
    let image = read_ppm(cfg.require("image", &cfg.paths.image)?)?;
    let mask = match &cfg.paths.mask {
        Some(p) => LabelMask::load_pgm(p)?,
        None => LabelMask::background(image.width(), image.height()),
    };
    let scored = load_scored(cfg)?;
    let annotated = annotate(&image, &select_markers(&mask, &scored))?;
    write_ppm(out, &annotated.image)?;
    emit(markers_out, &canonical(&annotated.markers)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Strategy {
    /// One prompt with the annotated scene, one reply.
    Direct,
    /// ROI refinement until convergence.
    Iterative,
}

fn load_image(cfg: &PipelineConfig) -> Result<Option<RgbImage>, CliError> {
    cfg.paths.image.as_deref().map(read_ppm).transpose().map_err(CliError::from)
}

pub fn cmd_plan(cfg: &PipelineConfig, strategy: Strategy, out: Option<&Path>) -> Result<(), CliError> {
    let backend = connect(cfg.vlm()?)?;
    let markers = load_markers(cfg)?;
    let image = load_image(cfg)?;
    let report = match strategy {
        Strategy::Direct => {
            let prompt = build_initial_prompt(&cfg.task, &cfg.template(TemplateKind::VlmDirect)?, &markers)?.prompt_text;
            let mut msg = ChatMessage::user(prompt.clone());
            if let Some(img) = &image {
                msg = msg.with_image(ImageAttachment::png(&encode_png(img)?));
            }
            let raw = backend.send_chat(&[msg])?;
            let plan = parse_vlm_plan(&raw)?;
            json!({
                "strategy": "direct",
                "plan": plan,
                "transcript": [{"n": 1, "prompt": prompt, "response_raw": raw}],
            })
        }
        Strategy::Iterative => {
            let frame = Frame { image, scored: load_scored(cfg)?, markers };
            let mut frames = VecFrames::new(vec![frame]);
            let template = cfg.template(TemplateKind::VlmIterative)?;
            let inter = run_interactive(&cfg.task, &template, &mut frames, backend.as_ref(), &cfg.convergence)?;
            let plan = inter.transcript.last().and_then(|t| parse_vlm_plan(&t.response_raw).ok());
            json!({
                "strategy": "iterative",
                "plan": plan,
                "selection": inter.selection,
                "transcript": inter.transcript,
            })
        }
    };
    emit(out, &canonical(&report)?)
}

pub fn cmd_supervise(cfg: &PipelineConfig, out: Option<&Path>) -> Result<(), CliError> {
    let scene = SceneModel::load(cfg.require("scene", &cfg.paths.scene)?)?;
    let vlm = connect(cfg.vlm()?)?;
    let slm = cfg.slm.as_ref().map(connect).transpose()?;
    let reviewer = match &slm {
        Some(b) => Reviewer::Model(b.as_ref()),
        None => Reviewer::Rules,
    };
    let templates = SessionTemplates {
        vlm: cfg.template(TemplateKind::VlmDirect)?,
        slm: cfg.template(TemplateKind::SlmReview)?,
        correction: cfg.template(TemplateKind::Correction)?,
        scene_detail: cfg.template(TemplateKind::SceneDetail)?,
    };
    let mut report = run_supervision(&cfg.task, &scene, vlm.as_ref(), reviewer, &templates, &cfg.constraints, &cfg.loop_params)
        .map_err(|abort| {
            eprintln!("session aborted after {} review(s)", abort.history.len());
            CliError::from(abort.error)
        })?;
    if let Some(path) = &cfg.paths.archive {
        report.archive.id = Some(archive_write(&report.archive, path)?);
    }
    emit(out, &canonical(&report)?)?;
    if report.accepted() {
        Ok(())
    } else {
        Err(CliError::TaskFailed(format!("session ended in {:?}", report.archive.outcome)))
    }
}

pub fn cmd_simulate(cfg: &PipelineConfig, task: u8, out: Option<&Path>, trace: Option<&Path>) -> Result<(), CliError> {
    let scene = SceneModel::load(cfg.require("scene", &cfg.paths.scene)?)?;
    let plan_path = cfg.require("plan", &cfg.paths.plan)?;
    let plan = parse_vlm_plan(&std::fs::read_to_string(plan_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", plan_path.display())))?;
    let goal = builtin_goals(task, &scene, &cfg.goals)?;
    let outcome = run_plan(&scene, &plan, &goal, &cfg.constraints);
    if let Some(t) = trace {
        outcome.write_trace(t)?;
    }
    emit(out, &canonical(&outcome)?)?;
    if outcome.success {
        Ok(())
    } else {
        Err(CliError::TaskFailed(format!("task {task} failed")))
    }
}

pub struct EvalOverrides {
    pub runs: Option<usize>,
    pub no_reviewer: bool,
    pub fault_rate: Option<f64>,
}

pub fn cmd_eval(cfg: &PipelineConfig, o: &EvalOverrides, out: Option<&Path>) -> Result<(), CliError> {
    let mut h = cfg.eval.clone();
    if let Some(r) = o.runs {
        h.runs = r;
    }
    if o.no_reviewer {
        h.reviewer = false;
    }
    if let Some(f) = o.fault_rate {
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::Config(format!("fault rate {f} is outside [0, 1]")));
        }
        h.fault_rate = f;
    }
    emit(out, &canonical(&evaluate(&h)?)?)
}

/// Dataset as JSONL, one sorted-key record per line.
pub fn cmd_augment(cfg: &PipelineConfig, count: usize, seed: Option<u64>, out: Option<&Path>) -> Result<(), CliError> {
    let samples =
        generate_dataset(Composition::scaled(count), seed.unwrap_or(cfg.seed), &cfg.constraints, Exec::Sequential)?;
    let mut text = String::new();
    for s in &samples {
        text.push_str(&serde_json::to_string(&serde_json::to_value(s)?)?);
        text.push('\n');
    }
    emit(out, &text)
}
