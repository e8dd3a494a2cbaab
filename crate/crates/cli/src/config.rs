use std::path::{Path, PathBuf};

use groundloop::confidence::{weight_profile_for_task, ScoreOptions, TaskKind, WeightProfile};
use groundloop::evaluation::HarnessConfig;
use groundloop::gateway::{builtin, ModelBackendConfig, PromptTemplate, TemplateKind};
use groundloop::preprocess::GroundParams;
use groundloop::simulator::GoalParams;
use groundloop::supervision::{ConstraintSet, LoopParams};
use groundloop::synthesis::ConvergenceParams;
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub calibration: Option<PathBuf>,
    pub cloud: Option<PathBuf>,
    pub depth: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub image: Option<PathBuf>,
    /// Directory of `<template name>.txt` overrides.
    pub templates: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    /// Output of `fuse`, read by `annotate` and `plan`.
    pub scored: Option<PathBuf>,
    /// Marker JSON from `annotate`, read by `plan`.
    pub markers: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Voxel edge for downsampling, meters; 0 disables it.
    pub voxel: f64,
    pub depth_filter_window: usize,
    pub remove_ground: bool,
    pub ground: GroundParams,
    /// Azimuth × elevation cells.
    pub cone_grid: [usize; 2],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { voxel: 0.0, depth_filter_window: 5, remove_ground: false, ground: GroundParams::default(), cone_grid: [16, 12] }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub vlm: Option<ModelBackendConfig>,
    /// Without it the rule-based reviewer is used.
    pub slm: Option<ModelBackendConfig>,
    pub task: String,
    pub task_kind: Option<TaskKind>,
    /// Overrides `task_kind`.
    pub weights: Option<WeightProfile>,
    pub score: ScoreOptions,
    pub preprocess: PreprocessConfig,
    pub convergence: ConvergenceParams,
    #[serde(rename = "loop")]
    pub loop_params: LoopParams,
    pub constraints: ConstraintSet,
    pub goals: GoalParams,
    pub eval: HarnessConfig,
    pub seed: u64,
}

/// Replaces `${NAME}` with the environment variable's value.
fn interpolate(s: &str) -> Result<String, CliError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find("${") {
        out.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        let end = after.find('}').ok_or_else(|| CliError::Config(format!("unterminated `${{` in {s:?}")))?;
        let name = &after[..end];
        let value = std::env::var(name).map_err(|_| CliError::Config(format!("environment variable {name} is not set")))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(v: Value) -> Result<Value, CliError> {
    Ok(match v {
        Value::String(s) => Value::String(interpolate(&s)?),
        Value::Array(a) => Value::Array(a.into_iter().map(interpolate_value).collect::<Result<_, _>>()?),
        Value::Object(m) => {
            Value::Object(m.into_iter().map(|(k, v)| Ok((k, interpolate_value(v)?))).collect::<Result<_, CliError>>()?)
        }
        other => other,
    })
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p.as_mut() {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn must_exist(name: &str, p: &Option<PathBuf>) -> Result<(), CliError> {
    match p {
        Some(path) if !path.exists() => Err(CliError::Config(format!("{name}: {} does not exist", path.display()))),
        _ => Ok(()),
    }
}

impl PipelineConfig {
    /// Parses the config, resolves relative paths against its directory and
    /// checks that every referenced input exists. Derived artifacts
    /// (`scored`, `markers`, `archive`) are checked when a command reads them.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, CliError> {
        let raw: Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg: PipelineConfig =
            serde_json::from_value(interpolate_value(raw)?).map_err(|e| CliError::Config(e.to_string()))?;
        let p = &mut cfg.paths;
        for slot in [
            &mut p.calibration,
            &mut p.cloud,
            &mut p.depth,
            &mut p.mask,
            &mut p.image,
            &mut p.templates,
            &mut p.archive,
            &mut p.scene,
            &mut p.plan,
            &mut p.scored,
            &mut p.markers,
        ] {
            resolve(base, slot);
        }
        for b in [cfg.vlm.as_mut(), cfg.slm.as_mut()].into_iter().flatten() {
            resolve(base, &mut b.script);
        }
        let p = &cfg.paths;
        for (name, path) in [
            ("paths.calibration", &p.calibration),
            ("paths.cloud", &p.cloud),
            ("paths.depth", &p.depth),
            ("paths.mask", &p.mask),
            ("paths.image", &p.image),
            ("paths.templates", &p.templates),
            ("paths.scene", &p.scene),
            ("paths.plan", &p.plan),
        ] {
            must_exist(name, path)?;
        }
        must_exist("vlm.script", &cfg.vlm.as_ref().and_then(|b| b.script.clone()))?;
        must_exist("slm.script", &cfg.slm.as_ref().and_then(|b| b.script.clone()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn weights(&self) -> WeightProfile {
        self.weights.unwrap_or_else(|| weight_profile_for_task(self.task_kind.unwrap_or(TaskKind::Balanced)))
    }

    /// `templates/<name>.txt` if present, else the built-in template.
    pub fn template(&self, kind: TemplateKind) -> Result<PromptTemplate, CliError> {
        let t = builtin(kind);
        match &self.paths.templates {
            Some(dir) if dir.join(format!("{}.txt", t.name)).is_file() => {
                Ok(PromptTemplate::load(dir.join(format!("{}.txt", t.name)))?)
            }
            _ => Ok(t),
        }
    }

    pub fn require<'a>(&self, name: &str, p: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        let path = p.as_deref().ok_or_else(|| CliError::Config(format!("paths.{name} is required")))?;
        if !path.exists() {
            return Err(CliError::Input(format!("paths.{name}: {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn vlm(&self) -> Result<&ModelBackendConfig, CliError> {
        self.vlm.as_ref().ok_or_else(|| CliError::Config("`vlm` backend is required".into()))
    }
}
