use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{
    base_bindings, build_initial_prompt, converged, extract_roi, optimal_depth, response_flag, ConvergenceParams,
    Marker, PromptState, RoiBox, SynthesisError,
};
use crate::confidence::ScoredPoint;
use crate::gateway::{ChatMessage, ImageAttachment, ModelBackend, PromptTemplate};
use crate::raster;

/// One capture: the image shown to the model and the points scored on it.
#[derive(Debug, Clone, Default)]
pub struct Frame {
    pub image: Option<RgbImage>,
    pub scored: Vec<ScoredPoint>,
    pub markers: Vec<Marker>,
}

pub trait FrameSource {
    /// Next capture, or `None` when the source is exhausted.
    fn next_frame(&mut self) -> Option<Frame>;
}

/// Frames served from memory in order.
#[derive(Debug, Default)]
pub struct VecFrames {
    frames: std::collections::VecDeque<Frame>,
}

impl VecFrames {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self { frames: frames.into() }
    }
}

impl FrameSource for VecFrames {
    fn next_frame(&mut self) -> Option<Frame> {
        self.frames.pop_front()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub n: usize,
    pub prompt: String,
    pub response_raw: String,
    pub roi: Option<RoiBox>,
    pub selected_point: Option<ScoredPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    /// Last ROI-driven selection; `None` only if no reply ever had a usable ROI.
    pub selection: Option<ScoredPoint>,
    pub transcript: Vec<TranscriptEntry>,
}

/// Next prompt: iteration + 1, latest reply appended to the history and
/// the ROI section re-bound.
pub fn update_prompt(
    state: &PromptState,
    template: &PromptTemplate,
    task: &str,
    markers: &[Marker],
    response: &str,
    roi: Option<RoiBox>,
) -> Result<PromptState, SynthesisError> {
    let mut responses = state.responses.clone();
    responses.push(response.to_string());
    let prior_roi = roi.or(state.prior_roi);
    let mut b = base_bindings(task, markers);
    b.insert(
        "HISTORY".into(),
        responses
            .iter()
            .enumerate()
            .map(|(i, r)| format!("\n- <Iteration {}>: {}", i + 1, r.trim()))
            .collect::<String>(),
    );
    if let Some(r) = prior_roi {
        b.insert("ROI".into(), serde_json::to_string(&r).expect("roi serializes"));
    }
    Ok(PromptState { iteration: state.iteration + 1, prompt_text: template.render(&b)?, responses, prior_roi })
}

fn wants_recapture(raw: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(raw)
        .ok()
        .and_then(|v| v.get("recapture").and_then(serde_json::Value::as_bool))
        .unwrap_or(false)
}

/// Prompt → reply → ROI → best point, until the ROI settles with the
/// completion flag set or `max_iter` replies have been consumed.
pub fn run_interactive(
    task: &str,
    template: &PromptTemplate,
    frames: &mut dyn FrameSource,
    backend: &dyn ModelBackend,
    params: &ConvergenceParams,
) -> Result<Interaction, SynthesisError> {
    let mut frame = frames.next_frame().ok_or(SynthesisError::NoFrames)?;
    let mut state = build_initial_prompt(task, template, &frame.markers)?;
    let mut prev_roi: Option<RoiBox> = None;
    let mut best: Option<ScoredPoint> = None;
    let mut transcript = Vec::new();

    for n in 1..=params.max_iter {
        let mut msg = ChatMessage::user(state.prompt_text.clone());
        if let Some(img) = &frame.image {
            msg = msg.with_image(ImageAttachment::png(&raster::encode_png(img)?));
        }
        let raw = backend.send_chat(&[msg])?;
        let roi = extract_roi(&raw).ok();
        let selected = roi.and_then(|r| optimal_depth(&r, &frame.scored).ok());
        if selected.is_some() {
            best.clone_from(&selected);
        }
        transcript.push(TranscriptEntry {
            n,
            prompt: state.prompt_text.clone(),
            response_raw: raw.clone(),
            roi,
            selected_point: selected,
        });

        if let Some(cur) = roi {
            if converged(prev_roi.as_ref(), &cur, response_flag(&raw), params) {
                return Ok(Interaction { selection: best, transcript });
            }
            prev_roi = Some(cur);
        }
        if n == params.max_iter {
            break;
        }
        if wants_recapture(&raw) {
            if let Some(f) = frames.next_frame() {
                frame = f;
            }
        }
        state = update_prompt(&state, template, task, &frame.markers, &raw, roi)?;
    }
    Err(SynthesisError::MaxIterationsExceeded(Box::new(Interaction { selection: best, transcript })))
}
