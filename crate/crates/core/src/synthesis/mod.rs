//! 2D prompt synthesis: pick one reliable 3D point per mask, paint it onto
//! the image, and run the ROI-refinement conversation with a VLM.

mod interactive;

use std::cmp::Ordering;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::confidence::ScoredPoint;
use crate::gateway::{Bindings, GatewayError, PromptTemplate};
use crate::geometry::{Pixel, Vec3};
use crate::preprocess::LabelMask;

pub use interactive::{
    run_interactive, update_prompt, Frame, FrameSource, Interaction, TranscriptEntry, VecFrames,
};

/// Candidates per mask.
pub const NN_CANDIDATES: usize = 4;
pub const MARKER_RADIUS: i64 = 4;
pub const MARKER_COLOR: Rgb<u8> = Rgb([255, 0, 0]);

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("mask {0} has no pixels")]
    EmptyMask(u32),
    #[error("no candidate points")]
    NoCandidates,
    #[error("pixel {0:?} is outside the {1}×{2} image")]
    OutOfBounds(Pixel, u32, u32),
    #[error("response has no usable roi")]
    NoRoi,
    #[error("no frames available")]
    NoFrames,
    #[error("no convergence within {} iterations", .0.transcript.len())]
    MaxIterationsExceeded(Box<Interaction>),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub label: String,
    pub pixel: Pixel,
    pub position: Vec3,
    pub confidence: f64,
    pub mask_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub image: RgbImage,
    pub markers: Vec<Marker>,
}

/// Axis-aligned pixel box. Serialized as `{"center": [u, v], "extent": [w, h]}`
/// where `extent` holds the half sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub center: Pixel,
    #[serde(rename = "extent")]
    pub half_extent: [f64; 2],
}

impl RoiBox {
    pub fn new(center: Pixel, half_w: f64, half_h: f64) -> Self {
        Self { center, half_extent: [half_w, half_h] }
    }

    pub fn contains(&self, p: Pixel) -> bool {
        (p.u - self.center.u).abs() <= self.half_extent[0] && (p.v - self.center.v).abs() <= self.half_extent[1]
    }

    /// `None` unless the value has a finite 2-vector center and a finite,
    /// non-negative 2-vector extent.
    pub fn from_value(v: &Value) -> Option<Self> {
        let pair = |key: &str| -> Option<[f64; 2]> {
            let a = v.get(key)?.as_array()?;
            if a.len() != 2 {
                return None;
            }
            let x = a[0].as_f64().filter(|x| x.is_finite())?;
            let y = a[1].as_f64().filter(|y| y.is_finite())?;
            Some([x, y])
        };
        let c = pair("center")?;
        let e = pair("extent")?;
        if e[0] < 0.0 || e[1] < 0.0 {
            return None;
        }
        Some(Self { center: Pixel::new(c[0], c[1]), half_extent: e })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptState {
    pub iteration: usize,
    pub prompt_text: String,
    pub responses: Vec<String>,
    pub prior_roi: Option<RoiBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceParams {
    /// Pixels.
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self { epsilon: 2.0, max_iter: 5 }
    }
}

pub fn mask_centroid(mask: &LabelMask, id: u32) -> Result<Pixel, SynthesisError> {
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
    for (u, v) in mask.pixels_of(id) {
        su += u as f64;
        sv += v as f64;
        n += 1;
    }
    if n == 0 || id == 0 {
        return Err(SynthesisError::EmptyMask(id));
    }
    Ok(Pixel::new(su / n as f64, sv / n as f64))
}

fn by_confidence_then_index(a: &ScoredPoint, b: &ScoredPoint) -> Ordering {
    b.confidence.total_cmp(&a.confidence).then(a.point_index.cmp(&b.point_index))
}

/// The `k` points nearest to `centroid` in pixel space, nearest first,
/// ties by lower index.
pub fn nearest_candidates(centroid: Pixel, scored: &[ScoredPoint], k: usize) -> Result<Vec<ScoredPoint>, SynthesisError> {
    if scored.is_empty() {
        return Err(SynthesisError::NoCandidates);
    }
    let mut keyed: Vec<(f64, usize, usize)> =
        scored.iter().enumerate().map(|(slot, s)| (s.pixel.distance_squared(centroid), s.point_index, slot)).collect();
    let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(keyed.len());
    if k < keyed.len() && k > 0 {
        keyed.select_nth_unstable_by(k - 1, cmp);
        keyed.truncate(k);
    }
    keyed.sort_by(cmp);
    Ok(keyed.into_iter().take(k).map(|(_, _, slot)| scored[slot].clone()).collect())
}

/// Highest confidence; ties by lower index.
pub fn select_reliable(candidates: &[ScoredPoint]) -> Result<ScoredPoint, SynthesisError> {
    candidates.iter().min_by(|a, b| by_confidence_then_index(a, b)).cloned().ok_or(SynthesisError::NoCandidates)
}

/// Best point inside `roi`; if none projects inside, the point nearest the
/// ROI center.
pub fn optimal_depth(roi: &RoiBox, scored: &[ScoredPoint]) -> Result<ScoredPoint, SynthesisError> {
    if scored.is_empty() {
        return Err(SynthesisError::NoCandidates);
    }
    let inside: Vec<ScoredPoint> = scored.iter().filter(|s| roi.contains(s.pixel)).cloned().collect();
    if inside.is_empty() {
        return Ok(nearest_candidates(roi.center, scored, 1)?.remove(0));
    }
    select_reliable(&inside)
}

/// One marker per mask: centroid, four nearest projected points, most
/// confident of those. Masks without any scored point are skipped.
pub fn select_markers(mask: &LabelMask, scored: &[ScoredPoint]) -> Vec<(u32, ScoredPoint)> {
    if scored.is_empty() {
        return Vec::new();
    }
    mask.ids()
        .into_iter()
        .filter_map(|id| {
            let c = mask_centroid(mask, id).ok()?;
            let cands = nearest_candidates(c, scored, NN_CANDIDATES).ok()?;
            Some((id, select_reliable(&cands).ok()?))
        })
        .collect()
}

/// Paints a red disk per selection and records markers in mask-id order.
pub fn annotate(image: &RgbImage, selections: &[(u32, ScoredPoint)]) -> Result<AnnotatedImage, SynthesisError> {
    let (w, h) = image.dimensions();
    let mut sorted: Vec<&(u32, ScoredPoint)> = selections.iter().collect();
    sorted.sort_by_key(|(id, sp)| (*id, sp.point_index));
    let mut img = image.clone();
    let mut markers = Vec::with_capacity(sorted.len());
    for (id, sp) in sorted {
        let p = sp.pixel;
        if !(p.u >= 0.0 && p.v >= 0.0 && p.u < w as f64 && p.v < h as f64) {
            return Err(SynthesisError::OutOfBounds(p, w, h));
        }
        let (cu, cv) = (p.u.round() as i64, p.v.round() as i64);
        for dv in -MARKER_RADIUS..=MARKER_RADIUS {
            for du in -MARKER_RADIUS..=MARKER_RADIUS {
                if du * du + dv * dv > MARKER_RADIUS * MARKER_RADIUS {
                    continue;
                }
                let (x, y) = (cu + du, cv + dv);
                if x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                    img.put_pixel(x as u32, y as u32, MARKER_COLOR);
                }
            }
        }
        markers.push(Marker {
            label: sp.position.to_string(),
            pixel: p,
            position: sp.position,
            confidence: sp.confidence,
            mask_id: *id,
        });
    }
    Ok(AnnotatedImage { image: img, markers })
}

/// Marker section of a prompt, one line per marker.
pub fn marker_lines(markers: &[Marker]) -> String {
    if markers.is_empty() {
        return "(none)".into();
    }
    markers
        .iter()
        .map(|m| format!("- object {}: {} (pixel [{:.1}, {:.1}], confidence {:.3})", m.mask_id, m.label, m.pixel.u, m.pixel.v, m.confidence))
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn base_bindings(task: &str, markers: &[Marker]) -> Bindings {
    let mut b = Bindings::new();
    b.insert("T".into(), task.to_string());
    b.insert("MARKERS".into(), marker_lines(markers));
    b.insert("FEEDBACK".into(), "(none)".into());
    b.insert("HISTORY".into(), "(none)".into());
    b.insert("ROI".into(), "(none)".into());
    b
}

pub fn build_initial_prompt(task: &str, template: &PromptTemplate, markers: &[Marker]) -> Result<PromptState, SynthesisError> {
    let text = template.render(&base_bindings(task, markers))?;
    Ok(PromptState { iteration: 1, prompt_text: text, responses: Vec::new(), prior_roi: None })
}

/// ROI from a raw model response.
pub fn extract_roi(response: &str) -> Result<RoiBox, SynthesisError> {
    let v: Value = serde_json::from_str(response).map_err(|_| SynthesisError::NoRoi)?;
    v.get("roi").and_then(RoiBox::from_value).ok_or(SynthesisError::NoRoi)
}

/// Completion flag from a raw response: only `"flag": "complete"` counts.
pub fn response_flag(response: &str) -> bool {
    serde_json::from_str::<Value>(response)
        .ok()
        .and_then(|v| v.get("flag").and_then(Value::as_str).map(|f| f == "complete"))
        .unwrap_or(false)
}

pub fn converged(prev: Option<&RoiBox>, cur: &RoiBox, flag: bool, p: &ConvergenceParams) -> bool {
    match prev {
        Some(prev) => flag && prev.center.distance(cur.center) < p.epsilon,
        None => false,
    }
}
