use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::Vec3;
use crate::simulator::Outcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub name: String,
    pub predicted: Vec3,
    pub ground_truth: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiouParams {
    /// Voxel edge, meters.
    pub voxel: f64,
    /// Localization gate, meters; balls have radius `tol / 2`.
    pub tol: f64,
}

impl Default for MiouParams {
    fn default() -> Self {
        Self { voxel: 0.05, tol: 0.2 }
    }
}

/// Grid cells (centers at `origin + voxel * (i, j, k)`) inside the ball.
fn ball_cells(origin: Vec3, center: Vec3, radius: f64, voxel: f64) -> HashSet<[i64; 3]> {
    let rel = center - origin;
    let lo = |c: f64| ((c - radius) / voxel).floor() as i64;
    let hi = |c: f64| ((c + radius) / voxel).ceil() as i64;
    let mut out = HashSet::new();
    for i in lo(rel.x)..=hi(rel.x) {
        for j in lo(rel.y)..=hi(rel.y) {
            for k in lo(rel.z)..=hi(rel.z) {
                let p = Vec3::new(i as f64 * voxel, j as f64 * voxel, k as f64 * voxel);
                if p.distance(rel) <= radius + 1e-12 {
                    out.insert([i, j, k]);
                }
            }
        }
    }
    out
}

/// IoU of one prediction: zero at or beyond the gate, otherwise the
/// voxel IoU of two balls on a grid anchored at the ground truth.
pub fn localization_iou(pred: Vec3, gt: Vec3, p: &MiouParams) -> f64 {
    // Also gates NaN distances.
    if pred.distance(gt).partial_cmp(&p.tol) != Some(std::cmp::Ordering::Less) {
        return 0.0;
    }
    let r = p.tol / 2.0;
    let a = ball_cells(gt, gt, r, p.voxel);
    let b = ball_cells(gt, pred, r, p.voxel);
    let inter = a.intersection(&b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

pub fn miou(locs: &[Localization], p: &MiouParams) -> Result<f64, EvalError> {
    if locs.is_empty() {
        return Err(EvalError::EmptyInput("localizations"));
    }
    Ok(locs.iter().map(|l| localization_iou(l.predicted, l.ground_truth, p)).sum::<f64>() / locs.len() as f64)
}

/// Lowercase, whitespace runs collapsed to one space, trimmed.
pub fn normalize_token(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `2·LCS / (|P| + |G|)` over normalized action strings.
pub fn rouge_l<S: AsRef<str>>(pred: &[S], gt: &[S]) -> f64 {
    if pred.is_empty() && gt.is_empty() {
        return 1.0;
    }
    let p: Vec<String> = pred.iter().map(|s| normalize_token(s.as_ref())).collect();
    let g: Vec<String> = gt.iter().map(|s| normalize_token(s.as_ref())).collect();
    2.0 * lcs_len(&p, &g) as f64 / (p.len() + g.len()) as f64
}

/// Fraction of runs whose every command parsed and executed.
pub fn executability(results: &[bool]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyInput("execution results"));
    }
    Ok(results.iter().filter(|&&ok| ok).count() as f64 / results.len() as f64)
}

pub fn tsr(outcomes: &[Outcome]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyInput("outcomes"));
    }
    Ok(outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub miou: f64,
    pub rouge_l: f64,
    pub executability: f64,
    pub tsr: f64,
    pub n: usize,
    pub successes: usize,
    pub executable: usize,
}
