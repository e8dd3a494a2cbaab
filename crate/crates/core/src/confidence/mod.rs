//! Per-point reliability from four normalized entropy terms:
//! segmentation consistency (H1), local geometry (H2), depth noise (H3)
//! and temporal stability (H4). `C = exp(-Σ λn·Hn)`.

mod output;
mod score;

use std::f64::consts::E;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pixel, Vec3};
use crate::linalg::{mean_and_covariance, to_na};

pub use output::{confidence_color, read_scored, render_overlay, write_scored};
pub use score::{score_cloud, PixelDistance, ScoreOptions};

/// Added to the covariance diagonal before inversion.
pub const COVARIANCE_REG: f64 = 1e-6;
/// Lower bound on per-frame normalizers.
pub const NORMALIZER_FLOOR: f64 = 1e-12;
/// Neighbourhoods smaller than this get no geometric term.
pub const MIN_NEIGHBORS: usize = 4;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("probability {0} outside [0, 1]")]
    Domain(f64),
    #[error("{0} neighbours, need at least {MIN_NEIGHBORS}")]
    InsufficientNeighbors(usize),
    #[error("no valid depth in the neighbourhood")]
    NoValidDepth,
    #[error("invalid weight profile: {0}")]
    InvalidWeights(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Task weights λ1..λ4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl WeightProfile {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64, lambda4: f64) -> Result<Self, ConfidenceError> {
        let w = Self { lambda1, lambda2, lambda3, lambda4 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ConfidenceError> {
        let l = self.as_array();
        if l.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(ConfidenceError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        if l.iter().all(|&x| x == 0.0) {
            return Err(ConfidenceError::InvalidWeights("at least one weight must be positive".into()));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            lambda1: self.lambda1 * alpha,
            lambda2: self.lambda2 * alpha,
            lambda3: self.lambda3 * alpha,
            lambda4: self.lambda4 * alpha,
        }
    }
}

impl Default for WeightProfile {
    fn default() -> Self {
        weight_profile_for_task(TaskKind::Balanced)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    HighPrecision,
    Dynamic,
    Cluttered,
    Balanced,
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "highprecision" => Ok(Self::HighPrecision),
            "dynamic" => Ok(Self::Dynamic),
            "cluttered" => Ok(Self::Cluttered),
            "balanced" => Ok(Self::Balanced),
            _ => Err(format!("unknown task kind '{s}'")),
        }
    }
}

pub fn weight_profile_for_task(kind: TaskKind) -> WeightProfile {
    let (a, b, c, d) = match kind {
        TaskKind::HighPrecision => (2.0, 2.0, 1.0, 1.0),
        TaskKind::Dynamic => (1.0, 1.0, 1.0, 2.0),
        TaskKind::Cluttered => (1.0, 1.0, 2.0, 1.0),
        TaskKind::Balanced => (1.0, 1.0, 1.0, 1.0),
    };
    WeightProfile { lambda1: a, lambda2: b, lambda3: c, lambda4: d }
}

/// `(H1, H2, H3, H4)`, each in `[0, 1]`. Serialized as a 4-element array.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct EntropyVector {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
}

impl EntropyVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.h1, self.h2, self.h3, self.h4]
    }
}

impl From<[f64; 4]> for EntropyVector {
    fn from([h1, h2, h3, h4]: [f64; 4]) -> Self {
        Self { h1, h2, h3, h4 }
    }
}

impl From<EntropyVector> for [f64; 4] {
    fn from(h: EntropyVector) -> Self {
        h.as_array()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    #[serde(rename = "index")]
    pub point_index: usize,
    pub position: Vec3,
    pub pixel: Pixel,
    pub mask_id: u32,
    #[serde(rename = "H")]
    pub entropies: EntropyVector,
    #[serde(rename = "C")]
    pub confidence: f64,
}

/// Positions of one point over `T ≥ 1` consecutive frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTrack {
    pub positions: Vec<Vec3>,
}

impl PointTrack {
    pub fn frames(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationContext {
    /// Scene diameter bound, meters.
    pub d_max: f64,
    /// Largest local depth variance in the frame, m².
    pub sigma_max: f64,
    /// Largest Mahalanobis value in the batch.
    pub mahalanobis_max: f64,
}

impl NormalizationContext {
    pub fn new(d_max: f64, sigma_max: f64, mahalanobis_max: f64) -> Self {
        Self {
            d_max: d_max.max(NORMALIZER_FLOOR),
            sigma_max: sigma_max.max(NORMALIZER_FLOOR),
            mahalanobis_max: mahalanobis_max.max(NORMALIZER_FLOOR),
        }
    }
}

/// `e · (−p ln p)`, with `0 ln 0 = 0`. Peaks at 1 for `p = 1/e`.
pub fn norm_entropy(p: f64) -> Result<f64, ConfidenceError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ConfidenceError::Domain(p));
    }
    Ok(entropy_unchecked(p))
}

#[inline]
fn entropy_unchecked(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        (-E * p * p.ln()).clamp(0.0, 1.0)
    }
}

#[inline]
fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

pub fn spatial_entropy(pixel: Pixel, centroid: Pixel) -> f64 {
    spatial_entropy_from_distance(pixel.distance(centroid))
}

pub(crate) fn spatial_entropy_from_distance(d: f64) -> f64 {
    entropy_unchecked(clamp01(1.0 / (1.0 + d)))
}

/// `(p − μ)ᵀ (Σ + εI)⁻¹ (p − μ)` over `neighbors`; no square root.
pub fn mahalanobis_squared(p: Vec3, neighbors: &[Vec3]) -> Result<f64, ConfidenceError> {
    if neighbors.len() < MIN_NEIGHBORS {
        return Err(ConfidenceError::InsufficientNeighbors(neighbors.len()));
    }
    let (mu, cov) = mean_and_covariance(neighbors);
    let reg = cov + Matrix3::identity() * COVARIANCE_REG;
    let d = to_na(p - mu);
    let x = match reg.cholesky() {
        Some(ch) => ch.solve(&d),
        None => reg.try_inverse().unwrap_or_else(Matrix3::zeros) * d,
    };
    Ok(d.dot(&x).max(0.0))
}

pub fn geometric_entropy(p: Vec3, neighbors: &[Vec3], ctx: &NormalizationContext) -> Result<f64, ConfidenceError> {
    let dm = mahalanobis_squared(p, neighbors)?;
    Ok(entropy_unchecked(clamp01(dm / ctx.mahalanobis_max.max(NORMALIZER_FLOOR))))
}

/// Population variance.
pub fn depth_variance(values: &[f64]) -> Result<f64, ConfidenceError> {
    if values.is_empty() {
        return Err(ConfidenceError::NoValidDepth);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

pub fn depth_entropy(local_depth_values: &[f64], ctx: &NormalizationContext) -> Result<f64, ConfidenceError> {
    let var = depth_variance(local_depth_values)?;
    Ok(entropy_unchecked(clamp01(var / ctx.sigma_max.max(NORMALIZER_FLOOR))))
}

/// Mean per-frame displacement over `d_max`.
pub fn temporal_instability(track: &PointTrack, d_max: f64) -> f64 {
    let t = track.positions.len();
    if t < 2 {
        return 0.0;
    }
    let total: f64 = track.positions.windows(2).map(|w| w[1].distance(w[0])).sum();
    total / ((t - 1) as f64 * d_max.max(NORMALIZER_FLOOR))
}

pub fn temporal_entropy(track: &PointTrack, ctx: &NormalizationContext) -> f64 {
    let s = temporal_instability(track, ctx.d_max);
    entropy_unchecked(clamp01(s / (s + 1.0)))
}

pub fn confidence_score(h: &EntropyVector, w: &WeightProfile) -> f64 {
    let s: f64 = h.as_array().iter().zip(w.as_array()).map(|(h, l)| h * l).sum();
    (-s).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_endpoints_and_peak() {
        assert_eq!(norm_entropy(0.0).unwrap(), 0.0);
        assert_eq!(norm_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(norm_entropy(1.0 / E).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(norm_entropy(1.5), Err(ConfidenceError::Domain(_))));
        assert!(norm_entropy(-0.1).is_err());
    }

    #[test]
    fn spatial_cases() {
        let c = Pixel::new(10.0, 10.0);
        assert_eq!(spatial_entropy(c, c), 0.0);
        assert_abs_diff_eq!(spatial_entropy(Pixel::new(10.0 + E - 1.0, 10.0), c), 1.0, epsilon = 1e-12);
        assert!(spatial_entropy(Pixel::new(1e9, 0.0), c) < 1e-6);
    }

    #[test]
    fn geometric_cases() {
        // ±√3 along each axis: zero mean, identity population covariance.
        let s = 3f64.sqrt();
        let nb: Vec<Vec3> = (0..3)
            .flat_map(|a| [Vec3::ZERO.with_component(a, s), Vec3::ZERO.with_component(a, -s)])
            .collect();
        let ctx = NormalizationContext::new(1.0, 1.0, E);
        // Oracle: direct solve of the regularized identity.
        let expected = 1.0 / (1.0 + COVARIANCE_REG);
        assert_abs_diff_eq!(mahalanobis_squared(Vec3::new(1.0, 0.0, 0.0), &nb).unwrap(), expected, epsilon = 1e-12);
        let h = geometric_entropy(Vec3::new(1.0, 0.0, 0.0), &nb, &ctx).unwrap();
        assert_abs_diff_eq!(h, 1.0, epsilon = 1e-9);
        assert_eq!(geometric_entropy(Vec3::ZERO, &nb, &ctx).unwrap(), 0.0);
        assert!(matches!(
            geometric_entropy(Vec3::ZERO, &nb[..3], &ctx),
            Err(ConfidenceError::InsufficientNeighbors(3))
        ));
    }

    #[test]
    fn depth_cases() {
        let ctx = NormalizationContext::new(1.0, 0.5, 1.0);
        assert_eq!(depth_entropy(&[2.0; 9], &ctx).unwrap(), 0.0);
        // Two values ±a have population variance a².
        let a = (0.5 / E).sqrt();
        assert_abs_diff_eq!(depth_entropy(&[1.0 - a, 1.0 + a], &ctx).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(depth_entropy(&[0.0, 10.0], &ctx).unwrap(), 0.0);
        assert!(matches!(depth_entropy(&[], &ctx), Err(ConfidenceError::NoValidDepth)));
    }

    #[test]
    fn temporal_cases() {
        let ctx = NormalizationContext::new(1.0, 1.0, 1.0);
        let still = PointTrack { positions: vec![Vec3::new(1.0, 2.0, 3.0); 4] };
        assert_eq!(temporal_entropy(&still, &ctx), 0.0);
        let single = PointTrack { positions: vec![Vec3::new(5.0, 0.0, 0.0)] };
        assert_eq!(temporal_entropy(&single, &ctx), 0.0);
        let moving = PointTrack {
            positions: vec![Vec3::ZERO, Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.1, 0.3, 0.0)],
        };
        let p: f64 = 1.0 / 6.0;
        assert_abs_diff_eq!(temporal_entropy(&moving, &ctx), E * -p * p.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(temporal_entropy(&moving, &ctx), 0.812, epsilon = 1e-3);
    }

    #[test]
    fn score_cases() {
        let w = WeightProfile::default();
        assert_eq!(confidence_score(&EntropyVector::default(), &w), 1.0);
        let w = WeightProfile::new(2.0, 0.0, 0.0, 0.0).unwrap();
        let h = EntropyVector { h1: 0.5, ..Default::default() };
        assert_abs_diff_eq!(confidence_score(&h, &w), 0.3678794, epsilon = 1e-7);
    }

    #[test]
    fn profiles() {
        assert_eq!(weight_profile_for_task(TaskKind::Balanced).as_array(), [1.0; 4]);
        assert_eq!(weight_profile_for_task(TaskKind::HighPrecision).as_array(), [2.0, 2.0, 1.0, 1.0]);
        let d = weight_profile_for_task(TaskKind::Dynamic).as_array();
        assert!(d[3] > d[0] && d[3] > d[1] && d[3] > d[2]);
        let c = weight_profile_for_task(TaskKind::Cluttered).as_array();
        assert!(c[2] > c[0]);
        assert!(WeightProfile::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(WeightProfile::new(-1.0, 1.0, 0.0, 0.0).is_err());
        assert_eq!("high-precision".parse::<TaskKind>().unwrap(), TaskKind::HighPrecision);
    }

    #[test]
    fn scored_point_json_shape() {
        let sp = ScoredPoint {
            point_index: 3,
            position: Vec3::new(0.5, 0.3, 0.2),
            pixel: Pixel::new(10.0, 11.0),
            mask_id: 2,
            entropies: EntropyVector { h1: 0.1, h2: 0.2, h3: 0.3, h4: 0.4 },
            confidence: 0.5,
        };
        let v = serde_json::to_value(&sp).unwrap();
        assert_eq!(v["index"], 3);
        assert_eq!(v["H"], serde_json::json!([0.1, 0.2, 0.3, 0.4]));
        assert_eq!(v["pixel"], serde_json::json!([10.0, 11.0]));
        let back: ScoredPoint = serde_json::from_value(v).unwrap();
        assert_eq!(back, sp);
    }
}
