use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PointCloud, PreprocessError};
use crate::geometry::{CameraIntrinsics, Vec3};
use crate::raster;

/// Row-major depth raster in meters. `0.0` marks an invalid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
}

/// Pixel rectangle `[x, x + width) × [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl CropRect {
    pub fn full(width: u32, height: u32) -> Self {
        Self { x: 0, y: 0, width, height }
    }
}

impl DepthMap {
    pub fn new(width: u32, height: u32, depth: Vec<f64>) -> Result<Self, PreprocessError> {
        if depth.len() != (width as usize) * (height as usize) {
            return Err(PreprocessError::DimensionMismatch(format!(
                "{} depth samples for a {width}×{height} map",
                depth.len()
            )));
        }
        if depth.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(PreprocessError::InvalidParameter("depth values must be finite and ≥ 0".into()));
        }
        Ok(Self { width, height, depth })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self { width, height, depth: vec![value; (width * height) as usize] }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.depth[(v * self.width + u) as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, d: f64) {
        let w = self.width;
        self.depth[(v * w + u) as usize] = d;
    }

    /// Valid samples in the `window × window` box around `(u, v)`, clipped at borders.
    pub fn valid_window(&self, u: u32, v: u32, window: u32) -> Vec<f64> {
        let r = (window / 2) as i64;
        let mut out = Vec::with_capacity((window * window) as usize);
        for dv in -r..=r {
            for du in -r..=r {
                let (x, y) = (u as i64 + du, v as i64 + dv);
                if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
                    continue;
                }
                let d = self.get(x as u32, y as u32);
                if d > 0.0 {
                    out.push(d);
                }
            }
        }
        out
    }

    /// Loads a 16-bit PGM whose samples are millimeters.
    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let (w, h, mm) = raster::read_pgm16(path)?;
        Self::new(w, h, mm.into_iter().map(|v| v as f64 / 1000.0).collect())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), PreprocessError> {
        let mm: Vec<u16> = self.depth.iter().map(|d| (d * 1000.0).round().clamp(0.0, 65535.0) as u16).collect();
        raster::write_pgm16(path, self.width, self.height, &mm)?;
        Ok(())
    }
}

/// Median over the valid neighbours of each pixel, then crop.
///
/// With an even number of valid neighbours the lower median is taken so
/// that every output value is an observed sample.
pub fn filter_depth(d: &DepthMap, window: usize, crop: CropRect) -> Result<DepthMap, PreprocessError> {
    if !matches!(window, 1 | 3 | 5 | 7) {
        return Err(PreprocessError::InvalidWindow(window));
    }
    let fits = crop.width > 0
        && crop.height > 0
        && crop.x.checked_add(crop.width).is_some_and(|e| e <= d.width)
        && crop.y.checked_add(crop.height).is_some_and(|e| e <= d.height);
    if !fits {
        return Err(PreprocessError::InvalidCrop(crop, d.width, d.height));
    }
    let mut out = Vec::with_capacity((crop.width * crop.height) as usize);
    for v in crop.y..crop.y + crop.height {
        for u in crop.x..crop.x + crop.width {
            if window == 1 {
                out.push(d.get(u, v));
                continue;
            }
            let mut vals = d.valid_window(u, v, window as u32);
            if vals.is_empty() {
                out.push(0.0);
            } else {
                vals.sort_by(f64::total_cmp);
                out.push(vals[(vals.len() - 1) / 2]);
            }
        }
    }
    Ok(DepthMap { width: crop.width, height: crop.height, depth: out })
}

/// Back-projects every valid pixel into the camera frame.
pub fn depth_to_cloud(d: &DepthMap, k: &CameraIntrinsics) -> Result<PointCloud, PreprocessError> {
    if d.width != k.width || d.height != k.height {
        return Err(PreprocessError::DimensionMismatch(format!(
            "depth map {}×{} vs intrinsics {}×{}",
            d.width, d.height, k.width, k.height
        )));
    }
    let mut points = Vec::new();
    for v in 0..d.height {
        for u in 0..d.width {
            let z = d.get(u, v);
            if z > 0.0 {
                points.push(Vec3::new((u as f64 - k.cx) * z / k.fx, (v as f64 - k.cy) * z / k.fy, z));
            }
        }
    }
    Ok(PointCloud::new(points))
}
