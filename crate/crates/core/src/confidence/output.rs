use std::path::Path;

use image::{Rgb, RgbImage};

use super::{ConfidenceError, ScoredPoint};
use crate::jsonfmt;

pub fn write_scored(path: impl AsRef<Path>, scored: &[ScoredPoint]) -> Result<(), ConfidenceError> {
    std::fs::write(path, jsonfmt::to_canonical_string(scored)?)?;
    Ok(())
}

pub fn read_scored(path: impl AsRef<Path>) -> Result<Vec<ScoredPoint>, ConfidenceError> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// Red at `C = 0`, yellow at `0.5`, green at `1`.
pub fn confidence_color(c: f64) -> Rgb<u8> {
    let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
    let (r, g) = if c < 0.5 { (1.0, 2.0 * c) } else { (2.0 * (1.0 - c), 1.0) };
    Rgb([(r * 255.0).round() as u8, (g * 255.0).round() as u8, 0])
}

/// Copy of `base` with a 3×3 colored square at every scored pixel.
/// Lower-confidence points are drawn last so they stay visible.
pub fn render_overlay(base: &RgbImage, scored: &[ScoredPoint]) -> RgbImage {
    let mut img = base.clone();
    let mut order: Vec<&ScoredPoint> = scored.iter().collect();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let (w, h) = img.dimensions();
    for sp in order {
        let (u, v) = sp.pixel.rounded_index(w, h);
        let color = confidence_color(sp.confidence);
        for dv in -1i64..=1 {
            for du in -1i64..=1 {
                let (x, y) = (u as i64 + du, v as i64 + dv);
                if x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    img
}
