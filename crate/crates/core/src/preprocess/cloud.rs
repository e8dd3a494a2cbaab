use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::geometry::Vec3;

const BINARY_MAGIC: &[u8; 4] = b"PC3D";

/// Ordered 3D points in meters, optionally time-stamped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points, timestamps: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(PreprocessError::Format(format!("point {i} is not finite")));
        }
        if let Some(ts) = &self.timestamps {
            if ts.len() != self.points.len() {
                return Err(PreprocessError::DimensionMismatch(format!(
                    "{} timestamps for {} points",
                    ts.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding-box diagonal; zero for fewer than two points.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut it = self.points.iter();
        let Some(first) = it.next() else { return 0.0 };
        let (mut lo, mut hi) = (*first, *first);
        for p in it {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        hi.distance(lo)
    }

    /// Parses either the ASCII (`x y z [t]` per line, `#` comments) or the
    /// `PC3D` little-endian binary layout, detected by magic.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreprocessError> {
        if bytes.starts_with(BINARY_MAGIC) {
            return Self::from_binary(bytes);
        }
        let text = std::str::from_utf8(bytes)
            .map_err(|_| PreprocessError::Format("ASCII cloud is not valid UTF-8".into()))?;
        Self::from_ascii(text)
    }

    pub fn from_ascii(text: &str) -> Result<Self, PreprocessError> {
        let mut points = Vec::new();
        let mut stamps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| PreprocessError::Format(format!("line {}: {e}", lineno + 1)))?;
            match vals.as_slice() {
                [x, y, z] => points.push(Vec3::new(*x, *y, *z)),
                [x, y, z, t] => {
                    points.push(Vec3::new(*x, *y, *z));
                    stamps.push(*t);
                }
                _ => {
                    return Err(PreprocessError::Format(format!(
                        "line {}: expected 3 or 4 numbers, found {}",
                        lineno + 1,
                        vals.len()
                    )))
                }
            }
        }
        let timestamps = if stamps.is_empty() {
            None
        } else if stamps.len() == points.len() {
            Some(stamps)
        } else {
            return Err(PreprocessError::Format("timestamps present on only some lines".into()));
        };
        let cloud = PointCloud { points, timestamps };
        cloud.validate()?;
        Ok(cloud)
    }

    fn from_binary(bytes: &[u8]) -> Result<Self, PreprocessError> {
        let header = bytes
            .get(4..8)
            .ok_or_else(|| PreprocessError::Format("truncated PC3D header".into()))?;
        let count = u32::from_le_bytes(header.try_into().expect("4 bytes")) as usize;
        let body = &bytes[8..];
        if body.len() != count * 12 {
            return Err(PreprocessError::Format(format!(
                "PC3D declares {count} points but carries {} payload bytes",
                body.len()
            )));
        }
        let points = body
            .chunks_exact(12)
            .map(|c| {
                let f = |o: usize| f32::from_le_bytes(c[o..o + 4].try_into().expect("4 bytes")) as f64;
                Vec3::new(f(0), f(4), f(8))
            })
            .collect();
        let cloud = PointCloud::new(points);
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.points.iter().enumerate() {
            match &self.timestamps {
                Some(ts) => out.push_str(&format!("{} {} {} {}\n", p.x, p.y, p.z, ts[i])),
                None => out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z)),
            }
        }
        out
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 12 * self.points.len());
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.points.len() as u32).to_le_bytes());
        for p in &self.points {
            for v in p.to_array() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
