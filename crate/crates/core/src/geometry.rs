//! Rigid transforms between the LiDAR and camera frames and pinhole projection.
//!
//! Points move from the LiDAR frame into the camera frame with a 4×4
//! homogeneous transform, then land on the image plane through the
//! intrinsic matrix scaled by `1 / z`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating that a rotation block is orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point at depth {0} is behind or on the camera plane")]
    NonPositiveDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with determinant +1 (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("calibration file: {0}")]
    Calibration(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A 3D point or direction in meters. Serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn with_component(mut self, axis: usize, value: f64) -> Vec3 {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            _ => self.z = value,
        }
        self
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.3}, {:.3}, {:.3}]", self.x, self.y, self.z)
    }
}

/// Image-plane coordinate with sub-pixel precision. Serialized as `[u, v]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(self, o: Pixel) -> f64 {
        (self.u - o.u).hypot(self.v - o.v)
    }

    pub fn distance_squared(self, o: Pixel) -> f64 {
        let du = self.u - o.u;
        let dv = self.v - o.v;
        du * du + dv * dv
    }

    /// Nearest integer pixel, clamped into a `width × height` raster.
    pub fn rounded_index(self, width: u32, height: u32) -> (u32, u32) {
        let clamp = |x: f64, n: u32| x.round().clamp(0.0, (n.max(1) - 1) as f64) as u32;
        (clamp(self.u, width), clamp(self.v, height))
    }
}

impl From<[f64; 2]> for Pixel {
    fn from(a: [f64; 2]) -> Self {
        Pixel::new(a[0], a[1])
    }
}

impl From<Pixel> for [f64; 2] {
    fn from(p: Pixel) -> Self {
        [p.u, p.v]
    }
}

/// Pinhole intrinsics. Lens distortion is not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be positive".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, px: Pixel) -> bool {
        px.u >= 0.0 && px.u < self.width as f64 && px.v >= 0.0 && px.v < self.height as f64
    }
}

/// Proper rigid motion `p ↦ R·p + t`.
///
/// Serialized as a row-major 4×4 homogeneous matrix; deserialization
/// validates orthonormality of the rotation block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 4]; 4]", into = "[[f64; 4]; 4]")]
pub struct RigidTransform {
    rotation: [[f64; 3]; 3],
    translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: [[f64; 3]; 3], translation: Vec3) -> Result<Self, GeometryError> {
        if !translation.is_finite() || rotation.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rigid transform"));
        }
        let dev = orthonormality_deviation(&rotation);
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::NotOrthonormal(dev));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self { translation: t, ..Self::IDENTITY }
    }

    /// Rotation of `angle` radians about a (not necessarily unit) axis, via Rodrigues.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let k = axis.normalized();
        let (s, c) = angle.sin_cos();
        let v = 1.0 - c;
        let rotation = [
            [c + k.x * k.x * v, k.x * k.y * v - k.z * s, k.x * k.z * v + k.y * s],
            [k.y * k.x * v + k.z * s, c + k.y * k.y * v, k.y * k.z * v - k.x * s],
            [k.z * k.x * v - k.y * s, k.z * k.y * v + k.x * s, c + k.z * k.z * v],
        ];
        Self { rotation, translation }
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn rotate(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
        )
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        RigidTransform { rotation, translation: self.transform_point(other.translation) }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotate(p) + self.translation
    }

    /// Inverse motion `p ↦ Rᵀ·p − Rᵀ·t`.
    pub fn invert(&self) -> RigidTransform {
        let r = &self.rotation;
        let rotation = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let inv = RigidTransform { rotation, translation: Vec3::ZERO };
        RigidTransform { rotation, translation: -inv.rotate(self.translation) }
    }

    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let a = self.to_homogeneous();
        let b = other.to_homogeneous();
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<[[f64; 4]; 4]> for RigidTransform {
    type Error = GeometryError;

    fn try_from(m: [[f64; 4]; 4]) -> Result<Self, Self::Error> {
        let bottom = m[3];
        if bottom[0].abs() > ORTHONORMAL_TOL
            || bottom[1].abs() > ORTHONORMAL_TOL
            || bottom[2].abs() > ORTHONORMAL_TOL
            || (bottom[3] - 1.0).abs() > ORTHONORMAL_TOL
        {
            return Err(GeometryError::Calibration("last row must be [0, 0, 0, 1]".into()));
        }
        let rotation = [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ];
        RigidTransform::new(rotation, Vec3::new(m[0][3], m[1][3], m[2][3]))
    }
}

impl From<RigidTransform> for [[f64; 4]; 4] {
    fn from(t: RigidTransform) -> Self {
        t.to_homogeneous()
    }
}

/// Max-entry deviation of `RᵀR` from `I`, plus the deviation of `det R` from +1.
fn orthonormality_deviation(r: &[[f64; 3]; 3]) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((dot - target).abs());
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    dev.max((det - 1.0).abs())
}

pub fn transform_point(t: &RigidTransform, p: Vec3) -> Vec3 {
    t.transform_point(p)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.invert()
}

/// Pinhole projection of a camera-frame point.
pub fn project_point(k: &CameraIntrinsics, p_cam: Vec3) -> Result<Pixel, GeometryError> {
    if p_cam.z.is_nan() || p_cam.z <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(p_cam.z));
    }
    Ok(Pixel::new(k.fx * p_cam.x / p_cam.z + k.cx, k.fy * p_cam.y / p_cam.z + k.cy))
}

/// Projects a LiDAR-frame cloud, keeping points in front of the camera that
/// land inside the image. Output preserves input order.
pub fn project_cloud(k: &CameraIntrinsics, t: &RigidTransform, cloud: &[Vec3]) -> Vec<(usize, Pixel)> {
    cloud
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| {
            let px = project_point(k, t.transform_point(p)).ok()?;
            k.contains(px).then_some((i, px))
        })
        .collect()
}

/// On-disk calibration: intrinsics plus the LiDAR→camera extrinsic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    #[serde(rename = "T_lidar_camera")]
    pub lidar_to_camera: RigidTransform,
}

impl Calibration {
    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let cal: Calibration =
            serde_json::from_str(text).map_err(|e| GeometryError::Calibration(e.to_string()))?;
        cal.intrinsics.validate()?;
        Ok(cal)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
