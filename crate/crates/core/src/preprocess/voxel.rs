use std::collections::HashMap;

use super::{PointCloud, PreprocessError};
use crate::geometry::Vec3;

pub(crate) fn voxel_key(p: Vec3, voxel: f64) -> (i64, i64, i64) {
    ((p.x / voxel).floor() as i64, (p.y / voxel).floor() as i64, (p.z / voxel).floor() as i64)
}

/// One centroid per occupied voxel, ordered by each voxel's first member.
/// Timestamps, when present, are averaged the same way.
pub fn downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud, PreprocessError> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(PreprocessError::InvalidParameter(format!("voxel size must be positive, got {voxel}")));
    }
    let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut acc: Vec<(Vec3, f64, usize)> = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let t = cloud.timestamps.as_ref().map_or(0.0, |ts| ts[i]);
        let slot = *slots.entry(voxel_key(*p, voxel)).or_insert_with(|| {
            acc.push((Vec3::ZERO, 0.0, 0));
            acc.len() - 1
        });
        let a = &mut acc[slot];
        a.0 = a.0 + *p;
        a.1 += t;
        a.2 += 1;
    }
    let points = acc.iter().map(|(s, _, n)| *s * (1.0 / *n as f64)).collect();
    let timestamps = cloud
        .timestamps
        .as_ref()
        .map(|_| acc.iter().map(|(_, t, n)| t / *n as f64).collect());
    Ok(PointCloud { points, timestamps })
}
