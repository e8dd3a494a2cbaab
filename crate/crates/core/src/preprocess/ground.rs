use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PointCloud, PreprocessError};
use crate::geometry::{project_point, CameraIntrinsics, RigidTransform, Vec3};
use crate::linalg::fit_plane;
use crate::par::{self, Exec};

/// One angular region of the camera frustum and the cloud indices inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeCell {
    pub azimuth_bin: usize,
    pub elevation_bin: usize,
    pub members: Vec<usize>,
}

/// Tunables for per-region ground fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundParams {
    /// Max angle between the fitted normal and `up_axis`, degrees.
    pub angle_tol_deg: f64,
    /// Max point-to-plane distance for a ground point, meters.
    pub inlier_dist: f64,
    /// Direction opposite to gravity, in the frame of the points.
    pub up_axis: Vec3,
    /// Fraction of lowest points averaged into the seed height.
    pub seed_fraction: f64,
    /// Seeds are points within this height of the lowest-point average.
    pub seed_margin: f64,
    /// Plane re-fits on the current inlier set.
    pub refits: usize,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            angle_tol_deg: 15.0,
            inlier_dist: 0.02,
            // Camera frames have +y pointing down.
            up_axis: Vec3::new(0.0, -1.0, 0.0),
            seed_fraction: 0.2,
            seed_margin: 0.05,
            refits: 3,
        }
    }
}

/// Exhaustive, disjoint split of input indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundSplit {
    pub ground: Vec<usize>,
    pub kept: Vec<usize>,
}

/// Horizontal and vertical angular limits of the image, in radians.
fn fov_limits(k: &CameraIntrinsics) -> ((f64, f64), (f64, f64)) {
    let az = ((-k.cx / k.fx).atan(), ((k.width as f64 - k.cx) / k.fx).atan());
    let el = ((-k.cy / k.fy).atan(), ((k.height as f64 - k.cy) / k.fy).atan());
    (az, el)
}

fn angle_bin(angle: f64, (lo, hi): (f64, f64), n: usize) -> usize {
    let t = (angle - lo) / (hi - lo);
    ((t * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Bins every in-frustum point into a uniform azimuth × elevation grid over
/// the camera field of view. Only non-empty cells are returned, ordered by
/// `(azimuth_bin, elevation_bin)`; members keep input order.
pub fn cone_cell_partition(
    cloud: &PointCloud,
    k: &CameraIntrinsics,
    t: &RigidTransform,
    n_az: usize,
    n_el: usize,
) -> Result<Vec<ConeCell>, PreprocessError> {
    if n_az == 0 || n_el == 0 {
        return Err(PreprocessError::InvalidParameter("cone grid needs at least one bin per axis".into()));
    }
    let (az_lim, el_lim) = fov_limits(k);
    let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let c = t.transform_point(*p);
        let Ok(px) = project_point(k, c) else { continue };
        if !k.contains(px) {
            continue;
        }
        let az = (c.x / c.z).atan();
        let el = (c.y / c.z).atan();
        cells
            .entry((angle_bin(az, az_lim, n_az), angle_bin(el, el_lim, n_el)))
            .or_default()
            .push(i);
    }
    Ok(cells
        .into_iter()
        .map(|((a, e), members)| ConeCell { azimuth_bin: a, elevation_bin: e, members })
        .collect())
}

/// PCA ground fit inside one region.
///
/// Seeds are the points near the lowest heights along `up_axis`; the plane
/// is re-fit on its own inliers a few times. If the final normal is within
/// `angle_tol_deg` of `up_axis`, inliers become ground. Fewer than three
/// points means nothing is classified as ground.
pub fn remove_ground(points: &[Vec3], params: &GroundParams) -> GroundSplit {
    let all: Vec<usize> = (0..points.len()).collect();
    if points.len() < 3 {
        return GroundSplit { ground: vec![], kept: all };
    }
    let up = params.up_axis.normalized();
    let heights: Vec<f64> = points.iter().map(|p| p.dot(up)).collect();

    let mut sorted = heights.clone();
    sorted.sort_by(f64::total_cmp);
    let n_low = ((sorted.len() as f64 * params.seed_fraction).ceil() as usize).clamp(3, sorted.len());
    let lowest_mean = sorted[..n_low].iter().sum::<f64>() / n_low as f64;
    let mut members: Vec<usize> =
        all.iter().copied().filter(|&i| heights[i] <= lowest_mean + params.seed_margin).collect();

    let mut normal = up;
    for _ in 0..params.refits.max(1) {
        if members.len() < 3 {
            return GroundSplit { ground: vec![], kept: all };
        }
        let (centroid, n) = fit_plane(members.iter().map(|&i| &points[i]));
        normal = n;
        let next: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&i| (points[i] - centroid).dot(n).abs() < params.inlier_dist)
            .collect();
        if next == members {
            break;
        }
        members = next;
    }

    let cos_tol = params.angle_tol_deg.to_radians().cos();
    if normal.dot(up).abs() < cos_tol || members.is_empty() {
        return GroundSplit { ground: vec![], kept: all };
    }
    let mut is_ground = vec![false; points.len()];
    for &i in &members {
        is_ground[i] = true;
    }
    let (ground, kept) = all.into_iter().partition(|&i| is_ground[i]);
    GroundSplit { ground, kept }
}

/// Cone-cell partition followed by independent ground removal per cell.
///
/// Indices refer to the input cloud; points outside the frustum are kept.
pub fn remove_ground_cells(
    cloud: &PointCloud,
    k: &CameraIntrinsics,
    t: &RigidTransform,
    n_az: usize,
    n_el: usize,
    params: &GroundParams,
    exec: Exec,
) -> Result<GroundSplit, PreprocessError> {
    let cells = cone_cell_partition(cloud, k, t, n_az, n_el)?;
    // Fit in the camera frame, where up_axis is expressed.
    let per_cell = par::map(exec, &cells, |cell| {
        let pts: Vec<Vec3> = cell.members.iter().map(|&i| t.transform_point(cloud.points[i])).collect();
        let split = remove_ground(&pts, params);
        split.ground.into_iter().map(|j| cell.members[j]).collect::<Vec<_>>()
    });
    let mut is_ground = vec![false; cloud.len()];
    for i in per_cell.into_iter().flatten() {
        is_ground[i] = true;
    }
    let (ground, kept) = (0..cloud.len()).partition(|&i| is_ground[i]);
    Ok(GroundSplit { ground, kept })
}
