use std::collections::BTreeMap;

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use serde::{Deserialize, Serialize};

use super::{
    confidence_score, depth_variance, mahalanobis_squared, spatial_entropy_from_distance, temporal_entropy,
    ConfidenceError, EntropyVector, NormalizationContext, PointTrack, ScoredPoint, WeightProfile,
    NORMALIZER_FLOOR,
};
use crate::geometry::{project_point, CameraIntrinsics, Pixel, RigidTransform, Vec3};
use crate::par::{self, Exec};
use crate::preprocess::{DepthMap, LabelMask, PointCloud};

/// How the H1 pixel distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelDistance {
    #[default]
    Raw,
    /// Divided by the diagonal of the mask's bounding box.
    MaskDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub knn: usize,
    /// Side of the square depth window used for H3.
    pub depth_window: u32,
    pub sqrt_mahalanobis: bool,
    pub pixel_distance: PixelDistance,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { knn: 16, depth_window: 5, sqrt_mahalanobis: false, pixel_distance: PixelDistance::Raw, exec: Exec::default() }
    }
}

struct MaskStats {
    centroid: Pixel,
    diagonal: f64,
}

fn mask_stats(masks: &LabelMask) -> BTreeMap<u32, MaskStats> {
    // (sum_u, sum_v, n, min_u, max_u, min_v, max_v)
    type Acc = (f64, f64, usize, u32, u32, u32, u32);
    let mut acc: BTreeMap<u32, Acc> = BTreeMap::new();
    for (i, &id) in masks.labels.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let (u, v) = (i as u32 % masks.width, i as u32 / masks.width);
        let e = acc.entry(id).or_insert((0.0, 0.0, 0, u, u, v, v));
        e.0 += u as f64;
        e.1 += v as f64;
        e.2 += 1;
        e.3 = e.3.min(u);
        e.4 = e.4.max(u);
        e.5 = e.5.min(v);
        e.6 = e.6.max(v);
    }
    acc.into_iter()
        .map(|(id, (su, sv, n, lu, hu, lv, hv))| {
            let centroid = Pixel::new(su / n as f64, sv / n as f64);
            let diagonal = ((hu - lu) as f64).hypot((hv - lv) as f64);
            (id, MaskStats { centroid, diagonal })
        })
        .collect()
}

/// Raw per-point terms before frame-level normalization.
struct Raw {
    index: usize,
    pixel: Pixel,
    mask_id: u32,
    h1: f64,
    mahalanobis: Option<f64>,
    variance: Option<f64>,
}

/// Scores every cloud point that projects into the image.
///
/// Points are given in the sensor frame and mapped into the camera with
/// `t`; stored positions stay in the sensor frame. Points whose pixel falls
/// on background get `H1 = 0`; fewer than four 3D neighbours give `H2 = 0`;
/// no valid depth in the window gives `H3 = 0`; without tracks `H4 = 0`.
/// Output is in input order.
#[allow(clippy::too_many_arguments)]
pub fn score_cloud(
    cloud: &PointCloud,
    masks: &LabelMask,
    depth: &DepthMap,
    tracks: Option<&[PointTrack]>,
    k: &CameraIntrinsics,
    t: &RigidTransform,
    w: &WeightProfile,
    opts: &ScoreOptions,
) -> Result<Vec<ScoredPoint>, ConfidenceError> {
    w.validate()?;
    if (masks.width, masks.height) != (k.width, k.height) {
        return Err(ConfidenceError::DimensionMismatch(format!(
            "mask {}×{} vs intrinsics {}×{}",
            masks.width, masks.height, k.width, k.height
        )));
    }
    if (depth.width, depth.height) != (k.width, k.height) {
        return Err(ConfidenceError::DimensionMismatch(format!(
            "depth {}×{} vs intrinsics {}×{}",
            depth.width, depth.height, k.width, k.height
        )));
    }
    if let Some(tr) = tracks {
        if tr.len() != cloud.len() {
            return Err(ConfidenceError::DimensionMismatch(format!(
                "{} tracks for {} points",
                tr.len(),
                cloud.len()
            )));
        }
    }
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    if cloud.points.iter().any(|p| !p.is_finite()) {
        return Err(ConfidenceError::DimensionMismatch("cloud contains non-finite coordinates".into()));
    }

    let in_frame: Vec<(usize, Pixel)> = cloud
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let px = project_point(k, t.transform_point(*p)).ok()?;
            k.contains(px).then_some((i, px))
        })
        .collect();

    let stats = mask_stats(masks);
    let mut tree: KdTree<f64, usize, [f64; 3]> = KdTree::with_capacity(3, cloud.len().max(1));
    for (i, p) in cloud.points.iter().enumerate() {
        tree.add(p.to_array(), i).expect("finite coordinates");
    }
    let knn = opts.knn;

    let raw: Vec<Raw> = par::map(opts.exec, &in_frame, |&(i, px)| {
        let (u, v) = px.rounded_index(k.width, k.height);
        let mask_id = masks.get(u, v);
        let h1 = match stats.get(&mask_id) {
            Some(s) if mask_id != 0 => {
                let mut d = px.distance(s.centroid);
                if opts.pixel_distance == PixelDistance::MaskDiagonal {
                    d /= s.diagonal.max(1.0);
                }
                spatial_entropy_from_distance(d)
            }
            _ => 0.0,
        };

        let p = cloud.points[i];
        let neighbors = nearest_excluding(&tree, &cloud.points, i, knn);
        let mahalanobis = mahalanobis_squared(p, &neighbors)
            .ok()
            .map(|d| if opts.sqrt_mahalanobis { d.sqrt() } else { d });

        let variance = depth_variance(&depth.valid_window(u, v, opts.depth_window)).ok();
        Raw { index: i, pixel: px, mask_id, h1, mahalanobis, variance }
    });

    let mahalanobis_max = raw.iter().filter_map(|r| r.mahalanobis).fold(0.0, f64::max);
    let sigma_max = raw.iter().filter_map(|r| r.variance).fold(0.0, f64::max);
    let ctx = NormalizationContext::new(cloud.bbox_diagonal(), sigma_max, mahalanobis_max);

    Ok(par::map(opts.exec, &raw, |r| {
        let ratio = |x: f64, max: f64| (x / max.max(NORMALIZER_FLOOR)).clamp(0.0, 1.0);
        let h2 = r.mahalanobis.map_or(0.0, |d| super::entropy_unchecked(ratio(d, ctx.mahalanobis_max)));
        let h3 = r.variance.map_or(0.0, |s| super::entropy_unchecked(ratio(s, ctx.sigma_max)));
        let h4 = tracks.map_or(0.0, |tr| temporal_entropy(&tr[r.index], &ctx));
        let entropies = EntropyVector { h1: r.h1, h2, h3, h4 };
        ScoredPoint {
            point_index: r.index,
            position: cloud.points[r.index],
            pixel: r.pixel,
            mask_id: r.mask_id,
            entropies,
            confidence: confidence_score(&entropies, w),
        }
    }))
}

/// Up to `k` nearest cloud points to `points[self_index]`, excluding
/// itself, ordered by (distance, index).
fn nearest_excluding(tree: &KdTree<f64, usize, [f64; 3]>, points: &[Vec3], self_index: usize, k: usize) -> Vec<Vec3> {
    if k == 0 {
        return Vec::new();
    }
    let found = tree.nearest(&points[self_index].to_array(), k + 1, &squared_euclidean).unwrap_or_default();
    let mut hits: Vec<(f64, usize)> =
        found.into_iter().filter(|(_, &j)| j != self_index).map(|(d, &j)| (d, j)).collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.truncate(k);
    hits.into_iter().map(|(_, j)| points[j]).collect()
}
