//! Conditioning of point clouds, depth maps and label masks before fusion.
//!
//! - [`cone_cell_partition`] bins the in-frustum cloud by viewing angle so
//!   that ground removal can run per region.
//! - [`remove_ground`] fits a plane by PCA inside a region and drops points
//!   close to it when the plane is level.
//! - [`downsample`] keeps one centroid per occupied voxel.
//! - [`filter_depth`] runs a validity-aware median filter and crops.

mod cloud;
mod depth;
mod ground;
mod mask;
mod voxel;

pub use cloud::PointCloud;
pub use depth::{depth_to_cloud, filter_depth, CropRect, DepthMap};
pub use ground::{
    cone_cell_partition, remove_ground, remove_ground_cells, ConeCell, GroundParams, GroundSplit,
};
pub use mask::LabelMask;
pub use voxel::downsample;

use thiserror::Error;

use crate::raster::RasterError;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("crop rectangle {0:?} exceeds the {1}×{2} raster")]
    InvalidCrop(CropRect, u32, u32),
    #[error("median window must be one of 1, 3, 5, 7 (got {0})")]
    InvalidWindow(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point cloud format: {0}")]
    Format(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
