//! Geometry and feature tooling for indoor semantic occupancy pipelines.
//!
//! The crate turns posed depth/semantic/feature frames into cleaned, aligned,
//! metrically scaled semantic occupancy voxel grids, pairs 2D superpixels
//! with 3D supervoxels for region-contrastive feature distillation (loss and
//! analytic gradient), and evaluates occupancy predictions with the standard
//! IoU/mIoU protocol.
//!
//! Everything numeric is generic over the [`scalar::Real`] scalar
//! (`f32`/`f64`); the `*32`/`*64` aliases below pin the common
//! instantiations.
//!
//! Module map:
//! - [`types`]: cameras, depth maps, labeled clouds, grid specs, voxel grids
//! - [`lift`]: depth back-projection and the pixel→voxel map
//! - [`cloud`]: outlier filters, floor estimation, z-up alignment, metric scaling
//! - [`voxel`]: majority-vote semantic voxelization
//! - [`distill`]: superpixel/supervoxel grouping, pooling, contrastive loss + gradient
//! - [`metrics`]: occupancy decoding, binary IoU, semantic mIoU
//! - [`synth`]: procedural cuboid-room oracle (exact renders + analytic grids)
//! - [`io`]: binary tensor/grid containers and the frame manifest

pub mod cloud;
pub mod distill;
pub mod error;
pub mod geom;
pub mod io;
pub mod lift;
pub mod metrics;
pub mod scalar;
mod spatial;
pub mod synth;
pub mod types;
pub mod voxel;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3_32 = geom::Vec3<f32>;
pub type Vec3_64 = geom::Vec3<f64>;
pub type Mat3_32 = geom::Mat3<f32>;
pub type Mat3_64 = geom::Mat3<f64>;
pub type CameraIntrinsics32 = types::CameraIntrinsics<f32>;
pub type CameraIntrinsics64 = types::CameraIntrinsics<f64>;
pub type CameraPose32 = types::CameraPose<f32>;
pub type CameraPose64 = types::CameraPose<f64>;
pub type DepthMap32 = types::DepthMap<f32>;
pub type DepthMap64 = types::DepthMap<f64>;
pub type PointCloud32 = types::SemanticPointCloud<f32>;
pub type PointCloud64 = types::SemanticPointCloud<f64>;
pub type GridSpec32 = types::GridSpec<f32>;
pub type GridSpec64 = types::GridSpec<f64>;
pub type VoxelGrid32 = types::VoxelGrid<f32>;
pub type VoxelGrid64 = types::VoxelGrid<f64>;
pub type VoxelFeatures32 = types::VoxelFeatures<f32>;
pub type VoxelFeatures64 = types::VoxelFeatures<f64>;
pub type FeatureMap32 = distill::FeatureMap<f32>;
pub type FeatureMap64 = distill::FeatureMap<f64>;
pub type PooledFeatures32 = distill::PooledFeatures<f32>;
pub type PooledFeatures64 = distill::PooledFeatures<f64>;
