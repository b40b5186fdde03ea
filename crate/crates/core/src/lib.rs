//! LiDAR lane-geometry toolkit.
//!
//! Automatic densification of sparse lane annotations, BEV/voxel
//! discretization, the BEV–voxel fusion forward kernels with analytic
//! gradients, and the 3D lane evaluation protocol, together with a seeded
//! synthetic scene generator that supplies ground truth. The `io` module
//! holds the on-disk formats.

pub mod annotate;
pub mod cubic;
pub mod error;
pub mod io;
pub mod kernels;
pub mod lane;
pub mod metrics;
pub mod raster;
pub mod scene;
pub mod spatial;

pub use cubic::{eval_cubic, fit_cubic, CubicCurve, CurveDimension};
pub use error::{Error, Result};
pub use lane::{
    order_lane_points, polyline_resample, LanePolyline, OrderingAxis, Point3I, PointCloud, Roi,
    Vec3,
};
pub use scene::{generate_scene, sparsify_annotation, PointClass, SceneConfig, SyntheticScene};
pub use raster::{
    cluster_instances, lift_mask_to_3d, pillarize, rasterize_lanes, voxelize, BevGrid,
    GridGeometry, LaneMask, RasterConfig, VoxelConfig, VoxelGrid,
};
pub use kernels::FeatureMatrix;
pub use metrics::{
    chamfer_unilateral, dataset_stats, match_lanes, prf1, EvalReport, MatchResult, MetricsConfig,
    StatsReport,
};
