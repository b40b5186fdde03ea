//! Automatic lane annotation: densifies sparse manual lanes from a single
//! frame using local ground planes, intensity and coplanarity.
//!
//! Stages, per manual lane:
//! 1. [`validate_and_recalibrate`]: RANSAC ground plane around each manual
//!    point; points more than 1 cm off the plane get their height re-solved
//!    from the plane equation.
//! 2. [`skeletonize_lane`]: order toward +x and resample equidistantly.
//! 3. [`ball_query_expand`]: collect bright, coplanar returns around each
//!    skeletal point.
//! 4. [`interpolate_lane`]: least-squares cubics through the collected
//!    returns, sampled at a fixed spacing.

mod pipeline;
mod ransac;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lane::{PointCloud, Vec3};
use crate::spatial::XyGrid;

pub use pipeline::{
    ball_query_expand, ball_query_expand_indices, interpolate_lane, run_pipeline, skeletonize_lane,
    validate_and_recalibrate, Interpolation, LaneReport, LaneStatus, PipelineOutput,
    PipelineReport, PointStatus, Validation,
};
pub use ransac::{fit_local_ground_plane, PlaneFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Base seed for the per-point RANSAC streams.
    pub seed: u64,
    /// Plane distance up to which a manual point is accepted unchanged (m).
    pub ransac_validate_threshold: f64,
    /// RANSAC consensus distance (m).
    pub ransac_inlier_threshold: f64,
    pub ransac_iterations: u32,
    /// Cylindrical xy radius of the local ground neighbourhood (m).
    pub neighborhood_radius: f64,
    pub skeleton_spacing: f64,
    pub ball_radius: f64,
    /// Percentile of ground-inlier intensities a return must reach.
    pub intensity_percentile: f64,
    pub coplanarity_tol: f64,
    pub interp_spacing: f64,
    /// Manual lanes with fewer points are reported failed.
    pub min_lane_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            ransac_validate_threshold: 0.01,
            ransac_inlier_threshold: 0.02,
            ransac_iterations: 200,
            neighborhood_radius: 2.0,
            skeleton_spacing: 0.5,
            ball_radius: 0.3,
            intensity_percentile: 90.0,
            coplanarity_tol: 0.03,
            interp_spacing: 0.5,
            min_lane_points: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("ransac_validate_threshold", self.ransac_validate_threshold),
            ("ransac_inlier_threshold", self.ransac_inlier_threshold),
            ("neighborhood_radius", self.neighborhood_radius),
            ("skeleton_spacing", self.skeleton_spacing),
            ("ball_radius", self.ball_radius),
            ("coplanarity_tol", self.coplanarity_tol),
            ("interp_spacing", self.interp_spacing),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("pipeline: {name} must be > 0")));
            }
        }
        if !(0.0..=100.0).contains(&self.intensity_percentile) {
            return Err(Error::InvalidConfig(
                "pipeline: intensity_percentile must lie in [0, 100]".into(),
            ));
        }
        if self.ransac_iterations == 0 {
            return Err(Error::InvalidConfig(
                "pipeline: ransac_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Plane `normal · p = offset` with an upward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: Vec3,
    offset: f64,
}

impl Plane {
    /// Normalizes and orients `normal` upward; `None` for vertical or null normals.
    pub fn new(normal: Vec3, offset: f64) -> Option<Self> {
        let len = normal.norm();
        if !(len > 0.0) || !len.is_finite() {
            return None;
        }
        let (mut n, mut d) = (normal / len, offset / len);
        if n.z.abs() < 1e-9 {
            return None;
        }
        if n.z < 0.0 {
            n = -n;
            d = -d;
        }
        Some(Self {
            normal: n,
            offset: d,
        })
    }

    pub fn through(point: &Vec3, normal: Vec3) -> Option<Self> {
        Self::new(normal, normal.dot(point))
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Plane height at (x, y).
    pub fn z_at(&self, x: f64, y: f64) -> f64 {
        (self.offset - self.normal.x * x - self.normal.y * y) / self.normal.z
    }
}

/// A cloud with an xy grid, shared by every stage of one pipeline run.
#[derive(Debug, Clone)]
pub struct CloudIndex {
    positions: Vec<Vec3>,
    intensities: Vec<f64>,
    grid: XyGrid,
}

impl CloudIndex {
    pub fn new(cloud: &PointCloud) -> Self {
        let positions: Vec<Vec3> = cloud.points.iter().map(|p| p.position()).collect();
        let intensities = cloud.points.iter().map(|p| p.intensity as f64).collect();
        let grid = XyGrid::new(positions.iter().map(|p| [p.x, p.y]).collect(), 1.0);
        Self {
            positions,
            intensities,
            grid,
        }
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    /// Indices within an xy radius, ascending.
    pub fn within_xy(&self, x: f64, y: f64, r: f64) -> Vec<usize> {
        self.grid.within(x, y, r)
    }
}

/// Linear-interpolated percentile of unsorted values, `q` in [0, 100].
pub(crate) fn percentile(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = q / 100.0 * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(values[lo] + (values[hi] - values[lo]) * (rank - lo as f64))
}
