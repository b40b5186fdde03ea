//! Discretization of clouds and lanes: BEV pillars, lane label masks,
//! sparse voxels, and density clustering of lifted lane proposals.

mod bev;
mod cluster;
mod mask;
mod voxel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lane::Roi;

pub use bev::{pillarize, BevCell, BevGrid};
pub use cluster::{cluster_instances, NOISE};
pub use mask::{lift_mask_to_3d, rasterize_lanes, LaneMask};
pub use voxel::{voxelize, Voxel, VoxelConfig, VoxelGrid};

/// Cell layout shared by [`BevGrid`] and [`LaneMask`].
///
/// Cells are half-open in both axes; the roi's upper edges clamp into the
/// last row and column. Flat storage is x-major: `ix * ny + iy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    roi: Roi,
    resolution: f64,
    nx: usize,
    ny: usize,
}

impl GridGeometry {
    pub fn new(roi: Roi, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "grid resolution must be > 0, got {resolution}"
            )));
        }
        let nx = (roi.width_x() / resolution).round() as usize;
        let ny = (roi.width_y() / resolution).round() as usize;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidConfig(format!(
                "resolution {resolution} is coarser than the roi"
            )));
        }
        Ok(Self {
            roi,
            resolution,
            nx,
            ny,
        })
    }

    pub fn roi(&self) -> Roi {
        self.roi
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// `(L, W)`: cells along x and along y.
    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Continuous grid coordinates, in cells from the roi's lower corner.
    pub(crate) fn to_grid(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.roi.x_min) / self.resolution,
            (y - self.roi.y_min) / self.resolution,
        )
    }

    pub(crate) fn clamp_cell(&self, gx: f64, gy: f64) -> (usize, usize) {
        let ix = (gx.floor().max(0.0) as usize).min(self.nx - 1);
        let iy = (gy.floor().max(0.0) as usize).min(self.ny - 1);
        (ix, iy)
    }

    /// Cell containing (x, y), or `None` outside the roi.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.roi.contains(x, y) {
            return None;
        }
        let (gx, gy) = self.to_grid(x, y);
        Some(self.clamp_cell(gx, gy))
    }

    pub fn flat(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    pub fn unflat(&self, i: usize) -> (usize, usize) {
        (i / self.ny, i % self.ny)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.roi.x_min + (ix as f64 + 0.5) * self.resolution,
            self.roi.y_min + (iy as f64 + 0.5) * self.resolution,
        )
    }
}

/// Serialized form of the rasterization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    pub roi: Roi,
    /// Pillar size of the pseudo-BEV input (m).
    pub bev_resolution: f64,
    /// Cell size of the downscaled lane label grid (m).
    pub label_resolution: f64,
    pub voxel: VoxelConfig,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            roi: Roi::default(),
            bev_resolution: 0.04,
            label_resolution: 0.32,
            voxel: VoxelConfig::default(),
            dbscan_eps: 0.96,
            dbscan_min_pts: 5,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        GridGeometry::new(self.roi, self.bev_resolution)?;
        GridGeometry::new(self.roi, self.label_resolution)?;
        self.voxel.validate()?;
        if !(self.dbscan_eps > 0.0 && self.dbscan_eps.is_finite()) || self.dbscan_min_pts == 0 {
            return Err(Error::InvalidConfig(
                "rasterize: dbscan_eps must be > 0 and dbscan_min_pts >= 1".into(),
            ));
        }
        Ok(())
    }
}
