use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lane::{PointCloud, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoxelConfig {
    /// Voxel edge lengths along x, y, z (m).
    pub voxel_size: [f64; 3],
    pub max_points_per_voxel: usize,
    pub max_voxels: usize,
}

impl Default for VoxelConfig {
    fn default() -> Self {
        Self {
            voxel_size: [0.1, 0.1, 0.2],
            max_points_per_voxel: 32,
            max_voxels: 12_000,
        }
    }
}

impl VoxelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.voxel_size.iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "voxel_size must be positive, got {:?}",
                self.voxel_size
            )));
        }
        if self.max_points_per_voxel == 0 || self.max_voxels == 0 {
            return Err(Error::InvalidConfig("voxel caps must be >= 1".into()));
        }
        Ok(())
    }

    /// Integer voxel index of a coordinate; the result always satisfies
    /// `i·d ≤ c < (i+1)·d` in floating point.
    pub fn index_of(&self, p: &Vec3) -> [i64; 3] {
        let mut out = [0; 3];
        for k in 0..3 {
            let (c, d) = (p[k], self.voxel_size[k]);
            let mut i = (c / d).floor() as i64;
            while i as f64 * d > c {
                i -= 1;
            }
            while (i + 1) as f64 * d <= c {
                i += 1;
            }
            out[k] = i;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    pub index: [i64; 3],
    /// Cloud indices in arrival order.
    pub points: Vec<usize>,
}

/// Sparse voxelization with per-voxel and total caps.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    config: VoxelConfig,
    voxels: Vec<Voxel>,
    lookup: HashMap<[i64; 3], usize>,
    dropped_point_cap: usize,
    dropped_voxel_cap: usize,
}

impl VoxelGrid {
    pub fn config(&self) -> &VoxelConfig {
        &self.config
    }

    /// Voxels in admission order.
    pub fn voxels(&self) -> &[Voxel] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn get(&self, index: [i64; 3]) -> Option<&Voxel> {
        self.lookup.get(&index).map(|&i| &self.voxels[i])
    }

    pub fn stored(&self) -> usize {
        self.voxels.iter().map(|v| v.points.len()).sum()
    }

    /// Points refused because their voxel was full.
    pub fn dropped_point_cap(&self) -> usize {
        self.dropped_point_cap
    }

    /// Points refused because the voxel budget was exhausted.
    pub fn dropped_voxel_cap(&self) -> usize {
        self.dropped_voxel_cap
    }

    pub fn dropped(&self) -> usize {
        self.dropped_point_cap + self.dropped_voxel_cap
    }

    pub fn center(&self, index: [i64; 3]) -> Vec3 {
        let d = self.config.voxel_size;
        Vec3::new(
            (index[0] as f64 + 0.5) * d[0],
            (index[1] as f64 + 0.5) * d[1],
            (index[2] as f64 + 0.5) * d[2],
        )
    }

    /// Centres of all voxels, admission order.
    pub fn centers(&self) -> Vec<Vec3> {
        self.voxels.iter().map(|v| self.center(v.index)).collect()
    }
}

/// Scans points in ascending index order; a new voxel is admitted only while
/// fewer than `max_voxels` exist, and each voxel keeps its first
/// `max_points_per_voxel` arrivals.
pub fn voxelize(cloud: &PointCloud, config: &VoxelConfig) -> Result<VoxelGrid> {
    config.validate()?;
    let mut grid = VoxelGrid {
        config: config.clone(),
        voxels: Vec::new(),
        lookup: HashMap::new(),
        dropped_point_cap: 0,
        dropped_voxel_cap: 0,
    };
    for (i, p) in cloud.points.iter().enumerate() {
        let key = config.index_of(&p.position());
        let slot = match grid.lookup.get(&key) {
            Some(&s) => s,
            None if grid.voxels.len() < config.max_voxels => {
                grid.voxels.push(Voxel {
                    index: key,
                    points: Vec::new(),
                });
                grid.lookup.insert(key, grid.voxels.len() - 1);
                grid.voxels.len() - 1
            }
            None => {
                grid.dropped_voxel_cap += 1;
                continue;
            }
        };
        let v = &mut grid.voxels[slot];
        if v.points.len() < config.max_points_per_voxel {
            v.points.push(i);
        } else {
            grid.dropped_point_cap += 1;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane::Point3I;

    fn cloud(points: Vec<Point3I>) -> PointCloud {
        PointCloud::new("t", points).unwrap()
    }

    #[test]
    fn one_point_one_voxel() {
        let g = voxelize(&cloud(vec![Point3I::new(0.25, -0.05, 0.3, 0.5)]), &VoxelConfig::default())
            .unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.voxels()[0].index, [2, -1, 1]);
        assert_eq!(g.voxels()[0].points, vec![0]);
    }

    #[test]
    fn forty_coincident_points() {
        let pts = vec![Point3I::new(1.0, 1.0, 1.0, 0.5); 40];
        let g = voxelize(&cloud(pts), &VoxelConfig::default()).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.stored(), 32);
        assert_eq!(g.dropped_point_cap(), 8);
        assert_eq!(g.voxels()[0].points, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn voxel_budget_follows_index_order() {
        let pts: Vec<Point3I> = (0..10).map(|i| Point3I::new(i as f32, 0.0, 0.0, 0.5)).collect();
        let cfg = VoxelConfig {
            max_voxels: 4,
            ..Default::default()
        };
        let g = voxelize(&cloud(pts), &cfg).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.dropped_voxel_cap(), 6);
        assert_eq!(g.voxels()[3].points, vec![3]);
    }

    #[test]
    fn index_respects_bounds_at_rounding_edges() {
        let cfg = VoxelConfig::default();
        for c in [0.3, 0.7, -0.3, 0.6000000000000001, 1e-17, -1e-17] {
            let i = cfg.index_of(&Vec3::new(c, c, c));
            for k in 0..3 {
                let d = cfg.voxel_size[k];
                assert!(i[k] as f64 * d <= c && c < (i[k] + 1) as f64 * d, "{c}");
            }
        }
    }

    #[test]
    fn centers() {
        let g = voxelize(&cloud(vec![Point3I::new(0.05, 0.05, 0.1, 0.5)]), &VoxelConfig::default())
            .unwrap();
        let c = g.centers()[0];
        assert!((c - Vec3::new(0.05, 0.05, 0.1)).norm() < 1e-12);
    }
}
