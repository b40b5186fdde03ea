use super::GridGeometry;
use crate::error::Result;
use crate::lane::{PointCloud, Roi};

/// Per-pillar aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BevCell {
    pub count: u32,
    pub intensity_sum: f64,
    /// Meaningful only when `count > 0`.
    pub max_z: f32,
}

impl BevCell {
    pub fn mean_intensity(&self) -> Option<f64> {
        (self.count > 0).then(|| self.intensity_sum / self.count as f64)
    }

    pub fn max_z(&self) -> Option<f64> {
        (self.count > 0).then_some(self.max_z as f64)
    }
}

/// Pseudo-BEV image of a cloud.
#[derive(Debug, Clone)]
pub struct BevGrid {
    geometry: GridGeometry,
    cells: Vec<BevCell>,
    dropped: usize,
}

impl BevGrid {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn shape(&self) -> (usize, usize) {
        self.geometry.shape()
    }

    pub fn cell(&self, ix: usize, iy: usize) -> &BevCell {
        &self.cells[self.geometry.flat(ix, iy)]
    }

    /// Flat x-major cell storage.
    pub fn cells(&self) -> &[BevCell] {
        &self.cells
    }

    /// Points outside the roi.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.count > 0).count()
    }

    pub fn total_count(&self) -> u64 {
        self.cells.iter().map(|c| c.count as u64).sum()
    }
}

/// Bins every in-roi point into one pillar.
pub fn pillarize(cloud: &PointCloud, roi: Roi, resolution: f64) -> Result<BevGrid> {
    let geometry = GridGeometry::new(roi, resolution)?;
    let mut cells = vec![BevCell::default(); geometry.cell_count()];
    let mut dropped = 0;
    for p in &cloud.points {
        let Some((ix, iy)) = geometry.cell_of(p.x as f64, p.y as f64) else {
            dropped += 1;
            continue;
        };
        let c = &mut cells[geometry.flat(ix, iy)];
        c.max_z = if c.count == 0 { p.z } else { c.max_z.max(p.z) };
        c.count += 1;
        c.intensity_sum += p.intensity as f64;
    }
    Ok(BevGrid {
        geometry,
        cells,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane::Point3I;

    fn cloud(points: Vec<Point3I>) -> PointCloud {
        PointCloud::new("t", points).unwrap()
    }

    #[test]
    fn corner_point_lands_in_first_cell() {
        let grid = pillarize(
            &cloud(vec![Point3I::new(-48.0, -20.0, -2.0, 0.5)]),
            Roi::default(),
            0.04,
        )
        .unwrap();
        assert_eq!(grid.shape(), (2400, 1000));
        assert_eq!(grid.occupied(), 1);
        assert_eq!(grid.cell(0, 0).count, 1);
        assert_eq!(grid.cell(0, 0).max_z(), Some(-2.0));
    }

    #[test]
    fn aggregates_and_drops() {
        let roi = Roi::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let pts = vec![
            Point3I::new(0.1, 0.1, 1.0, 0.2),
            Point3I::new(0.2, 0.2, 3.0, 0.6),
            Point3I::new(0.9, 0.9, 0.0, 1.0),
            Point3I::new(2.0, 0.5, 0.0, 1.0),
        ];
        let grid = pillarize(&cloud(pts), roi, 0.5).unwrap();
        let c = grid.cell(0, 0);
        assert_eq!(c.count, 2);
        assert!((c.mean_intensity().unwrap() - 0.4).abs() < 1e-7);
        assert_eq!(c.max_z(), Some(3.0));
        assert_eq!(grid.cell(1, 0).mean_intensity(), None);
        assert_eq!(grid.dropped(), 1);
        assert_eq!(grid.total_count(), 3);
    }
}
