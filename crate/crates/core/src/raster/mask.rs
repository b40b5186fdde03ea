use super::GridGeometry;
use crate::error::Result;
use crate::lane::{LanePolyline, Roi, Vec3};

/// Lane label image with a per-cell height.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneMask {
    geometry: GridGeometry,
    heights: Vec<Option<f64>>,
}

impl LaneMask {
    pub fn empty(roi: Roi, resolution: f64) -> Result<Self> {
        let geometry = GridGeometry::new(roi, resolution)?;
        Ok(Self {
            heights: vec![None; geometry.cell_count()],
            geometry,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn shape(&self) -> (usize, usize) {
        self.geometry.shape()
    }

    pub fn is_set(&self, ix: usize, iy: usize) -> bool {
        self.heights[self.geometry.flat(ix, iy)].is_some()
    }

    pub fn height(&self, ix: usize, iy: usize) -> Option<f64> {
        self.heights[self.geometry.flat(ix, iy)]
    }

    /// Flags a cell; non-finite heights are ignored.
    pub fn set(&mut self, ix: usize, iy: usize, height: f64) {
        if height.is_finite() {
            let i = self.geometry.flat(ix, iy);
            self.heights[i] = Some(height);
        }
    }

    pub fn flagged_count(&self) -> usize {
        self.heights.iter().filter(|h| h.is_some()).count()
    }

    /// `(ix, iy, height)` of every flagged cell, x-major.
    pub fn flagged(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.heights.iter().enumerate().filter_map(|(i, h)| {
            let (ix, iy) = self.geometry.unflat(i);
            h.map(|h| (ix, iy, h))
        })
    }
}

/// Liang–Barsky clip of the xy segment `a → b` to the closed roi; returns the
/// parameter interval kept.
fn clip_to_roi(a: &Vec3, b: &Vec3, roi: &Roi) -> Option<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for (p, q) in [
        (-dx, a.x - roi.x_min),
        (dx, roi.x_max - a.x),
        (-dy, a.y - roi.y_min),
        (dy, roi.y_max - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Parameters in `(t0, t1)` where `start + t·delta` crosses an integer.
fn crossings(start: f64, delta: f64, t0: f64, t1: f64, out: &mut Vec<f64>) {
    if delta == 0.0 {
        return;
    }
    let (g0, g1) = (start + t0 * delta, start + t1 * delta);
    let (lo, hi) = (g0.min(g1), g0.max(g1));
    let mut k = lo.floor() + 1.0;
    while k < hi {
        let t = (k - start) / delta;
        if t > t0 && t < t1 {
            out.push(t);
        }
        k += 1.0;
    }
}

/// Flags every cell a lane passes through.
///
/// Each segment is clipped to the roi and split at grid-line crossings; every
/// piece flags the cell containing its midpoint and contributes the
/// midpoint's height. A cell's height is the mean of its contributions.
/// Single-point lanes flag the cell under the point.
pub fn rasterize_lanes(lanes: &[LanePolyline], roi: Roi, resolution: f64) -> Result<LaneMask> {
    let mut mask = LaneMask::empty(roi, resolution)?;
    let g = mask.geometry;
    let mut sums = vec![(0.0_f64, 0_u32); g.cell_count()];
    let mut add = |x: f64, y: f64, z: f64| {
        let (gx, gy) = g.to_grid(x, y);
        let (ix, iy) = g.clamp_cell(gx, gy);
        let s = &mut sums[g.flat(ix, iy)];
        s.0 += z;
        s.1 += 1;
    };
    let mut ts = Vec::new();
    for lane in lanes {
        let pts = lane.points();
        if pts.len() == 1 {
            let p = pts[0];
            if roi.contains(p.x, p.y) {
                add(p.x, p.y, p.z);
            }
            continue;
        }
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let Some((t0, t1)) = clip_to_roi(&a, &b, &roi) else {
                continue;
            };
            let (ga, gb) = (g.to_grid(a.x, a.y), g.to_grid(b.x, b.y));
            ts.clear();
            ts.push(t0);
            crossings(ga.0, gb.0 - ga.0, t0, t1, &mut ts);
            crossings(ga.1, gb.1 - ga.1, t0, t1, &mut ts);
            ts.push(t1);
            ts.sort_by(f64::total_cmp);
            if t0 == t1 {
                let p = a + (b - a) * t0;
                add(p.x, p.y, p.z);
                continue;
            }
            for pair in ts.windows(2) {
                if pair[1] - pair[0] <= 1e-12 {
                    continue;
                }
                let p = a + (b - a) * (0.5 * (pair[0] + pair[1]));
                add(p.x, p.y, p.z);
            }
        }
    }
    for (i, (sum, n)) in sums.into_iter().enumerate() {
        if n > 0 {
            mask.heights[i] = Some(sum / n as f64);
        }
    }
    Ok(mask)
}

/// One proposal per flagged cell at the cell centre, x-major order.
pub fn lift_mask_to_3d(mask: &LaneMask) -> Vec<Vec3> {
    mask.flagged()
        .map(|(ix, iy, h)| {
            let (x, y) = mask.geometry.cell_center(ix, iy);
            Vec3::new(x, y, h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lane(points: &[[f64; 3]]) -> LanePolyline {
        LanePolyline::new(0, points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()).unwrap()
    }

    #[test]
    fn empty_lane_list_gives_empty_mask() {
        let mask = rasterize_lanes(&[], Roi::default(), 0.32).unwrap();
        assert_eq!(mask.flagged_count(), 0);
        assert!(lift_mask_to_3d(&mask).is_empty());
    }

    #[test]
    fn axis_aligned_lane_count() {
        let l = lane(&[[0.05, 0.1, -2.0], [3.25, 0.1, -2.0]]);
        let mask = rasterize_lanes(&[l], Roi::default(), 0.32).unwrap();
        let n = mask.flagged_count();
        assert!(n == 10 || n == 11, "{n}");
        let on_edges = lane(&[[0.0, 0.1, -2.0], [3.2, 0.1, -2.0]]);
        let n = rasterize_lanes(&[on_edges], Roi::default(), 0.32)
            .unwrap()
            .flagged_count();
        assert_eq!(n, 10);
    }

    #[test]
    fn single_cell_lift() {
        let mut mask = LaneMask::empty(Roi::default(), 0.32).unwrap();
        mask.set(150, 62, -1.9);
        let lifted = lift_mask_to_3d(&mask);
        assert_eq!(lifted.len(), 1);
        let (x, y) = mask.geometry().cell_center(150, 62);
        assert_eq!(lifted[0], Vec3::new(x, y, -1.9));
        assert!((x - 0.16).abs() < 1e-12 && (y - 0.0).abs() < 1e-12);
    }

    #[test]
    fn height_is_mean_of_pieces() {
        let roi = Roi::new(0.0, 2.0, 0.0, 2.0).unwrap();
        let l = lane(&[[0.0, 0.5, 0.0], [2.0, 0.5, 2.0]]);
        let mask = rasterize_lanes(&[l], roi, 1.0).unwrap();
        assert_eq!(mask.height(0, 0), Some(0.5));
        assert_eq!(mask.height(1, 0), Some(1.5));
    }

    #[test]
    fn clipped_lane_stays_in_roi() {
        let roi = Roi::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let l = lane(&[[-5.0, 0.5, 0.0], [5.0, 0.5, 0.0]]);
        let mask = rasterize_lanes(&[l], roi, 0.25).unwrap();
        assert_eq!(mask.flagged_count(), 4);
        let outside = lane(&[[-5.0, 3.0, 0.0], [5.0, 3.0, 0.0]]);
        assert_eq!(rasterize_lanes(&[outside], roi, 0.25).unwrap().flagged_count(), 0);
    }

    #[test]
    fn single_point_lane() {
        let l = lane(&[[1.0, 1.0, -2.0]]);
        let mask = rasterize_lanes(&[l], Roi::default(), 0.32).unwrap();
        assert_eq!(mask.flagged_count(), 1);
    }
}
