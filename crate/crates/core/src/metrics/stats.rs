use serde::{Deserialize, Serialize};

use crate::cubic::fit_cubic;
use crate::error::{Error, Result};
use crate::lane::{LanePolyline, OrderingAxis, Roi};

/// Equal-width bins over `[min, max)`; values outside clamp into the edge bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl HistogramConfig {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) || self.bins == 0 {
            return Err(Error::InvalidConfig(format!(
                "stats: {name} histogram needs min < max and bins >= 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XyHistogramConfig {
    pub roi: Roi,
    pub cell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub xy: XyHistogramConfig,
    /// Lane point heights (m).
    pub height: HistogramConfig,
    /// Cubic coefficient `a` (1/m²).
    pub curvature_a: HistogramConfig,
    /// Endpoint slope (degrees).
    pub slope_deg: HistogramConfig,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            xy: XyHistogramConfig {
                roi: Roi::default(),
                cell: 1.0,
            },
            height: HistogramConfig {
                min: -4.0,
                max: 1.0,
                bins: 50,
            },
            curvature_a: HistogramConfig {
                min: -0.005,
                max: 0.005,
                bins: 50,
            },
            slope_deg: HistogramConfig {
                min: -5.0,
                max: 5.0,
                bins: 50,
            },
        }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xy.cell > 0.0 && self.xy.cell.is_finite()) {
            return Err(Error::InvalidConfig("stats: xy cell must be > 0".into()));
        }
        self.height.validate("height")?;
        self.curvature_a.validate("curvature_a")?;
        self.slope_deg.validate("slope_deg")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<u64>,
    /// Values below `min` or at/above `max`, already folded into the edge bins.
    pub clamped: u64,
}

impl Histogram1D {
    pub fn new(cfg: &HistogramConfig) -> Self {
        Self {
            min: cfg.min,
            max: cfg.max,
            counts: vec![0; cfg.bins],
            clamped: 0,
        }
    }

    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / self.counts.len() as f64
    }

    pub fn add(&mut self, v: f64) {
        let n = self.counts.len();
        let b = ((v - self.min) / self.bin_width()).floor();
        if b < 0.0 || b >= n as f64 {
            self.clamped += 1;
        }
        let i = (b.max(0.0) as usize).min(n - 1);
        self.counts[i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(lower edge, upper edge)` of bin `i`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.min + i as f64 * w, self.min + (i + 1) as f64 * w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub roi: Roi,
    pub cell: f64,
    /// `counts[ix][iy]`.
    pub counts: Vec<Vec<u64>>,
    pub clamped: u64,
}

impl Histogram2D {
    pub fn new(cfg: &XyHistogramConfig) -> Self {
        let nx = ((cfg.roi.width_x() / cfg.cell).ceil() as usize).max(1);
        let ny = ((cfg.roi.width_y() / cfg.cell).ceil() as usize).max(1);
        Self {
            roi: cfg.roi,
            cell: cfg.cell,
            counts: vec![vec![0; ny]; nx],
            clamped: 0,
        }
    }

    pub fn add(&mut self, x: f64, y: f64) {
        let (nx, ny) = (self.counts.len(), self.counts[0].len());
        let bx = ((x - self.roi.x_min) / self.cell).floor();
        let by = ((y - self.roi.y_min) / self.cell).floor();
        if bx < 0.0 || by < 0.0 || bx >= nx as f64 || by >= ny as f64 {
            self.clamped += 1;
        }
        let ix = (bx.max(0.0) as usize).min(nx - 1);
        let iy = (by.max(0.0) as usize).min(ny - 1);
        self.counts[ix][iy] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneStats {
    pub instance_id: u32,
    pub points: usize,
    /// Cubic coefficient over the lane's ordering axis.
    pub a: Option<f64>,
    pub slope_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub lane_count: usize,
    pub point_count: usize,
    /// Lanes without a cubic fit: fewer than 4 points or 4 distinct abscissae.
    pub skipped_curvature: usize,
    /// Lanes with no horizontal extent.
    pub skipped_slope: usize,
    pub xy: Histogram2D,
    pub height: Histogram1D,
    pub curvature_a: Histogram1D,
    pub slope_deg: Histogram1D,
    pub lanes: Vec<LaneStats>,
}

fn lane_curvature(lane: &LanePolyline) -> Option<f64> {
    if lane.len() < 4 {
        return None;
    }
    let axis = OrderingAxis::for_points(lane.points()).ok()?;
    let samples: Vec<(f64, f64)> = lane.points().iter().map(|p| (axis.key(p), axis.lateral(p))).collect();
    fit_cubic(&samples).ok().map(|c| c.a)
}

/// Endpoint height change over horizontal arc length, in degrees.
fn lane_slope(lane: &LanePolyline) -> Option<f64> {
    let pts = lane.points();
    let xy_len: f64 = pts.windows(2).map(|w| (w[1] - w[0]).xy().norm()).sum();
    if xy_len <= 1e-9 {
        return None;
    }
    let dz = pts[pts.len() - 1].z - pts[0].z;
    Some((dz / xy_len).atan().to_degrees())
}

/// Coordinate, height, curvature and slope distributions of a lane set.
pub fn dataset_stats(lanes: &[LanePolyline], cfg: &StatsConfig) -> Result<StatsReport> {
    cfg.validate()?;
    if lanes.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut report = StatsReport {
        lane_count: lanes.len(),
        point_count: 0,
        skipped_curvature: 0,
        skipped_slope: 0,
        xy: Histogram2D::new(&cfg.xy),
        height: Histogram1D::new(&cfg.height),
        curvature_a: Histogram1D::new(&cfg.curvature_a),
        slope_deg: Histogram1D::new(&cfg.slope_deg),
        lanes: Vec::with_capacity(lanes.len()),
    };
    for lane in lanes {
        report.point_count += lane.len();
        for p in lane.points() {
            report.xy.add(p.x, p.y);
            report.height.add(p.z);
        }
        let a = lane_curvature(lane);
        match a {
            Some(a) => report.curvature_a.add(a),
            None => report.skipped_curvature += 1,
        }
        let slope = lane_slope(lane);
        match slope {
            Some(s) => report.slope_deg.add(s),
            None => report.skipped_slope += 1,
        }
        report.lanes.push(LaneStats {
            instance_id: lane.instance_id(),
            points: lane.len(),
            a,
            slope_deg: slope,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lane::Vec3;

    #[test]
    fn straight_flat_lane() {
        let lane = LanePolyline::new(
            0,
            (0..10).map(|i| Vec3::new(i as f64, 1.5, -2.0)).collect(),
        )
        .unwrap();
        let r = dataset_stats(&[lane], &StatsConfig::default()).unwrap();
        assert!(r.lanes[0].a.unwrap().abs() < 1e-9);
        assert_eq!(r.lanes[0].slope_deg, Some(0.0));
        assert_eq!(r.height.total(), 10);
        assert_eq!(r.xy.total(), 10);
    }

    #[test]
    fn short_lanes_are_counted_not_fitted() {
        let short = LanePolyline::new(1, vec![Vec3::new(0., 0., 0.), Vec3::new(1., 0., 1.)]).unwrap();
        let dot = LanePolyline::new(2, vec![Vec3::new(0., 0., 0.)]).unwrap();
        let r = dataset_stats(&[short, dot], &StatsConfig::default()).unwrap();
        assert_eq!(r.skipped_curvature, 2);
        assert_eq!(r.skipped_slope, 1);
        assert!((r.lanes[0].slope_deg.unwrap() - 45.0).abs() < 1e-12);
        assert_eq!(r.slope_deg.total(), 1);
        assert_eq!(r.slope_deg.clamped, 1);
    }

    #[test]
    fn histogram_clamps_to_edges() {
        let mut h = Histogram1D::new(&HistogramConfig {
            min: 0.0,
            max: 1.0,
            bins: 4,
        });
        for v in [-5.0, 0.0, 0.25, 0.99, 1.0, 7.0] {
            h.add(v);
        }
        assert_eq!(h.counts, vec![2, 1, 0, 3]);
        assert_eq!(h.clamped, 3);
        assert_eq!(h.edges(1), (0.25, 0.5));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(dataset_stats(&[], &StatsConfig::default()), Err(Error::EmptySet)));
    }
}
