//! Point and lane primitives shared by every other module.
//!
//! Positions are carried as `f64` vectors; raw sensor points keep the `f32`
//! precision of the on-disk cloud format so that a cloud read from disk and
//! the in-memory cloud it was written from are identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Minimum separation between consecutive lane points.
pub const MIN_POINT_SEPARATION: f64 = 1e-9;

/// A single LiDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3I {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point3I {
    pub fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    /// Rounds an `f64` position to sensor precision.
    pub fn from_position(p: &Vec3, intensity: f64) -> Self {
        Self::new(p.x as f32, p.y as f32, p.z as f32, intensity as f32)
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x as f64, self.y as f64, self.z as f64)
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(Error::InvalidPoint {
                index,
                reason: "non-finite coordinate".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::InvalidPoint {
                index,
                reason: format!("intensity {} outside [0, 1]", self.intensity),
            });
        }
        Ok(())
    }
}

/// One raw sensor frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub frame_id: String,
    pub points: Vec<Point3I>,
}

impl PointCloud {
    pub fn new(frame_id: impl Into<String>, points: Vec<Point3I>) -> Result<Self> {
        let cloud = Self {
            frame_id: frame_id.into(),
            points,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        self.points
            .iter()
            .enumerate()
            .try_for_each(|(i, p)| p.validate(i))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// An ordered lane annotation with its instance id.
#[derive(Debug, Clone, PartialEq)]
pub struct LanePolyline {
    instance_id: u32,
    points: Vec<Vec3>,
}

impl LanePolyline {
    pub fn new(instance_id: u32, points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyLane);
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidPoint {
                    index: i,
                    reason: "non-finite coordinate".into(),
                });
            }
        }
        if let Some(i) = points
            .windows(2)
            .position(|w| (w[1] - w[0]).norm() <= MIN_POINT_SEPARATION)
        {
            return Err(Error::DegenerateLane(format!(
                "points {i} and {} coincide",
                i + 1
            )));
        }
        Ok(Self {
            instance_id,
            points,
        })
    }

    /// Builds a lane after dropping consecutive duplicates.
    pub fn from_unclean(instance_id: u32, mut points: Vec<Vec3>) -> Result<Self> {
        points.dedup_by(|b, a| (*b - *a).norm() <= MIN_POINT_SEPARATION);
        Self::new(instance_id, points)
    }

    pub fn instance_id(&self) -> u32 {
        self.instance_id
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        polyline_length(&self.points)
    }

    pub fn with_instance_id(mut self, instance_id: u32) -> Self {
        self.instance_id = instance_id;
        self
    }
}

/// Axis along which a lane's points are ordered and parametrized.
///
/// `X` keeps the frontal-lane convention of linking points toward +x. Lanes
/// whose lateral extent dominates use the first principal component of their
/// xy coordinates instead, oriented toward +x (or +y when exactly vertical).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderingAxis {
    X,
    Principal { origin: [f64; 2], direction: [f64; 2] },
}

impl OrderingAxis {
    pub fn for_points(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyLane);
        }
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            min_x = min_x.min(p.x);
            max_x = max_x.max(p.x);
            min_y = min_y.min(p.y);
            max_y = max_y.max(p.y);
        }
        if max_x - min_x >= max_y - min_y {
            return Ok(OrderingAxis::X);
        }

        let n = points.len() as f64;
        let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
        let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for p in points {
            let (dx, dy) = (p.x - cx, p.y - cy);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let (mut dx, mut dy) = (theta.cos(), theta.sin());
        if dx.abs() < 1e-12 {
            dx = 0.0;
            dy = dy.signum();
        } else if dx < 0.0 {
            dx = -dx;
            dy = -dy;
        }
        Ok(OrderingAxis::Principal {
            origin: [cx, cy],
            direction: [dx, dy],
        })
    }

    /// Coordinate along the axis.
    pub fn key(&self, p: &Vec3) -> f64 {
        match self {
            OrderingAxis::X => p.x,
            OrderingAxis::Principal { origin, direction } => {
                (p.x - origin[0]) * direction[0] + (p.y - origin[1]) * direction[1]
            }
        }
    }

    /// Signed coordinate perpendicular to the axis in the xy plane.
    pub fn lateral(&self, p: &Vec3) -> f64 {
        match self {
            OrderingAxis::X => p.y,
            OrderingAxis::Principal { origin, direction } => {
                -(p.x - origin[0]) * direction[1] + (p.y - origin[1]) * direction[0]
            }
        }
    }

    /// Inverse of (`key`, `lateral`).
    pub fn to_xy(&self, u: f64, lateral: f64) -> (f64, f64) {
        match self {
            OrderingAxis::X => (u, lateral),
            OrderingAxis::Principal { origin, direction } => (
                origin[0] + u * direction[0] - lateral * direction[1],
                origin[1] + u * direction[1] + lateral * direction[0],
            ),
        }
    }
}

/// Sorts lane points along their ordering axis; ties break by y, then z.
pub fn order_lane_points(points: &[Vec3]) -> Result<Vec<Vec3>> {
    let axis = OrderingAxis::for_points(points)?;
    let mut keyed: Vec<(f64, Vec3)> = points.iter().map(|p| (axis.key(p), *p)).collect();
    keyed.sort_by(|(ka, a), (kb, b)| {
        ka.total_cmp(kb)
            .then(a.y.total_cmp(&b.y))
            .then(a.z.total_cmp(&b.z))
    });
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}

pub fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Cumulative arc length at each vertex, starting at 0.
pub fn cumulative_arc_length(points: &[Vec3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in points.windows(2) {
        acc += (w[1] - w[0]).norm();
        out.push(acc);
    }
    out.truncate(points.len());
    out
}

/// Point at arc length `s`, clamped to the polyline's extent. Stations
/// within 1e-9 of a vertex return that vertex exactly.
pub fn point_at_arc_length(points: &[Vec3], cumulative: &[f64], s: f64) -> Vec3 {
    let last = points.len() - 1;
    if s <= 0.0 || last == 0 {
        return points[0];
    }
    if s >= cumulative[last] {
        return points[last];
    }
    // First vertex strictly past s.
    let hi = cumulative.partition_point(|&c| c <= s).clamp(1, last);
    let lo = hi - 1;
    if s - cumulative[lo] <= MIN_POINT_SEPARATION {
        return points[lo];
    }
    if cumulative[hi] - s <= MIN_POINT_SEPARATION {
        return points[hi];
    }
    let seg = cumulative[hi] - cumulative[lo];
    let t = if seg > 0.0 { (s - cumulative[lo]) / seg } else { 0.0 };
    points[lo] + (points[hi] - points[lo]) * t
}

/// Resamples a lane at equal arc-length spacing, keeping both endpoints.
pub fn polyline_resample(lane: &LanePolyline, spacing: f64) -> Result<LanePolyline> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "resample spacing must be positive, got {spacing}"
        )));
    }
    let points = lane.points();
    if points.len() < 2 {
        return Err(Error::DegenerateLane(
            "resampling needs at least two points".into(),
        ));
    }
    let cumulative = cumulative_arc_length(points);
    let total = *cumulative.last().unwrap();
    let mut out = Vec::with_capacity((total / spacing) as usize + 2);
    let mut k = 0u64;
    loop {
        let s = k as f64 * spacing;
        if s >= total - MIN_POINT_SEPARATION {
            break;
        }
        out.push(point_at_arc_length(points, &cumulative, s));
        k += 1;
    }
    out.push(points[points.len() - 1]);
    LanePolyline::new(lane.instance_id(), out)
}

/// Closest point on a polyline: `(distance, arc-length station)`.
pub fn project_onto_polyline(p: &Vec3, points: &[Vec3]) -> (f64, f64) {
    if points.len() == 1 {
        return ((p - points[0]).norm(), 0.0);
    }
    let mut best = (f64::INFINITY, 0.0);
    let mut station = 0.0;
    for w in points.windows(2) {
        let d = w[1] - w[0];
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 {
            ((p - w[0]).dot(&d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let dist = (p - (w[0] + d * t)).norm();
        let len = len2.sqrt();
        if dist < best.0 {
            best = (dist, station + t * len);
        }
        station += len;
    }
    best
}

pub fn distance_to_polyline(p: &Vec3, points: &[Vec3]) -> f64 {
    project_onto_polyline(p, points).0
}

/// Axis-aligned xy region of interest, serialized as `[x_min, x_max, y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Roi {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Roi {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let roi = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || x_max <= x_min || y_max <= y_min {
            return Err(Error::InvalidConfig(format!(
                "roi [{x_min}, {x_max}, {y_min}, {y_max}] is empty or non-finite"
            )));
        }
        Ok(roi)
    }

    pub fn width_x(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn width_y(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width_x() * self.width_y()
    }

    /// Closed-interval containment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

impl Default for Roi {
    /// 96 m × 40 m around the sensor.
    fn default() -> Self {
        Self {
            x_min: -48.0,
            x_max: 48.0,
            y_min: -20.0,
            y_max: 20.0,
        }
    }
}

impl TryFrom<[f64; 4]> for Roi {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Roi::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Roi> for [f64; 4] {
    fn from(r: Roi) -> Self {
        [r.x_min, r.x_max, r.y_min, r.y_max]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn lane(points: Vec<Vec3>) -> LanePolyline {
        LanePolyline::new(0, points).unwrap()
    }

    #[test]
    fn orders_along_positive_x() {
        let out = order_lane_points(&[v(2., 0., 0.), v(0., 0., 0.), v(1., 0., 0.)]).unwrap();
        assert_eq!(out, vec![v(0., 0., 0.), v(1., 0., 0.), v(2., 0., 0.)]);
    }

    #[test]
    fn sorted_input_is_unchanged() {
        let pts = vec![v(0., 0.1, 0.), v(1., 0.3, 0.), v(2.5, 0.2, 0.)];
        assert_eq!(order_lane_points(&pts).unwrap(), pts);
    }

    #[test]
    fn lateral_lane_uses_principal_axis() {
        let out = order_lane_points(&[v(0., 3., 0.), v(0., 1., 0.), v(0., 2., 0.)]).unwrap();
        assert_eq!(out, vec![v(0., 1., 0.), v(0., 2., 0.), v(0., 3., 0.)]);
        let axis = OrderingAxis::for_points(&out).unwrap();
        assert!(matches!(axis, OrderingAxis::Principal { .. }));
    }

    #[test]
    fn ties_break_on_y_then_z() {
        let out = order_lane_points(&[v(1., 0.5, 0.), v(1., 0.2, 0.3), v(1., 0.2, 0.1), v(0., 0.4, 0.)])
            .unwrap();
        assert_eq!(
            out,
            vec![v(0., 0.4, 0.), v(1., 0.2, 0.1), v(1., 0.2, 0.3), v(1., 0.5, 0.)]
        );
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(order_lane_points(&[]), Err(Error::EmptyLane)));
    }

    #[test]
    fn axis_round_trips_coordinates() {
        let axis = OrderingAxis::Principal {
            origin: [1.0, -2.0],
            direction: [0.6, 0.8],
        };
        let p = v(3.5, 4.25, 0.0);
        let (x, y) = axis.to_xy(axis.key(&p), axis.lateral(&p));
        assert!((x - p.x).abs() < 1e-12 && (y - p.y).abs() < 1e-12);
    }

    #[test]
    fn resample_uniform_segment() {
        let out = polyline_resample(&lane(vec![v(0., 0., 0.), v(10., 0., 0.)]), 2.0).unwrap();
        let xs: Vec<f64> = out.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0., 2., 4., 6., 8., 10.]);
    }

    #[test]
    fn resample_keeps_endpoints_when_spacing_exceeds_length() {
        let out = polyline_resample(&lane(vec![v(0., 0., 0.), v(1., 0., 0.)]), 5.0).unwrap();
        assert_eq!(out.points(), &[v(0., 0., 0.), v(1., 0., 0.)]);
    }

    #[test]
    fn resample_l_shape() {
        let l = lane(vec![v(0., 0., 0.), v(3., 0., 0.), v(3., 4., 0.)]);
        // Oracle: cumulative segment sums give stations 0..=7 at unit spacing.
        let total: f64 = [3.0, 4.0].iter().sum();
        assert_eq!(total, 7.0);
        let out = polyline_resample(&l, 1.0).unwrap();
        assert_eq!(out.len(), 8);
        assert!((out.arc_length() - 7.0).abs() < 1e-12);
        assert_eq!(out.points()[3], v(3., 0., 0.));
        assert_eq!(out.points()[5], v(3., 2., 0.));
    }

    #[test]
    fn resample_rejects_single_point_and_bad_spacing() {
        let single = lane(vec![v(0., 0., 0.)]);
        assert!(matches!(
            polyline_resample(&single, 1.0),
            Err(Error::DegenerateLane(_))
        ));
        let seg = lane(vec![v(0., 0., 0.), v(1., 0., 0.)]);
        assert!(matches!(
            polyline_resample(&seg, 0.0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn lane_rejects_coincident_neighbours() {
        assert!(matches!(
            LanePolyline::new(1, vec![v(0., 0., 0.), v(0., 0., 0.)]),
            Err(Error::DegenerateLane(_))
        ));
        assert!(matches!(LanePolyline::new(1, vec![]), Err(Error::EmptyLane)));
        let l = LanePolyline::from_unclean(1, vec![v(0., 0., 0.), v(0., 0., 0.), v(1., 0., 0.)])
            .unwrap();
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn point_validation() {
        assert!(Point3I::new(0., 0., 0., 0.5).validate(0).is_ok());
        assert!(Point3I::new(f32::NAN, 0., 0., 0.5).validate(0).is_err());
        assert!(Point3I::new(0., 0., 0., 1.5).validate(0).is_err());
    }

    #[test]
    fn projection_reports_station() {
        let pts = [v(0., 0., 0.), v(3., 0., 0.), v(3., 4., 0.)];
        let (d, s) = project_onto_polyline(&v(4., 2., 0.), &pts);
        assert!((d - 1.0).abs() < 1e-12);
        assert!((s - 5.0).abs() < 1e-12);
    }
}
