use serde::{Deserialize, Serialize};

use super::ransac::fit_with_index;
use super::{percentile, CloudIndex, PipelineConfig, Plane};
use crate::cubic::{fit_cubic, CubicCurve, CurveDimension};
use crate::error::{Error, Result};
use crate::lane::{
    order_lane_points, polyline_resample, LanePolyline, OrderingAxis, Point3I, PointCloud, Vec3,
    MIN_POINT_SEPARATION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    /// Within the validation threshold of its ground plane.
    Accepted,
    /// Height re-solved from the ground plane.
    Recalibrated,
    /// No usable ground plane; left unchanged.
    Unvalidated,
}

#[derive(Debug, Clone)]
pub struct Validation {
    pub lane: LanePolyline,
    pub status: Vec<PointStatus>,
    /// Perpendicular distance to the fitted plane before recalibration.
    pub plane_distance: Vec<Option<f64>>,
}

/// Checks each lane point against its local ground plane and pulls outliers
/// onto it, holding x and y fixed.
pub fn validate_and_recalibrate(
    lane: &LanePolyline,
    cloud: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<Validation> {
    validate_with_index(lane, &CloudIndex::new(cloud), cfg)
}

pub(crate) fn validate_with_index(
    lane: &LanePolyline,
    index: &CloudIndex,
    cfg: &PipelineConfig,
) -> Result<Validation> {
    let mut points = Vec::with_capacity(lane.len());
    let mut status = Vec::with_capacity(lane.len());
    let mut plane_distance = Vec::with_capacity(lane.len());
    for p in lane.points() {
        match fit_with_index(index, p, cfg.neighborhood_radius, cfg) {
            Ok(fit) => {
                let d = fit.plane.distance(p);
                plane_distance.push(Some(d));
                if d <= cfg.ransac_validate_threshold {
                    points.push(*p);
                    status.push(PointStatus::Accepted);
                } else {
                    points.push(Vec3::new(p.x, p.y, fit.plane.z_at(p.x, p.y)));
                    status.push(PointStatus::Recalibrated);
                }
            }
            Err(Error::InsufficientPoints { .. } | Error::DegenerateNeighborhood) => {
                points.push(*p);
                status.push(PointStatus::Unvalidated);
                plane_distance.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Validation {
        lane: LanePolyline::new(lane.instance_id(), points)?,
        status,
        plane_distance,
    })
}

/// Orders a lane along its axis and resamples it at `skeleton_spacing`.
pub fn skeletonize_lane(lane: &LanePolyline, cfg: &PipelineConfig) -> Result<LanePolyline> {
    if lane.len() < 2 {
        return Err(Error::DegenerateLane(
            "skeletonization needs at least two points".into(),
        ));
    }
    let ordered = LanePolyline::from_unclean(lane.instance_id(), order_lane_points(lane.points())?)?;
    if ordered.len() < 2 {
        return Err(Error::DegenerateLane("all lane points coincide".into()));
    }
    if let Some(i) = reversal(ordered.points()) {
        return Err(Error::DegenerateLane(format!(
            "lane doubles back at point {i}: no axis orders it monotonically"
        )));
    }
    polyline_resample(&ordered, cfg.skeleton_spacing)
}

/// Index of the first vertex where the xy path turns by more than 90°.
/// Sorting a U-shaped lane along any axis zigzags between its arms, which
/// shows up as such a turn.
fn reversal(points: &[Vec3]) -> Option<usize> {
    let links: Vec<(usize, [f64; 2])> = points
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i + 1, [w[1].x - w[0].x, w[1].y - w[0].y]))
        .filter(|(_, d)| d[0].hypot(d[1]) > MIN_POINT_SEPARATION)
        .collect();
    links
        .windows(2)
        .find(|w| w[0].1[0] * w[1].1[0] + w[0].1[1] * w[1].1[1] < 0.0)
        .map(|w| w[1].0 - 1)
}

/// Returns every cloud point near a skeletal point that is at least as
/// bright as the local ground and coplanar with it.
pub fn ball_query_expand(
    skeleton: &LanePolyline,
    cloud: &PointCloud,
    plane_per_point: &[Plane],
    cfg: &PipelineConfig,
) -> Result<Vec<Point3I>> {
    let idx = ball_query_expand_indices(skeleton, cloud, plane_per_point, cfg)?;
    Ok(idx.into_iter().map(|i| cloud.points[i]).collect())
}

/// Like [`ball_query_expand`] but returns ascending cloud indices.
pub fn ball_query_expand_indices(
    skeleton: &LanePolyline,
    cloud: &PointCloud,
    plane_per_point: &[Plane],
    cfg: &PipelineConfig,
) -> Result<Vec<usize>> {
    if plane_per_point.len() != skeleton.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} planes for {} skeletal points",
            plane_per_point.len(),
            skeleton.len()
        )));
    }
    let planes: Vec<Option<Plane>> = plane_per_point.iter().copied().map(Some).collect();
    Ok(expand_with_index(
        skeleton.points(),
        &planes,
        &CloudIndex::new(cloud),
        cfg,
    ))
}

/// Ground reference around a skeletal point: intensities of neighbourhood
/// points within the RANSAC inlier threshold of its plane.
fn intensity_threshold(s: &Vec3, plane: &Plane, index: &CloudIndex, cfg: &PipelineConfig) -> Option<f64> {
    let mut ground: Vec<f64> = Vec::new();
    let positions = index.positions();
    index
        .grid
        .for_each_within(s.x, s.y, cfg.neighborhood_radius, |i| {
            if plane.distance(&positions[i]) <= cfg.ransac_inlier_threshold {
                ground.push(index.intensities()[i]);
            }
        });
    percentile(&mut ground, cfg.intensity_percentile)
}

pub(crate) fn expand_with_index(
    skeleton: &[Vec3],
    planes: &[Option<Plane>],
    index: &CloudIndex,
    cfg: &PipelineConfig,
) -> Vec<usize> {
    let positions = index.positions();
    let intensities = index.intensities();
    let r2 = cfg.ball_radius * cfg.ball_radius;
    let mut selected = vec![false; positions.len()];
    for (s, plane) in skeleton.iter().zip(planes) {
        let Some(plane) = plane else { continue };
        let Some(threshold) = intensity_threshold(s, plane, index, cfg) else {
            continue;
        };
        index.grid.for_each_within(s.x, s.y, cfg.ball_radius, |i| {
            let p = &positions[i];
            if (p - s).norm_squared() <= r2
                && intensities[i] >= threshold
                && plane.distance(p) <= cfg.coplanarity_tol
            {
                selected[i] = true;
            }
        });
    }
    selected
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Interpolation {
    pub lane: LanePolyline,
    pub lateral: CubicCurve,
    pub vertical: CubicCurve,
}

/// Fits lateral and vertical cubics over the ordering axis and samples them
/// every `interp_spacing` from the first to the last abscissa.
pub fn interpolate_lane(points: &[Point3I], cfg: &PipelineConfig) -> Result<Interpolation> {
    let positions: Vec<Vec3> = points.iter().map(|p| p.position()).collect();
    interpolate_positions(&positions, cfg)
}

pub(crate) fn interpolate_positions(positions: &[Vec3], cfg: &PipelineConfig) -> Result<Interpolation> {
    if positions.is_empty() {
        return Err(Error::RankDeficient { distinct: 0 });
    }
    let axis = OrderingAxis::for_points(positions)?;
    let u: Vec<f64> = positions.iter().map(|p| axis.key(p)).collect();
    let lateral_samples: Vec<(f64, f64)> =
        u.iter().zip(positions).map(|(&u, p)| (u, axis.lateral(p))).collect();
    let vertical_samples: Vec<(f64, f64)> = u.iter().zip(positions).map(|(&u, p)| (u, p.z)).collect();
    let lateral = fit_cubic(&lateral_samples)?.with_axis(axis, CurveDimension::Lateral);
    let vertical = fit_cubic(&vertical_samples)?.with_axis(axis, CurveDimension::Vertical);

    let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let u_max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut stations = Vec::new();
    let mut k = 0u64;
    loop {
        let s = u_min + k as f64 * cfg.interp_spacing;
        if s >= u_max - MIN_POINT_SEPARATION {
            break;
        }
        stations.push(s);
        k += 1;
    }
    stations.push(u_max);

    let out = stations
        .into_iter()
        .map(|s| {
            let (x, y) = axis.to_xy(s, lateral.eval(s));
            Vec3::new(x, y, vertical.eval(s))
        })
        .collect();
    Ok(Interpolation {
        lane: LanePolyline::from_unclean(0, out)?,
        lateral,
        vertical,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum LaneStatus {
    Ok,
    Failed { stage: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneReport {
    pub instance_id: u32,
    pub status: LaneStatus,
    pub input_points: usize,
    pub accepted: usize,
    pub recalibrated: usize,
    pub unvalidated: usize,
    pub skeletal_points: usize,
    /// Skeletal points without a usable ground plane.
    pub skeletal_without_plane: usize,
    pub expanded_points: usize,
    pub output_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lateral: Option<CubicCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertical: Option<CubicCurve>,
}

impl LaneReport {
    fn new(lane: &LanePolyline) -> Self {
        Self {
            instance_id: lane.instance_id(),
            status: LaneStatus::Ok,
            input_points: lane.len(),
            accepted: 0,
            recalibrated: 0,
            unvalidated: 0,
            skeletal_points: 0,
            skeletal_without_plane: 0,
            expanded_points: 0,
            output_points: 0,
            lateral: None,
            vertical: None,
        }
    }

    fn fail(&mut self, stage: &str, err: impl ToString) {
        self.status = LaneStatus::Failed {
            stage: stage.into(),
            reason: err.to_string(),
        };
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub lanes: Vec<LaneReport>,
}

impl PipelineReport {
    pub fn failed(&self) -> usize {
        self.lanes
            .iter()
            .filter(|l| matches!(l.status, LaneStatus::Failed { .. }))
            .count()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub lanes: Vec<LanePolyline>,
    pub report: PipelineReport,
}

/// Densifies every manual lane; a failing lane is reported and skipped.
pub fn run_pipeline(
    cloud: &PointCloud,
    manual_lanes: &[LanePolyline],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let mut out = PipelineOutput {
        lanes: Vec::new(),
        report: PipelineReport::default(),
    };
    if manual_lanes.is_empty() {
        return Ok(out);
    }
    let index = CloudIndex::new(cloud);
    for lane in manual_lanes {
        let mut report = LaneReport::new(lane);
        if let Some(dense) = process_lane(lane, &index, cfg, &mut report) {
            out.lanes.push(dense);
        }
        out.report.lanes.push(report);
    }
    Ok(out)
}

fn process_lane(
    lane: &LanePolyline,
    index: &CloudIndex,
    cfg: &PipelineConfig,
    report: &mut LaneReport,
) -> Option<LanePolyline> {
    if lane.len() < cfg.min_lane_points {
        report.fail(
            "input",
            format!("{} manual points, need at least {}", lane.len(), cfg.min_lane_points),
        );
        return None;
    }

    let validation = match validate_with_index(lane, index, cfg) {
        Ok(v) => v,
        Err(e) => {
            report.fail("validate", e);
            return None;
        }
    };
    for s in &validation.status {
        match s {
            PointStatus::Accepted => report.accepted += 1,
            PointStatus::Recalibrated => report.recalibrated += 1,
            PointStatus::Unvalidated => report.unvalidated += 1,
        }
    }

    let skeleton = match skeletonize_lane(&validation.lane, cfg) {
        Ok(s) => s,
        Err(e) => {
            report.fail("skeletonize", e);
            return None;
        }
    };
    report.skeletal_points = skeleton.len();

    let planes: Vec<Option<Plane>> = skeleton
        .points()
        .iter()
        .map(|s| fit_with_index(index, s, cfg.neighborhood_radius, cfg).ok().map(|f| f.plane))
        .collect();
    report.skeletal_without_plane = planes.iter().filter(|p| p.is_none()).count();

    let expanded = expand_with_index(skeleton.points(), &planes, index, cfg);
    report.expanded_points = expanded.len();
    let positions: Vec<Vec3> = expanded.iter().map(|&i| index.positions()[i]).collect();

    match interpolate_positions(&positions, cfg) {
        Ok(interp) => {
            report.output_points = interp.lane.len();
            report.lateral = Some(interp.lateral);
            report.vertical = Some(interp.vertical);
            Some(interp.lane.with_instance_id(lane.instance_id()))
        }
        Err(e) => {
            report.fail("interpolate", e);
            None
        }
    }
}
